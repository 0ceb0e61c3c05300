#include "effortgen/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "effortgen/errors.hpp"

namespace effortgen::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != product(shape_)) {
    throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, const double* values)
    : shape_(std::move(shape)), data_(values, values + product(shape_)) {}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (product(shape) != data_.size()) {
    throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_.data());
}

MatrixMap Tensor::matrix() {
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

ConstMatrixMap Tensor::matrix() const {
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.size() != size()) {
    throw ValidationError("tensor add: shape " + shape_string(shape_) + " vs " +
                          shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] += other.data_[i];
  }
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) {
    v *= s;
  }
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) {
  a += b;
  return a;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ValidationError("tensor subtract: size mismatch");
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] -= b[i];
  }
  return out;
}

Tensor operator*(double s, Tensor a) {
  a *= s;
  return a;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ValidationError("max_abs_diff: size mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) {
      s += " x ";
    }
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

} // namespace effortgen::nn
