#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

namespace effortgen::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Row-major dense array of doubles. Storage is aligned to the widest vector
// width so that Eigen kernels take the same code path on every allocation and
// results are reproducible from run to run.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Same data, new shape with an equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  // View as [rows x cols] where cols is the last dimension.
  MatrixMap matrix();
  ConstMatrixMap matrix() const;
  std::size_t rows() const { return shape_.empty() ? 0 : data_.size() / shape_.back(); }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  void fill(double v);
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  Tensor(std::vector<std::size_t> shape, const double* values);

  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, Tensor a);

double max_abs_diff(const Tensor& a, const Tensor& b);
std::string shape_string(const std::vector<std::size_t>& shape);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

using ParameterList = std::vector<Parameter*>;

} // namespace effortgen::nn
