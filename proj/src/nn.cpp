#include "effortgen/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "effortgen/errors.hpp"

namespace effortgen::nn {

namespace {

double sorted_sum(std::span<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) {
    s += v;
  }
  return s;
}

void require(bool ok, const std::string& what) {
  if (!ok) {
    throw ValidationError(what);
  }
}

} // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), "softmax axis out of range");
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) {
    outer *= x.dim(i);
  }
  for (std::size_t i = axis + 1; i < x.rank(); ++i) {
    inner *= x.dim(i);
  }
  const std::size_t n = x.dim(axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < n; ++k) {
        mx = std::max(mx, x[base + k * inner]);
      }
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        sum += e;
      }
      for (std::size_t k = 0; k < n; ++k) {
        out[base + k * inner] /= sum;
      }
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, std::span<const double> gamma, std::span<const double> beta,
                  double eps) {
  const std::size_t d = x.cols();
  require(gamma.size() == d && beta.size() == d, "layer_norm: gamma/beta size mismatch");
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* row = x.ptr() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      mean += row[i];
    }
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      var += (row[i] - mean) * (row[i] - mean);
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) {
      out[r * d + i] = gamma[i] * (row[i] - mean) * inv + beta[i];
    }
  }
  return out;
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double th = std::tanh(c * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

Tensor dropout(const Tensor& x, double rate, Rng* rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1)");
  if (rng == nullptr || rate == 0.0) {
    return x;
  }
  Tensor out = x;
  const double keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = rng->uniform() < rate ? 0.0 : out[i] * keep;
  }
  return out;
}

std::vector<double> sinusoidal_embedding(double position, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(position * freq);
    out[half + i] = std::cos(position * freq);
  }
  return out;
}

// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", Tensor({out, in})), bias(name + ".bias", Tensor({out})) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : weight.value.data()) {
    w = rng.uniform(-bound, bound);
  }
  for (double& b : bias.value.data()) {
    b = rng.uniform(-bound, bound);
  }
}

Tensor Linear::forward(const Tensor& x) const {
  require(x.cols() == in_features(), "linear: input width " + std::to_string(x.cols()) +
                                         " != " + std::to_string(in_features()));
  std::vector<std::size_t> shape = x.shape();
  shape.back() = out_features();
  Tensor y(shape);
  auto ym = y.matrix();
  // Coefficient-wise product: every row is rounded the same way regardless of
  // its position, which blocked GEMM does not guarantee.
  ym.noalias() = x.matrix().lazyProduct(weight.value.matrix().transpose());
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value.ptr(),
                                                       static_cast<Eigen::Index>(out_features()));
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& dy) {
  require(dy.cols() == out_features() && dy.rows() == x.rows(), "linear backward: shape mismatch");
  weight.grad.matrix().noalias() += dy.matrix().transpose() * x.matrix();
  Eigen::Map<Eigen::RowVectorXd>(bias.grad.ptr(), static_cast<Eigen::Index>(out_features())) +=
      dy.matrix().colwise().sum();
  Tensor dx(x.shape());
  dx.matrix().noalias() = dy.matrix() * weight.value.matrix();
  return dx;
}

void Linear::zero_init() {
  weight.value.fill(0.0);
  bias.value.fill(0.0);
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gamma(name + ".gamma", Tensor({dim}, 1.0)), beta(name + ".beta", Tensor({dim})) {}

Tensor LayerNorm::forward(const Tensor& x, Cache& cache) const {
  const std::size_t d = x.cols();
  require(d == gamma.value.size(), "layer norm: width mismatch");
  const std::size_t rows = x.rows();
  cache.normalized = Tensor(x.shape());
  cache.inv_std.assign(rows, 0.0);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.ptr() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      mean += row[i];
    }
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      var += (row[i] - mean) * (row[i] - mean);
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    cache.inv_std[r] = inv;
    for (std::size_t i = 0; i < d; ++i) {
      const double n = (row[i] - mean) * inv;
      cache.normalized[r * d + i] = n;
      y[r * d + i] = gamma.value[i] * n + beta.value[i];
    }
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& dy, const Cache& cache) {
  const std::size_t d = dy.cols();
  const std::size_t rows = dy.rows();
  Tensor dx(dy.shape());
  std::vector<double> dn(d);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean_dn = 0.0;
    double mean_dn_n = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double g = dy[r * d + i];
      const double n = cache.normalized[r * d + i];
      gamma.grad[i] += g * n;
      beta.grad[i] += g;
      dn[i] = g * gamma.value[i];
      mean_dn += dn[i];
      mean_dn_n += dn[i] * n;
    }
    mean_dn /= static_cast<double>(d);
    mean_dn_n /= static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
      dx[r * d + i] =
          cache.inv_std[r] * (dn[i] - mean_dn - cache.normalized[r * d + i] * mean_dn_n);
    }
  }
  return dx;
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// ---------------------------------------------------------------------------

FeedForward::FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng)
    : up(name + ".up", dim, hidden, rng), down(name + ".down", hidden, dim, rng) {}

Tensor FeedForward::forward(const Tensor& x, Cache& cache) const {
  cache.input = x;
  cache.hidden = up.forward(x);
  Tensor act = cache.hidden;
  for (double& v : act.data()) {
    v = gelu(v);
  }
  return down.forward(act);
}

Tensor FeedForward::backward(const Tensor& dy, const Cache& cache) {
  Tensor act = cache.hidden;
  for (double& v : act.data()) {
    v = gelu(v);
  }
  Tensor dact = down.backward(act, dy);
  for (std::size_t i = 0; i < dact.size(); ++i) {
    dact[i] *= gelu_grad(cache.hidden[i]);
  }
  return up.backward(cache.input, dact);
}

void FeedForward::collect(ParameterList& out) {
  up.collect(out);
  down.collect(out);
}

// ---------------------------------------------------------------------------

Film::Film(const std::string& name, std::size_t cond_dim, std::size_t dim, Rng& rng)
    : scale(name + ".scale", cond_dim, dim, rng), shift(name + ".shift", cond_dim, dim, rng) {
  scale.zero_init();
  shift.zero_init();
}

Tensor Film::forward(const Tensor& x, const Tensor& cond, Cache& cache) const {
  const std::size_t d = x.cols();
  require(d == scale.out_features(), "film: width mismatch");
  cache.scale = scale.forward(cond.reshaped({1, cond.size()}));
  cache.shift = shift.forward(cond.reshaped({1, cond.size()}));
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      y[r * d + i] = x[r * d + i] * (1.0 + cache.scale[i]) + cache.shift[i];
    }
  }
  return y;
}

Tensor Film::backward(const Tensor& x, const Tensor& dy, const Tensor& cond, const Cache& cache,
                      Tensor& dcond) {
  const std::size_t d = x.cols();
  Tensor dx(x.shape());
  Tensor dscale({1, d});
  Tensor dshift({1, d});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const double g = dy[r * d + i];
      dx[r * d + i] = g * (1.0 + cache.scale[i]);
      dscale[i] += g * x[r * d + i];
      dshift[i] += g;
    }
  }
  const Tensor c = cond.reshaped({1, cond.size()});
  dcond += scale.backward(c, dscale).reshaped(cond.shape());
  dcond += shift.backward(c, dshift).reshaped(cond.shape());
  return dx;
}

void Film::collect(ParameterList& out) {
  scale.collect(out);
  shift.collect(out);
}

// ---------------------------------------------------------------------------

TimestepEmbedder::TimestepEmbedder(const std::string& name, std::size_t dim_, std::size_t hidden,
                                   Rng& rng)
    : dim(dim_), first(name + ".first", dim_, hidden, rng), second(name + ".second", hidden, dim_, rng) {}

Tensor TimestepEmbedder::forward(double timestep, Cache& cache) const {
  cache.encoding = Tensor({1, dim}, sinusoidal_embedding(timestep, dim));
  cache.hidden = first.forward(cache.encoding);
  Tensor act = cache.hidden;
  for (double& v : act.data()) {
    v = gelu(v);
  }
  return second.forward(act);
}

void TimestepEmbedder::backward(const Tensor& demb, const Cache& cache) {
  Tensor act = cache.hidden;
  for (double& v : act.data()) {
    v = gelu(v);
  }
  Tensor dact = second.backward(act, demb.reshaped({1, demb.size()}));
  for (std::size_t i = 0; i < dact.size(); ++i) {
    dact[i] *= gelu_grad(cache.hidden[i]);
  }
  first.backward(cache.encoding, dact);
}

void TimestepEmbedder::collect(ParameterList& out) {
  first.collect(out);
  second.collect(out);
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t heads_,
                                       Rng& rng, double dropout)
    : heads(heads_), dropout_rate(dropout), query(name + ".query", dim, dim, rng),
      key(name + ".key", dim, dim, rng), value(name + ".value", dim, dim, rng),
      output(name + ".output", dim, dim, rng) {
  require(heads > 0 && dim % heads == 0, "attention: dim " + std::to_string(dim) +
                                             " not divisible by heads " + std::to_string(heads));
}

Tensor MultiHeadAttention::forward(const Tensor& query_input, const Tensor& kv_input,
                                   const Options& options, Cache& cache) const {
  const std::size_t d = query.in_features();
  const std::size_t s_count = options.sequences;
  require(query_input.cols() == d && kv_input.cols() == d, "attention: feature width mismatch");
  require(s_count > 0 && query_input.rows() % s_count == 0 && kv_input.rows() % s_count == 0,
          "attention: rows not divisible by sequence count");
  const std::size_t lq = query_input.rows() / s_count;
  const std::size_t lk = kv_input.rows() / s_count;
  require(lk > 0, "attention: no keys");
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  cache.query_input = query_input.reshaped({query_input.rows(), d});
  cache.kv_input = kv_input.reshaped({kv_input.rows(), d});
  cache.q = query.forward(cache.query_input);
  cache.k = key.forward(cache.kv_input);
  cache.v = value.forward(cache.kv_input);
  cache.sequences = s_count;
  cache.query_len = lq;
  cache.key_len = lk;
  cache.weights = Tensor({s_count, heads, lq, lk});
  const bool use_dropout = options.dropout_rng != nullptr && dropout_rate > 0.0;
  cache.dropped = use_dropout ? Tensor({s_count, heads, lq, lk}) : Tensor();
  cache.context = Tensor({s_count * lq, d});

  std::vector<double> terms(lk);
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < lq; ++i) {
        const double* qrow = cache.q.ptr() + (s * lq + i) * d + h * dh;
        double* w = cache.weights.ptr() + ((s * heads + h) * lq + i) * lk;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < lk; ++j) {
          const double* krow = cache.k.ptr() + (s * lk + j) * d + h * dh;
          double dot = 0.0;
          for (std::size_t c = 0; c < dh; ++c) {
            dot += qrow[c] * krow[c];
          }
          w[j] = dot * scale;
          mx = std::max(mx, w[j]);
        }
        for (std::size_t j = 0; j < lk; ++j) {
          w[j] = std::exp(w[j] - mx);
          terms[j] = w[j];
        }
        double total = 0.0;
        if (options.order_invariant) {
          total = sorted_sum(terms);
        } else {
          for (std::size_t j = 0; j < lk; ++j) {
            total += w[j];
          }
        }
        for (std::size_t j = 0; j < lk; ++j) {
          w[j] /= total;
        }
        const double* used = w;
        if (use_dropout) {
          double* dw = cache.dropped.ptr() + ((s * heads + h) * lq + i) * lk;
          const double keep = 1.0 / (1.0 - dropout_rate);
          for (std::size_t j = 0; j < lk; ++j) {
            dw[j] = options.dropout_rng->uniform() < dropout_rate ? 0.0 : w[j] * keep;
          }
          used = dw;
        }
        double* ctx = cache.context.ptr() + (s * lq + i) * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) {
          if (options.order_invariant) {
            for (std::size_t j = 0; j < lk; ++j) {
              terms[j] = used[j] * cache.v[(s * lk + j) * d + h * dh + c];
            }
            ctx[c] = sorted_sum(terms);
          } else {
            double acc = 0.0;
            for (std::size_t j = 0; j < lk; ++j) {
              acc += used[j] * cache.v[(s * lk + j) * d + h * dh + c];
            }
            ctx[c] = acc;
          }
        }
      }
    }
  }
  Tensor y = output.forward(cache.context);
  return y.reshaped(query_input.shape());
}

std::pair<Tensor, Tensor> MultiHeadAttention::backward(const Tensor& dy, const Cache& cache) {
  const std::size_t d = query.in_features();
  const std::size_t dh = d / heads;
  const std::size_t s_count = cache.sequences;
  const std::size_t lq = cache.query_len;
  const std::size_t lk = cache.key_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool used_dropout = !cache.dropped.empty();
  const double keep = used_dropout ? 1.0 / (1.0 - dropout_rate) : 1.0;

  const Tensor dctx = output.backward(cache.context, dy.reshaped({dy.rows(), d}));
  Tensor dq({s_count * lq, d});
  Tensor dk({s_count * lk, d});
  Tensor dv({s_count * lk, d});
  std::vector<double> dw(lk);
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < lq; ++i) {
        const std::size_t wbase = ((s * heads + h) * lq + i) * lk;
        const double* w = cache.weights.ptr() + wbase;
        const double* used = used_dropout ? cache.dropped.ptr() + wbase : w;
        const double* g = dctx.ptr() + (s * lq + i) * d + h * dh;
        for (std::size_t j = 0; j < lk; ++j) {
          const double* vrow = cache.v.ptr() + (s * lk + j) * d + h * dh;
          double* dvrow = dv.ptr() + (s * lk + j) * d + h * dh;
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) {
            acc += g[c] * vrow[c];
            dvrow[c] += used[j] * g[c];
          }
          // Gradient through the dropout mask: zeroed entries pass nothing.
          dw[j] = used_dropout ? (used[j] == 0.0 ? 0.0 : acc * keep) : acc;
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < lk; ++j) {
          dot += dw[j] * w[j];
        }
        const double* qrow = cache.q.ptr() + (s * lq + i) * d + h * dh;
        double* dqrow = dq.ptr() + (s * lq + i) * d + h * dh;
        for (std::size_t j = 0; j < lk; ++j) {
          const double dscore = w[j] * (dw[j] - dot) * scale;
          const double* krow = cache.k.ptr() + (s * lk + j) * d + h * dh;
          double* dkrow = dk.ptr() + (s * lk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) {
            dqrow[c] += dscore * krow[c];
            dkrow[c] += dscore * qrow[c];
          }
        }
      }
    }
  }
  Tensor dquery = query.backward(cache.query_input, dq);
  Tensor dkv = key.backward(cache.kv_input, dk);
  dkv += value.backward(cache.kv_input, dv);
  return {std::move(dquery), std::move(dkv)};
}

void MultiHeadAttention::collect(ParameterList& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const ParameterList& targets, const std::function<double()>& loss,
                           const std::function<void()>& backward, double h,
                           std::size_t max_entries, std::uint64_t seed) {
  for (Parameter* p : targets) {
    p->zero_grad();
  }
  backward();
  const double floor = kGradCheckFloor * std::max(1.0, std::abs(loss()));

  Rng rng(seed);
  GradCheckResult result;
  for (Parameter* p : targets) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = i;
    }
    if (n > max_entries) {
      // Partial Fisher-Yates for a reproducible sample.
      for (std::size_t i = 0; i < max_entries; ++i) {
        std::swap(idx[i], idx[i + rng.below(n - i)]);
      }
      idx.resize(max_entries);
    }
    for (std::size_t i : idx) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = loss();
      p->value[i] = saved - h;
      const double down = loss();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_entry = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

} // namespace effortgen::nn
