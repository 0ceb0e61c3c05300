#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "effortgen/rng.hpp"
#include "effortgen/tensor.hpp"

namespace effortgen::nn {

inline constexpr double kLayerNormEpsilon = 1e-5;
inline constexpr double kGradCheckFloor = 1e-6;

// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes each vector along the last axis, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, std::span<const double> gamma, std::span<const double> beta,
                  double eps = kLayerNormEpsilon);

// Tanh approximation of GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

// Inverted dropout: zeroes entries with probability `rate` and rescales the
// survivors by 1/(1-rate). With rng == nullptr or rate == 0 it is the identity.
Tensor dropout(const Tensor& x, double rate, Rng* rng);

// Standard sin/cos encoding with geometric frequencies 10000^(-i/half).
std::vector<double> sinusoidal_embedding(double position, std::size_t dim);

class Linear {
 public:
  Linear() = default;
  // Weights and bias uniform in +-1/sqrt(in).
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  // x: [..., in] -> [..., out]
  Tensor forward(const Tensor& x) const;
  // Accumulates parameter gradients and returns dL/dx.
  Tensor backward(const Tensor& x, const Tensor& dy);

  void zero_init();
  void collect(ParameterList& out);

  Parameter weight;  // [out x in]
  Parameter bias;    // [out]
};

class LayerNorm {
 public:
  struct Cache {
    Tensor normalized;
    std::vector<double> inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);

  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void collect(ParameterList& out);

  Parameter gamma;
  Parameter beta;
};

class FeedForward {
 public:
  struct Cache {
    Tensor input;
    Tensor hidden;  // pre-activation
  };

  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void collect(ParameterList& out);

  Linear up;
  Linear down;
};

// Feature-wise affine modulation x * (1 + scale(c)) + shift(c), where c is a
// conditioning vector shared by every row of x. Both projections start at
// zero so a fresh FiLM layer is the identity.
class Film {
 public:
  struct Cache {
    Tensor scale;  // [D]
    Tensor shift;  // [D]
  };

  Film() = default;
  Film(const std::string& name, std::size_t cond_dim, std::size_t dim, Rng& rng);

  Tensor forward(const Tensor& x, const Tensor& cond, Cache& cache) const;
  // Returns dL/dx; adds dL/dcond into `dcond`.
  Tensor backward(const Tensor& x, const Tensor& dy, const Tensor& cond, const Cache& cache,
                  Tensor& dcond);
  void collect(ParameterList& out);

  Linear scale;
  Linear shift;
};

// Sinusoidal encoding of the diffusion step followed by a two-layer GELU MLP.
class TimestepEmbedder {
 public:
  struct Cache {
    Tensor encoding;  // [1 x D]
    Tensor hidden;    // [1 x H] pre-activation
  };

  TimestepEmbedder() = default;
  TimestepEmbedder(const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng);

  Tensor forward(double timestep, Cache& cache) const;  // [1 x D]
  void backward(const Tensor& demb, const Cache& cache);
  void collect(ParameterList& out);

  std::size_t dim = 0;
  Linear first;
  Linear second;
};

// Multi-head scaled dot-product attention over `sequences` independent
// groups. Query rows are laid out as [sequences x query_len], key/value rows
// as [sequences x key_len].
class MultiHeadAttention {
 public:
  struct Cache {
    Tensor query_input;
    Tensor kv_input;
    Tensor q, k, v;
    Tensor weights;       // [S x H x Lq x Lk] after softmax
    Tensor dropped;       // weights after dropout; empty when dropout was off
    Tensor context;       // [S*Lq x D]
    std::size_t sequences = 0;
    std::size_t query_len = 0;
    std::size_t key_len = 0;
  };

  struct Options {
    std::size_t sequences = 1;
    // Sum over keys in a canonical (sorted) order so the result is bitwise
    // invariant to permutations of the key tokens.
    bool order_invariant = false;
    Rng* dropout_rng = nullptr;  // non-null enables weight dropout
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t heads, Rng& rng,
                     double dropout = 0.0);

  Tensor forward(const Tensor& query_input, const Tensor& kv_input, const Options& options,
                 Cache& cache) const;
  // Returns {dL/dquery_input, dL/dkv_input}.
  std::pair<Tensor, Tensor> backward(const Tensor& dy, const Cache& cache);
  void collect(ParameterList& out);

  std::size_t heads = 1;
  double dropout_rate = 0.0;
  Linear query;
  Linear key;
  Linear value;
  Linear output;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_entry;
};

// Compares analytic gradients against central finite differences.
//
// `loss` evaluates the scalar objective from the current values of `targets`.
// `backward` must run forward and backward once, accumulating into each
// target's `grad` (the harness zeroes them first). At most `max_entries`
// randomly chosen entries per tensor are probed. The relative error of an
// entry is |a - n| / max(|a|, |n|, kGradCheckFloor * max(1, |loss|)); the
// floor tracks the loss scale because rounding in the loss sets the noise of
// the finite difference.
GradCheckResult grad_check(const ParameterList& targets, const std::function<double()>& loss,
                           const std::function<void()>& backward, double h = 1e-5,
                           std::size_t max_entries = 24, std::uint64_t seed = 7);

} // namespace effortgen::nn
