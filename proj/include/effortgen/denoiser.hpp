#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "effortgen/effort.hpp"
#include "effortgen/motion.hpp"
#include "effortgen/nn.hpp"

namespace effortgen {

enum class ConditioningMode {
  kRegion,  // one key/value token per region, tagged with a region-identity embedding
  kGlobal,  // all metrics flattened into a single token
};

std::string to_string(ConditioningMode mode);
ConditioningMode conditioning_mode_from_string(const std::string& name);

struct DenoiserConfig {
  std::size_t latent_dim = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t regions = 7;
  std::size_t metrics_per_region = kMetricsPerRegion;
  std::size_t ffn_multiplier = 4;
  std::size_t vocab_size = 14;
  ConditioningMode mode = ConditioningMode::kRegion;
  double attention_dropout = 0.1;
  // Metrics are divided by these (peak, collective) constants before the
  // metric projection so both columns enter at unit scale.
  std::array<double, 2> metric_scale = {0.0129, 1.274};

  // Architecture used for the full-size model (D=256, H=8, L=5).
  static DenoiserConfig full_scale();

  void validate() const;
  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
};

// Deterministic affine stand-in for a motion VAE. Each frame/region slot holds
// the region's joint offsets from `origin` (zero padded to the widest region)
// mapped through orthonormal DCT-II columns and multiplied by `gain`.
class LatentCodec {
 public:
  // An empty origin means the rest pose for the 22-joint skeleton and the
  // coordinate origin otherwise.
  LatentCodec(GroupMap groups, std::size_t latent_dim, double gain = 30.0,
              std::vector<Vec3> origin = {});

  const GroupMap& groups() const { return groups_; }
  std::size_t latent_dim() const { return latent_dim_; }
  double gain() const { return gain_; }

  // [T x G x D]
  nn::Tensor encode(const MotionSequence& m) const;
  MotionSequence decode(const nn::Tensor& latents, int fps = kDefaultFps,
                        std::optional<std::string> label = std::nullopt) const;

 private:
  GroupMap groups_;
  std::size_t latent_dim_;
  std::size_t width_;  // 3 x widest region
  double gain_;
  std::vector<Vec3> origin_;
  nn::RowMatrix basis_;  // [D x width], orthonormal columns
};

struct TextEmbedding {
  nn::Tensor vector;  // [D]
  std::optional<std::size_t> source;  // nullopt for the unconditional row
};

// Cross-attention from motion latents (queries) to effort-metric tokens
// (keys/values).
class EffortMetricAttention {
 public:
  struct Cache {
    std::vector<double> normalized_metrics;
    nn::Tensor tokens;  // metric projection (+ region identity), pre-norm
    nn::LayerNorm::Cache norm;
    nn::Tensor keys;    // normalized tokens
    nn::MultiHeadAttention::Cache attention;
  };

  EffortMetricAttention() = default;
  EffortMetricAttention(const std::string& name, const DenoiserConfig& config, Rng& rng);

  // latents: [rows x D] with rows = T * regions. Returns the attention
  // output only; the caller adds the residual.
  nn::Tensor attend(const nn::Tensor& latents, std::span<const double> metrics, Cache& cache,
                    Rng* dropout = nullptr) const;
  // latents + attend(latents).
  nn::Tensor forward(const nn::Tensor& latents, std::span<const double> metrics, Cache& cache,
                     Rng* dropout = nullptr) const;
  // Backward through attend(); returns dL/dlatents.
  nn::Tensor backward(const nn::Tensor& dy, const Cache& cache);
  void collect(nn::ParameterList& out);

  ConditioningMode mode = ConditioningMode::kRegion;
  std::size_t regions = 0;
  std::size_t metrics_per_region = kMetricsPerRegion;
  std::array<double, 2> metric_scale = {1.0, 1.0};
  nn::Linear metric_projection;
  nn::Parameter region_identity;  // [regions x D]; unused in global mode
  nn::LayerNorm token_norm;
  nn::MultiHeadAttention attention;
};

// One transformer block: temporal, skeletal, effort-metric and text
// attention followed by a feed-forward layer. Every sublayer is applied as
// z <- z + FiLM(sublayer(LN(z))) with FiLM driven by the timestep embedding.
class DenoiserBlock {
 public:
  enum Sublayer : std::size_t { kTemporal = 0, kSkeletal, kMetric, kText, kFeedForward, kCount };

  struct Cache {
    std::array<nn::LayerNorm::Cache, kCount> norm;
    std::array<nn::Tensor, kCount> normalized;
    std::array<nn::Tensor, kCount> sub_output;
    std::array<nn::Film::Cache, kCount> film;
    nn::MultiHeadAttention::Cache temporal;
    nn::MultiHeadAttention::Cache skeletal;
    EffortMetricAttention::Cache metric;
    nn::MultiHeadAttention::Cache text;
    nn::FeedForward::Cache ffn;
    std::size_t frames = 0;
  };

  DenoiserBlock() = default;
  DenoiserBlock(const std::string& name, const DenoiserConfig& config, Rng& rng);

  // z: [T*G x D], temb: [1 x D], text: [1 x D].
  nn::Tensor forward(const nn::Tensor& z, std::size_t frames, const nn::Tensor& temb,
                     std::span<const double> metrics, const nn::Tensor& text, Cache& cache,
                     Rng* dropout = nullptr) const;
  nn::Tensor backward(const nn::Tensor& dz, const nn::Tensor& temb, const nn::Tensor& text,
                      const Cache& cache, nn::Tensor& dtemb, nn::Tensor& dtext);

  void zero_output_projections();
  void collect(nn::ParameterList& out);

  std::size_t regions = 0;
  std::size_t dim = 0;
  std::array<nn::LayerNorm, kCount> norms;
  std::array<nn::Film, kCount> films;
  nn::MultiHeadAttention temporal;
  nn::MultiHeadAttention skeletal;
  nn::Parameter region_position;  // [regions x D] added before skeletal attention
  EffortMetricAttention metric;
  nn::MultiHeadAttention text;
  nn::FeedForward ffn;
};

// Predicts the diffusion velocity for latents [T x G x D].
class Denoiser {
 public:
  struct Cache {
    nn::TimestepEmbedder::Cache time;
    nn::Tensor temb;
    nn::Tensor text;
    std::size_t text_row = 0;
    std::vector<nn::Tensor> block_inputs;
    std::vector<DenoiserBlock::Cache> blocks;
  };

  Denoiser(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }

  // `text_id` nullopt selects the learned unconditional embedding.
  nn::Tensor forward(const nn::Tensor& latents, double timestep,
                     std::optional<std::size_t> text_id, std::span<const double> metrics,
                     Cache* cache = nullptr, Rng* dropout = nullptr) const;

  // forward() restricted to models built in global conditioning mode.
  nn::Tensor global_conditioning_forward(const nn::Tensor& latents, double timestep,
                                         std::optional<std::size_t> text_id,
                                         std::span<const double> metrics) const;

  // Accumulates parameter gradients; returns dL/dlatents.
  nn::Tensor backward(const nn::Tensor& dvelocity, const Cache& cache);

  TextEmbedding embed_text(const std::optional<std::string>& prompt,
                           const PromptVocabulary& vocabulary) const;

  nn::ParameterList parameters();
  void zero_grad();
  // Sets every sublayer output projection to zero, making forward() the
  // identity on its latent input.
  void zero_output_projections();

 private:
  void check_inputs(const nn::Tensor& latents, std::span<const double> metrics) const;

  DenoiserConfig config_;
  nn::TimestepEmbedder time_embedding_;
  nn::Parameter text_table_;  // [vocab + 1 x D]; last row is unconditional
  std::vector<DenoiserBlock> blocks_;
};

} // namespace effortgen
