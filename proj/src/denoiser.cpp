#include "effortgen/denoiser.hpp"

#include <cmath>
#include <numbers>

#include "effortgen/errors.hpp"

namespace effortgen {

using nn::Tensor;

std::string to_string(ConditioningMode mode) {
  return mode == ConditioningMode::kRegion ? "region" : "global";
}

ConditioningMode conditioning_mode_from_string(const std::string& name) {
  if (name == "region") {
    return ConditioningMode::kRegion;
  }
  if (name == "global") {
    return ConditioningMode::kGlobal;
  }
  throw ValidationError("conditioning mode must be 'region' or 'global', got '" + name + "'");
}

DenoiserConfig DenoiserConfig::full_scale() {
  DenoiserConfig c;
  c.latent_dim = 256;
  c.heads = 8;
  c.layers = 5;
  return c;
}

void DenoiserConfig::validate() const {
  if (latent_dim == 0 || heads == 0 || latent_dim % heads != 0) {
    throw ValidationError("latent_dim must be a positive multiple of heads");
  }
  if (layers == 0 || regions == 0 || vocab_size == 0 || ffn_multiplier == 0) {
    throw ValidationError("layers, regions, vocab_size and ffn_multiplier must be positive");
  }
  if (metrics_per_region != kMetricsPerRegion) {
    throw ValidationError("metrics_per_region must be 2 (peak, collective)");
  }
  if (!(attention_dropout >= 0.0 && attention_dropout < 1.0)) {
    throw ValidationError("attention_dropout must be in [0, 1)");
  }
  if (!(metric_scale[0] > 0.0 && metric_scale[1] > 0.0)) {
    throw ValidationError("metric_scale entries must be positive");
  }
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"latent_dim", latent_dim},
          {"num_heads", heads},
          {"num_layers", layers},
          {"num_regions", regions},
          {"metric_dim", metrics_per_region},
          {"ffn_multiplier", ffn_multiplier},
          {"vocab_size", vocab_size},
          {"conditioning_mode", to_string(mode)},
          {"attention_dropout", attention_dropout},
          {"metric_scale", metric_scale}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  try {
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.heads = j.value("num_heads", c.heads);
    c.layers = j.value("num_layers", c.layers);
    c.regions = j.value("num_regions", c.regions);
    c.metrics_per_region = j.value("metric_dim", c.metrics_per_region);
    c.ffn_multiplier = j.value("ffn_multiplier", c.ffn_multiplier);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.mode = conditioning_mode_from_string(j.value("conditioning_mode", to_string(c.mode)));
    c.attention_dropout = j.value("attention_dropout", c.attention_dropout);
    c.metric_scale = j.value("metric_scale", c.metric_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

LatentCodec::LatentCodec(GroupMap groups, std::size_t latent_dim, double gain,
                         std::vector<Vec3> origin)
    : groups_(std::move(groups)), latent_dim_(latent_dim), width_(3 * groups_.max_group_size()),
      gain_(gain), origin_(std::move(origin)) {
  if (latent_dim_ < width_) {
    throw ValidationError("latent dim " + std::to_string(latent_dim_) +
                          " is smaller than 3 x widest region (" + std::to_string(width_) +
                          "); the codec would not be injective");
  }
  if (!(gain_ > 0.0) || !std::isfinite(gain_)) {
    throw ValidationError("codec gain must be positive");
  }
  if (origin_.empty()) {
    origin_ = groups_.joint_count() == kDefaultJointCount
                  ? rest_pose()
                  : std::vector<Vec3>(groups_.joint_count());
  }
  if (origin_.size() != groups_.joint_count()) {
    throw ValidationError("codec origin joint count mismatch");
  }
  const double n = static_cast<double>(latent_dim_);
  basis_.resize(static_cast<Eigen::Index>(latent_dim_), static_cast<Eigen::Index>(width_));
  for (std::size_t i = 0; i < latent_dim_; ++i) {
    for (std::size_t k = 0; k < width_; ++k) {
      const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      basis_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          s * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) * static_cast<double>(k) / n);
    }
  }
}

Tensor LatentCodec::encode(const MotionSequence& m) const {
  if (m.joints() != groups_.joint_count()) {
    throw ValidationError("motion has " + std::to_string(m.joints()) +
                          " joints, codec expects " + std::to_string(groups_.joint_count()));
  }
  const std::size_t g_count = groups_.size();
  Tensor out({m.frames(), g_count, latent_dim_});
  Eigen::VectorXd slot(static_cast<Eigen::Index>(width_));
  for (std::size_t t = 0; t < m.frames(); ++t) {
    for (std::size_t g = 0; g < g_count; ++g) {
      slot.setZero();
      const auto& members = groups_[g].joints;
      for (std::size_t k = 0; k < members.size(); ++k) {
        const Vec3 p = m.at(t, members[k]);
        const Vec3& o = origin_[members[k]];
        slot(static_cast<Eigen::Index>(3 * k)) = p.x - o.x;
        slot(static_cast<Eigen::Index>(3 * k + 1)) = p.y - o.y;
        slot(static_cast<Eigen::Index>(3 * k + 2)) = p.z - o.z;
      }
      Eigen::Map<Eigen::VectorXd> z(out.ptr() + (t * g_count + g) * latent_dim_,
                                    static_cast<Eigen::Index>(latent_dim_));
      z.noalias() = gain_ * (basis_ * slot);
    }
  }
  return out;
}

MotionSequence LatentCodec::decode(const Tensor& latents, int fps,
                                   std::optional<std::string> label) const {
  const std::size_t g_count = groups_.size();
  if (latents.rank() != 3 || latents.dim(1) != g_count || latents.dim(2) != latent_dim_) {
    throw ValidationError("latents " + nn::shape_string(latents.shape()) + " do not match codec [T x " +
                          std::to_string(g_count) + " x " + std::to_string(latent_dim_) + "]");
  }
  const std::size_t frames = latents.dim(0);
  const std::size_t joints = groups_.joint_count();
  std::vector<double> positions(frames * joints * 3);
  Eigen::VectorXd slot(static_cast<Eigen::Index>(width_));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t g = 0; g < g_count; ++g) {
      Eigen::Map<const Eigen::VectorXd> z(latents.ptr() + (t * g_count + g) * latent_dim_,
                                          static_cast<Eigen::Index>(latent_dim_));
      slot.noalias() = basis_.transpose() * z;
      slot /= gain_;
      const auto& members = groups_[g].joints;
      for (std::size_t k = 0; k < members.size(); ++k) {
        double* p = positions.data() + (t * joints + members[k]) * 3;
        const Vec3& o = origin_[members[k]];
        p[0] = o.x + slot(static_cast<Eigen::Index>(3 * k));
        p[1] = o.y + slot(static_cast<Eigen::Index>(3 * k + 1));
        p[2] = o.z + slot(static_cast<Eigen::Index>(3 * k + 2));
      }
    }
  }
  return MotionSequence(fps, joints, std::move(positions), std::move(label));
}

// ---------------------------------------------------------------------------

EffortMetricAttention::EffortMetricAttention(const std::string& name, const DenoiserConfig& config,
                                             Rng& rng)
    : mode(config.mode), regions(config.regions), metrics_per_region(config.metrics_per_region),
      metric_scale(config.metric_scale),
      metric_projection(name + ".metric_projection",
                        config.mode == ConditioningMode::kRegion
                            ? config.metrics_per_region
                            : config.metrics_per_region * config.regions,
                        config.latent_dim, rng),
      region_identity(name + ".region_identity", Tensor({config.regions, config.latent_dim})),
      token_norm(name + ".token_norm", config.latent_dim),
      attention(name + ".attention", config.latent_dim, config.heads, rng, config.attention_dropout) {
  for (double& v : region_identity.value.data()) {
    v = 0.5 * rng.normal();
  }
}

Tensor EffortMetricAttention::attend(const Tensor& latents, std::span<const double> metrics,
                                     Cache& cache, Rng* dropout) const {
  if (metrics.size() != regions * metrics_per_region) {
    throw ValidationError("effort metrics carry " + std::to_string(metrics.size()) +
                          " values, expected " + std::to_string(regions) + " regions x " +
                          std::to_string(metrics_per_region));
  }
  const std::size_t d = metric_projection.out_features();
  if (latents.cols() != d || latents.rows() % regions != 0) {
    throw ValidationError("metric attention: latents " + nn::shape_string(latents.shape()) +
                          " incompatible with " + std::to_string(regions) + " regions");
  }
  cache.normalized_metrics.resize(metrics.size());
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    cache.normalized_metrics[i] = metrics[i] / metric_scale[i % metrics_per_region];
  }
  if (mode == ConditioningMode::kRegion) {
    const Tensor input({regions, metrics_per_region}, cache.normalized_metrics);
    cache.tokens = metric_projection.forward(input);
    cache.tokens += region_identity.value;
  } else {
    const Tensor input({1, regions * metrics_per_region}, cache.normalized_metrics);
    cache.tokens = metric_projection.forward(input);
  }
  cache.keys = token_norm.forward(cache.tokens, cache.norm);
  nn::MultiHeadAttention::Options options;
  options.sequences = 1;
  options.order_invariant = mode == ConditioningMode::kRegion;
  options.dropout_rng = dropout;
  const Tensor flat = latents.reshaped({latents.rows(), d});
  return attention.forward(flat, cache.keys, options, cache.attention).reshaped(latents.shape());
}

Tensor EffortMetricAttention::forward(const Tensor& latents, std::span<const double> metrics,
                                      Cache& cache, Rng* dropout) const {
  return latents + attend(latents, metrics, cache, dropout);
}

Tensor EffortMetricAttention::backward(const Tensor& dy, const Cache& cache) {
  auto [dlatents, dkeys] = attention.backward(dy, cache.attention);
  const Tensor dtokens = token_norm.backward(dkeys, cache.norm);
  if (mode == ConditioningMode::kRegion) {
    region_identity.grad += dtokens;
    metric_projection.backward(Tensor({regions, metrics_per_region}, cache.normalized_metrics),
                               dtokens);
  } else {
    metric_projection.backward(Tensor({1, regions * metrics_per_region}, cache.normalized_metrics),
                               dtokens);
  }
  return dlatents.reshaped(dy.shape());
}

void EffortMetricAttention::collect(nn::ParameterList& out) {
  metric_projection.collect(out);
  if (mode == ConditioningMode::kRegion) {
    out.push_back(&region_identity);
  }
  token_norm.collect(out);
  attention.collect(out);
}

// ---------------------------------------------------------------------------

namespace {

const char* const kSublayerNames[] = {"temporal", "skeletal", "metric", "text", "ffn"};

// [T*G x D] (frame-major) <-> [G*T x D] (region-major).
Tensor swap_frame_region(const Tensor& x, std::size_t outer, std::size_t inner) {
  const std::size_t d = x.cols();
  Tensor out({outer * inner, d});
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t b = 0; b < inner; ++b) {
      std::copy_n(x.ptr() + (a * inner + b) * d, d, out.ptr() + (b * outer + a) * d);
    }
  }
  return out;
}

} // namespace

DenoiserBlock::DenoiserBlock(const std::string& name, const DenoiserConfig& config, Rng& rng)
    : regions(config.regions), dim(config.latent_dim),
      temporal(name + ".temporal", config.latent_dim, config.heads, rng),
      skeletal(name + ".skeletal", config.latent_dim, config.heads, rng),
      region_position(name + ".region_position", Tensor({config.regions, config.latent_dim})),
      metric(name + ".metric", config, rng),
      text(name + ".text", config.latent_dim, config.heads, rng),
      ffn(name + ".ffn", config.latent_dim, config.latent_dim * config.ffn_multiplier, rng) {
  for (std::size_t s = 0; s < kCount; ++s) {
    norms[s] = nn::LayerNorm(name + ".norm_" + kSublayerNames[s], dim);
    films[s] = nn::Film(name + ".film_" + kSublayerNames[s], dim, dim, rng);
  }
  for (double& v : region_position.value.data()) {
    v = 0.5 * rng.normal();
  }
}

Tensor DenoiserBlock::forward(const Tensor& z, std::size_t frames, const Tensor& temb,
                              std::span<const double> metrics, const Tensor& text_token,
                              Cache& cache, Rng* dropout) const {
  cache.frames = frames;
  Tensor x = z;
  for (std::size_t s = 0; s < kCount; ++s) {
    cache.normalized[s] = norms[s].forward(x, cache.norm[s]);
    const Tensor& xn = cache.normalized[s];
    Tensor u;
    switch (s) {
      case kTemporal: {
        Tensor pos = xn;
        for (std::size_t t = 0; t < frames; ++t) {
          const auto pe = nn::sinusoidal_embedding(static_cast<double>(t), dim);
          for (std::size_t g = 0; g < regions; ++g) {
            for (std::size_t c = 0; c < dim; ++c) {
              pos[(t * regions + g) * dim + c] += pe[c];
            }
          }
        }
        const Tensor seq = swap_frame_region(pos, frames, regions);
        nn::MultiHeadAttention::Options options;
        options.sequences = regions;
        const Tensor out = temporal.forward(seq, seq, options, cache.temporal);
        u = swap_frame_region(out, regions, frames);
        break;
      }
      case kSkeletal: {
        Tensor pos = xn;
        for (std::size_t t = 0; t < frames; ++t) {
          for (std::size_t g = 0; g < regions; ++g) {
            for (std::size_t c = 0; c < dim; ++c) {
              pos[(t * regions + g) * dim + c] += region_position.value[g * dim + c];
            }
          }
        }
        nn::MultiHeadAttention::Options options;
        options.sequences = frames;
        options.order_invariant = true;
        u = skeletal.forward(pos, pos, options, cache.skeletal);
        break;
      }
      case kMetric:
        u = metric.attend(xn, metrics, cache.metric, dropout);
        break;
      case kText: {
        nn::MultiHeadAttention::Options options;
        u = text.forward(xn, text_token, options, cache.text);
        break;
      }
      case kFeedForward:
        u = ffn.forward(xn, cache.ffn);
        break;
    }
    cache.sub_output[s] = u;
    x += films[s].forward(u, temb, cache.film[s]);
  }
  return x;
}

Tensor DenoiserBlock::backward(const Tensor& dz, const Tensor& temb, const Tensor& /*text*/,
                               const Cache& cache, Tensor& dtemb, Tensor& dtext) {
  const std::size_t frames = cache.frames;
  Tensor dx = dz;
  for (std::size_t s = kCount; s-- > 0;) {
    const Tensor du = films[s].backward(cache.sub_output[s], dx, temb, cache.film[s], dtemb);
    Tensor dxn;
    switch (s) {
      case kTemporal: {
        const Tensor dout = swap_frame_region(du, frames, regions);
        auto [dq, dkv] = temporal.backward(dout, cache.temporal);
        dq += dkv;
        dxn = swap_frame_region(dq, regions, frames);
        break;
      }
      case kSkeletal: {
        auto [dq, dkv] = skeletal.backward(du, cache.skeletal);
        dq += dkv;
        for (std::size_t t = 0; t < frames; ++t) {
          for (std::size_t g = 0; g < regions; ++g) {
            for (std::size_t c = 0; c < dim; ++c) {
              region_position.grad[g * dim + c] += dq[(t * regions + g) * dim + c];
            }
          }
        }
        dxn = std::move(dq);
        break;
      }
      case kMetric:
        dxn = metric.backward(du, cache.metric);
        break;
      case kText: {
        auto [dq, dkv] = text.backward(du, cache.text);
        dtext += dkv.reshaped(dtext.shape());
        dxn = std::move(dq);
        break;
      }
      case kFeedForward:
        dxn = ffn.backward(du, cache.ffn);
        break;
    }
    dx += norms[s].backward(dxn, cache.norm[s]);
  }
  return dx;
}

void DenoiserBlock::zero_output_projections() {
  temporal.output.zero_init();
  skeletal.output.zero_init();
  metric.attention.output.zero_init();
  text.output.zero_init();
  ffn.down.zero_init();
  for (auto& f : films) {
    f.scale.zero_init();
    f.shift.zero_init();
  }
}

void DenoiserBlock::collect(nn::ParameterList& out) {
  for (std::size_t s = 0; s < kCount; ++s) {
    norms[s].collect(out);
    films[s].collect(out);
  }
  temporal.collect(out);
  skeletal.collect(out);
  out.push_back(&region_position);
  metric.collect(out);
  text.collect(out);
  ffn.collect(out);
}

// ---------------------------------------------------------------------------

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  time_embedding_ = nn::TimestepEmbedder("time_embedding", config_.latent_dim,
                                         config_.latent_dim * config_.ffn_multiplier, rng);
  text_table_ = nn::Parameter("text_table", Tensor({config_.vocab_size + 1, config_.latent_dim}));
  for (double& v : text_table_.value.data()) {
    v = rng.normal();
  }
  blocks_.reserve(config_.layers);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    blocks_.emplace_back("blocks." + std::to_string(l), config_, rng);
  }
}

void Denoiser::check_inputs(const Tensor& latents, std::span<const double> metrics) const {
  if (latents.rank() != 3 || latents.dim(1) != config_.regions ||
      latents.dim(2) != config_.latent_dim) {
    throw ValidationError("latents " + nn::shape_string(latents.shape()) + " do not match model [T x " +
                          std::to_string(config_.regions) + " x " +
                          std::to_string(config_.latent_dim) + "]");
  }
  if (metrics.size() != config_.regions * config_.metrics_per_region) {
    throw ValidationError("effort metrics size " + std::to_string(metrics.size()) +
                          " does not match model regions");
  }
}

Tensor Denoiser::forward(const Tensor& latents, double timestep, std::optional<std::size_t> text_id,
                         std::span<const double> metrics, Cache* cache, Rng* dropout) const {
  check_inputs(latents, metrics);
  if (text_id && *text_id >= config_.vocab_size) {
    throw ValidationError("text id " + std::to_string(*text_id) + " outside vocabulary");
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  const std::size_t frames = latents.dim(0);
  const std::size_t d = config_.latent_dim;

  c.temb = time_embedding_.forward(timestep, c.time);
  c.text_row = text_id.value_or(config_.vocab_size);
  c.text = Tensor({1, d});
  std::copy_n(text_table_.value.ptr() + c.text_row * d, d, c.text.ptr());
  c.block_inputs.resize(blocks_.size());
  c.blocks.resize(blocks_.size());

  Tensor z = latents.reshaped({frames * config_.regions, d});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    c.block_inputs[l] = z;
    z = blocks_[l].forward(z, frames, c.temb, metrics, c.text, c.blocks[l], dropout);
  }
  return z.reshaped(latents.shape());
}

Tensor Denoiser::global_conditioning_forward(const Tensor& latents, double timestep,
                                             std::optional<std::size_t> text_id,
                                             std::span<const double> metrics) const {
  if (config_.mode != ConditioningMode::kGlobal) {
    throw ValidationError("global_conditioning_forward requires a global-mode model");
  }
  return forward(latents, timestep, text_id, metrics);
}

Tensor Denoiser::backward(const Tensor& dvelocity, const Cache& cache) {
  const std::size_t d = config_.latent_dim;
  Tensor dz = dvelocity.reshaped({dvelocity.size() / d, d});
  Tensor dtemb({1, d});
  Tensor dtext({1, d});
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    dz = blocks_[l].backward(dz, cache.temb, cache.text, cache.blocks[l], dtemb, dtext);
  }
  time_embedding_.backward(dtemb, cache.time);
  for (std::size_t c = 0; c < d; ++c) {
    text_table_.grad[cache.text_row * d + c] += dtext[c];
  }
  return dz.reshaped(dvelocity.shape());
}

TextEmbedding Denoiser::embed_text(const std::optional<std::string>& prompt,
                                   const PromptVocabulary& vocabulary) const {
  if (vocabulary.size() != config_.vocab_size) {
    throw ValidationError("vocabulary has " + std::to_string(vocabulary.size()) +
                          " prompts, model was built for " + std::to_string(config_.vocab_size));
  }
  std::optional<std::size_t> id;
  if (prompt) {
    id = vocabulary.id_of(*prompt);
  }
  const std::size_t row = id.value_or(config_.vocab_size);
  const std::size_t d = config_.latent_dim;
  Tensor v({d});
  std::copy_n(text_table_.value.ptr() + row * d, d, v.ptr());
  return {std::move(v), id};
}

nn::ParameterList Denoiser::parameters() {
  nn::ParameterList out;
  time_embedding_.collect(out);
  out.push_back(&text_table_);
  for (auto& b : blocks_) {
    b.collect(out);
  }
  return out;
}

void Denoiser::zero_grad() {
  for (nn::Parameter* p : parameters()) {
    p->zero_grad();
  }
}

void Denoiser::zero_output_projections() {
  for (auto& b : blocks_) {
    b.zero_output_projections();
  }
}

} // namespace effortgen
