#include "effortgen/diffusion.hpp"

#include <cmath>

#include "effortgen/checkpoint.hpp"
#include "effortgen/errors.hpp"

namespace effortgen {

using nn::Tensor;

DiffusionSchedule::DiffusionSchedule(std::size_t steps, double beta_start, double beta_end)
    : beta_start_(beta_start), beta_end_(beta_end) {
  if (steps < 2) {
    throw ValidationError("diffusion needs at least 2 training steps");
  }
  if (!(beta_start > 0.0 && beta_end > beta_start && beta_end < 1.0)) {
    throw ValidationError("betas must satisfy 0 < beta_start < beta_end < 1");
  }
  const double lo = std::sqrt(beta_start);
  const double hi = std::sqrt(beta_end);
  betas_.resize(steps);
  alphas_cumprod_.resize(steps);
  alpha_.resize(steps);
  sigma_.resize(steps);
  double cumprod = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double r = lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(steps - 1);
    betas_[t] = r * r;
    cumprod *= 1.0 - betas_[t];
    alphas_cumprod_[t] = cumprod;
    alpha_[t] = std::sqrt(cumprod);
    sigma_[t] = std::sqrt(1.0 - cumprod);
  }
}

std::vector<std::size_t> DiffusionSchedule::ddim_timesteps(std::size_t sampling_steps) const {
  if (sampling_steps == 0 || sampling_steps > steps()) {
    throw ValidationError("sampling steps must be in 1.." + std::to_string(steps()));
  }
  std::vector<std::size_t> out(sampling_steps);
  const double stride = static_cast<double>(steps()) / static_cast<double>(sampling_steps);
  for (std::size_t i = 0; i < sampling_steps; ++i) {
    out[i] = static_cast<std::size_t>(std::llround(static_cast<double>(steps()) -
                                                   static_cast<double>(i) * stride)) - 1;
  }
  return out;
}

Tensor target_velocity(const Tensor& x, const Tensor& eps, double alpha, double sigma) {
  if (x.shape() != eps.shape()) {
    throw ValidationError("target_velocity: x and eps shapes differ");
  }
  Tensor v(x.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = alpha * eps[i] - sigma * x[i];
  }
  return v;
}

Tensor target_velocity(const Tensor& x, const Tensor& eps, std::size_t t,
                       const DiffusionSchedule& schedule) {
  return target_velocity(x, eps, schedule.alpha(t), schedule.sigma(t));
}

double denoiser_loss(const Tensor& predicted, const Tensor& target) {
  if (predicted.shape() != target.shape() || predicted.empty()) {
    throw ValidationError("denoiser_loss: shape mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(predicted.size());
}

Tensor denoiser_loss_grad(const Tensor& predicted, const Tensor& target) {
  Tensor g(predicted.shape());
  const double scale = 2.0 / static_cast<double>(predicted.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = scale * (predicted[i] - target[i]);
  }
  return g;
}

Tensor combine_guidance(const Tensor& unconditional, const Tensor& conditional, double weight) {
  if (unconditional.shape() != conditional.shape()) {
    throw ValidationError("guidance: prediction shapes differ");
  }
  Tensor out(conditional.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - weight) * unconditional[i] + weight * conditional[i];
  }
  return out;
}

Tensor guided_velocity(const Denoiser& model, const Tensor& latents, std::size_t t,
                       std::optional<std::size_t> text_id, std::span<const double> metrics,
                       double weight) {
  const double ts = static_cast<double>(t);
  const Tensor uncond = model.forward(latents, ts, std::nullopt, metrics);
  const Tensor cond = model.forward(latents, ts, text_id, metrics);
  return combine_guidance(uncond, cond, weight);
}

Tensor ddim_loop(const VelocityFn& velocity, const DiffusionSchedule& schedule, Tensor initial,
                 std::size_t sampling_steps) {
  const auto timesteps = schedule.ddim_timesteps(sampling_steps);
  Tensor z = std::move(initial);
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    const std::size_t t = timesteps[i];
    const double a = schedule.alpha(t);
    const double s = schedule.sigma(t);
    // The final step lands on the clean sample.
    const double a_prev = i + 1 < timesteps.size() ? schedule.alpha(timesteps[i + 1]) : 1.0;
    const double s_prev = i + 1 < timesteps.size() ? schedule.sigma(timesteps[i + 1]) : 0.0;
    const Tensor v = velocity(z, t);
    if (v.shape() != z.shape()) {
      throw ValidationError("velocity prediction changed the latent shape");
    }
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double x_hat = a * z[k] - s * v[k];
      const double eps_hat = s * z[k] + a * v[k];
      z[k] = a_prev * x_hat + s_prev * eps_hat;
    }
  }
  return z;
}

Tensor gaussian(const std::vector<std::size_t>& shape, Rng& rng) {
  Tensor out(shape);
  for (double& v : out.data()) {
    v = rng.normal();
  }
  return out;
}

MotionSequence ddim_sample(const Denoiser& model, const LatentCodec& codec,
                           const PromptVocabulary& vocabulary, const DiffusionSchedule& schedule,
                           const SampleRequest& request) {
  if (request.frames < 2) {
    throw ValidationError("generation needs at least 2 frames");
  }
  const auto& cfg = model.config();
  if (codec.latent_dim() != cfg.latent_dim || codec.groups().size() != cfg.regions) {
    throw ModelError("codec does not match the model configuration");
  }
  if (request.metrics.regions() != cfg.regions) {
    throw ValidationError("effort metrics have " + std::to_string(request.metrics.regions()) +
                          " regions, model expects " + std::to_string(cfg.regions));
  }
  std::optional<std::size_t> text_id;
  if (request.prompt) {
    text_id = vocabulary.id_of(*request.prompt);
  }
  const std::vector<double> metrics = request.metrics.flattened();
  Rng rng(request.seed);
  Tensor initial = gaussian({request.frames, cfg.regions, cfg.latent_dim}, rng);
  const VelocityFn velocity = [&](const Tensor& z, std::size_t t) {
    return guided_velocity(model, z, t, text_id, metrics, request.guidance);
  };
  const Tensor latents = ddim_loop(velocity, schedule, std::move(initial), request.steps);
  return codec.decode(latents, kDefaultFps, request.prompt);
}

// ---------------------------------------------------------------------------

nlohmann::json TrainConfig::to_json() const {
  return {{"model", model.to_json()},
          {"prediction_type", "v_prediction"},
          {"beta_schedule", "scaled_linear"},
          {"beta_start", beta_start},
          {"beta_end", beta_end},
          {"num_train_timesteps", diffusion_steps},
          {"optimizer", "AdamW"},
          {"learning_rate", learning_rate},
          {"lr_decay_step", lr_decay_step},
          {"lr_decay_factor", lr_decay_factor},
          {"weight_decay", weight_decay},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon},
          {"batch_size", batch_size},
          {"training_iterations", iterations},
          {"p_uncond", p_uncond},
          {"codec_gain", codec_gain},
          {"checkpoint_every", checkpoint_every},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("model")) {
      c.model = DenoiserConfig::from_json(j.at("model"));
    }
    if (j.contains("prediction_type") && j.at("prediction_type") != "v_prediction") {
      throw ValidationError("only v_prediction is supported");
    }
    if (j.contains("beta_schedule") && j.at("beta_schedule") != "scaled_linear") {
      throw ValidationError("only the scaled_linear beta schedule is supported");
    }
    if (j.contains("optimizer") && j.at("optimizer") != "AdamW") {
      throw ValidationError("only the AdamW optimizer is supported");
    }
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    c.diffusion_steps = j.value("num_train_timesteps", c.diffusion_steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_decay_step = j.value("lr_decay_step", c.lr_decay_step);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.iterations = j.value("training_iterations", c.iterations);
    c.p_uncond = j.value("p_uncond", c.p_uncond);
    c.codec_gain = j.value("codec_gain", c.codec_gain);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("training config: ") + e.what());
  }
  if (c.batch_size == 0) {
    throw ValidationError("batch_size must be positive");
  }
  if (!(c.p_uncond >= 0.0 && c.p_uncond <= 1.0)) {
    throw ValidationError("p_uncond must be in [0, 1]");
  }
  if (!(c.learning_rate >= 0.0)) {
    throw ValidationError("learning_rate must be >= 0");
  }
  return c;
}

TrainingExample make_training_example(const MotionSequence& motion, const LatentCodec& codec,
                                      const PromptVocabulary& vocabulary) {
  TrainingExample ex;
  ex.latents = codec.encode(motion);
  if (motion.label()) {
    ex.text_id = vocabulary.id_of(*motion.label());
  }
  ex.metrics = effort_metrics(motion, codec.groups()).flattened();
  return ex;
}

// ---------------------------------------------------------------------------

AdamW::AdamW(double beta1, double beta2, double epsilon, double weight_decay)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), weight_decay_(weight_decay) {}

void AdamW::step(const nn::ParameterList& params, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (nn::Parameter* p : params) {
    auto [it, inserted] = moments_.try_emplace(p->name);
    if (inserted) {
      it->second = {Tensor(p->value.shape()), Tensor(p->value.shape())};
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p->value[i] -= learning_rate * (m_hat / (std::sqrt(v_hat) + epsilon_) +
                                      weight_decay_ * p->value[i]);
    }
  }
}

void AdamW::export_state(const nn::ParameterList& params, std::vector<std::string>& names,
                         std::map<std::string, Tensor>& tensors) const {
  for (const nn::Parameter* p : params) {
    const auto it = moments_.find(p->name);
    const Tensor zeros(p->value.shape());
    names.push_back("adam.m." + p->name);
    tensors["adam.m." + p->name] = it == moments_.end() ? zeros : it->second.first;
    names.push_back("adam.v." + p->name);
    tensors["adam.v." + p->name] = it == moments_.end() ? zeros : it->second.second;
  }
}

void AdamW::import_state(const nn::ParameterList& params, const std::map<std::string, Tensor>& tensors,
                         std::size_t steps_taken) {
  t_ = steps_taken;
  moments_.clear();
  for (const nn::Parameter* p : params) {
    const auto m = tensors.find("adam.m." + p->name);
    const auto v = tensors.find("adam.v." + p->name);
    if (m == tensors.end() || v == tensors.end()) {
      throw ModelError("checkpoint lacks optimizer state for " + p->name);
    }
    moments_[p->name] = {m->second, v->second};
  }
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, std::vector<TrainingExample> data, PromptVocabulary vocabulary,
                 GroupMap groups)
    : config_(std::move(config)), data_(std::move(data)), vocabulary_(std::move(vocabulary)),
      groups_(std::move(groups)),
      schedule_(config_.diffusion_steps, config_.beta_start, config_.beta_end),
      model_(config_.model, config_.seed),
      optimizer_(config_.adam_beta1, config_.adam_beta2, config_.adam_epsilon, config_.weight_decay),
      rng_(config_.seed ^ 0x9E3779B97F4A7C15ULL) {
  if (data_.empty()) {
    throw ValidationError("training corpus is empty");
  }
  if (groups_.size() != config_.model.regions) {
    throw ValidationError("group map has " + std::to_string(groups_.size()) +
                          " regions, model config expects " + std::to_string(config_.model.regions));
  }
  if (vocabulary_.size() != config_.model.vocab_size) {
    throw ValidationError("vocabulary size does not match model config");
  }
  for (const auto& ex : data_) {
    if (ex.latents.rank() != 3 || ex.latents.dim(1) != config_.model.regions ||
        ex.latents.dim(2) != config_.model.latent_dim) {
      throw ValidationError("training example latents " + nn::shape_string(ex.latents.shape()) +
                            " do not match model config");
    }
    if (ex.metrics.size() != config_.model.regions * config_.model.metrics_per_region) {
      throw ValidationError("training example metrics do not match model config");
    }
  }
}

double Trainer::current_learning_rate() const {
  return iteration_ >= config_.lr_decay_step ? config_.learning_rate * config_.lr_decay_factor
                                             : config_.learning_rate;
}

double Trainer::step() {
  model_.zero_grad();
  const std::size_t batch = config_.batch_size;
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const TrainingExample& ex = data_[rng_.below(data_.size())];
    const std::size_t t = rng_.below(schedule_.steps());
    const Tensor eps = gaussian(ex.latents.shape(), rng_);
    const bool drop_text = rng_.uniform() < config_.p_uncond;
    const std::optional<std::size_t> text = drop_text ? std::nullopt : ex.text_id;

    const double a = schedule_.alpha(t);
    const double s = schedule_.sigma(t);
    Tensor noisy(ex.latents.shape());
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      noisy[i] = a * ex.latents[i] + s * eps[i];
    }
    const Tensor target = target_velocity(ex.latents, eps, a, s);

    Denoiser::Cache cache;
    const Tensor predicted =
        model_.forward(noisy, static_cast<double>(t), text, ex.metrics, &cache, &rng_);
    loss += denoiser_loss(predicted, target);
    Tensor grad = denoiser_loss_grad(predicted, target);
    grad *= 1.0 / static_cast<double>(batch);
    model_.backward(grad, cache);
  }
  optimizer_.step(model_.parameters(), current_learning_rate());
  ++iteration_;
  return loss / static_cast<double>(batch);
}

void Trainer::save(const std::filesystem::path& path) {
  nn::Checkpoint ck;
  const nn::ParameterList params = model_.parameters();
  for (const nn::Parameter* p : params) {
    ck.names.push_back(p->name);
    ck.tensors[p->name] = p->value;
  }
  optimizer_.export_state(params, ck.names, ck.tensors);
  ck.header = {{"format", "effortgen-checkpoint-v1"},
               {"train_config", config_.to_json()},
               {"vocabulary", vocabulary_.entries()},
               {"group_map", groups_.to_json()},
               {"iteration", iteration_},
               {"optimizer_steps", optimizer_.steps_taken()},
               {"rng_state", rng_.state()}};
  nn::save_checkpoint(path, ck);
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint, std::vector<TrainingExample> data) {
  const nn::Checkpoint ck = nn::load_checkpoint(checkpoint);
  try {
    TrainConfig config = TrainConfig::from_json(ck.header.at("train_config"));
    PromptVocabulary vocab(ck.header.at("vocabulary").get<std::vector<std::string>>());
    GroupMap groups = GroupMap::from_json(ck.header.at("group_map"));
    Trainer trainer(std::move(config), std::move(data), std::move(vocab), std::move(groups));
    const nn::ParameterList params = trainer.model_.parameters();
    nn::restore_parameters(ck, params);
    trainer.optimizer_.import_state(params, ck.tensors,
                                    ck.header.at("optimizer_steps").get<std::size_t>());
    trainer.iteration_ = ck.header.at("iteration").get<std::size_t>();
    trainer.rng_.set_state(ck.header.at("rng_state").get<std::string>());
    return trainer;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("checkpoint " + checkpoint.string() + ": " + e.what());
  }
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint)) {
    throw ModelError("checkpoint " + checkpoint.string() + " does not exist");
  }
  const nn::Checkpoint ck = nn::load_checkpoint(checkpoint);
  try {
    TrainConfig config = TrainConfig::from_json(ck.header.at("train_config"));
    PromptVocabulary vocab(ck.header.at("vocabulary").get<std::vector<std::string>>());
    GroupMap groups = GroupMap::from_json(ck.header.at("group_map"));
    Denoiser model(config.model, config.seed);
    nn::restore_parameters(ck, model.parameters());
    LatentCodec codec(groups, config.model.latent_dim, config.codec_gain);
    DiffusionSchedule schedule(config.diffusion_steps, config.beta_start, config.beta_end);
    const std::size_t iteration = ck.header.value("iteration", std::size_t{0});
    return LoadedModel{std::move(model), std::move(vocab), std::move(groups), std::move(codec),
                       std::move(schedule), std::move(config), iteration};
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("checkpoint " + checkpoint.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ModelError("checkpoint " + checkpoint.string() + ": " + e.what());
  }
}

} // namespace effortgen
