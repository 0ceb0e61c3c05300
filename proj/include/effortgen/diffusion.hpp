#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "effortgen/denoiser.hpp"
#include "effortgen/effort.hpp"
#include "effortgen/motion.hpp"
#include "effortgen/rng.hpp"
#include "effortgen/tensor.hpp"

namespace effortgen {

// Scaled-linear beta schedule: betas are squares of a linear ramp between
// sqrt(beta_start) and sqrt(beta_end).
class DiffusionSchedule {
 public:
  explicit DiffusionSchedule(std::size_t steps = 1000, double beta_start = 0.00085,
                             double beta_end = 0.012);

  std::size_t steps() const { return betas_.size(); }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  double beta(std::size_t t) const { return betas_.at(t); }
  double alpha_cumprod(std::size_t t) const { return alphas_cumprod_.at(t); }
  // Signal and noise coefficients of z_t = alpha x + sigma eps.
  double alpha(std::size_t t) const { return alpha_.at(t); }
  double sigma(std::size_t t) const { return sigma_.at(t); }

  // Descending, uniformly strided timesteps ending near 0 and starting at the
  // last training step.
  std::vector<std::size_t> ddim_timesteps(std::size_t sampling_steps) const;

 private:
  double beta_start_;
  double beta_end_;
  std::vector<double> betas_;
  std::vector<double> alphas_cumprod_;
  std::vector<double> alpha_;
  std::vector<double> sigma_;
};

// alpha_t * eps - sigma_t * x
nn::Tensor target_velocity(const nn::Tensor& x, const nn::Tensor& eps, std::size_t t,
                           const DiffusionSchedule& schedule);
nn::Tensor target_velocity(const nn::Tensor& x, const nn::Tensor& eps, double alpha, double sigma);

// Mean squared error over all elements.
double denoiser_loss(const nn::Tensor& predicted, const nn::Tensor& target);
// d loss / d predicted.
nn::Tensor denoiser_loss_grad(const nn::Tensor& predicted, const nn::Tensor& target);

// (1 - w) * unconditional + w * conditional; exact at w = 0 and w = 1.
nn::Tensor combine_guidance(const nn::Tensor& unconditional, const nn::Tensor& conditional,
                            double weight);

// Classifier-free guidance. Both passes receive the same effort metrics; only
// the text is swapped for the unconditional embedding.
nn::Tensor guided_velocity(const Denoiser& model, const nn::Tensor& latents, std::size_t t,
                           std::optional<std::size_t> text_id, std::span<const double> metrics,
                           double weight);

using VelocityFn = std::function<nn::Tensor(const nn::Tensor& latents, std::size_t t)>;

// Deterministic (eta = 0) DDIM with a velocity-predicting model, starting
// from `initial` at the noisiest selected timestep.
nn::Tensor ddim_loop(const VelocityFn& velocity, const DiffusionSchedule& schedule,
                     nn::Tensor initial, std::size_t sampling_steps);

// Standard normal tensor drawn from rng.
nn::Tensor gaussian(const std::vector<std::size_t>& shape, Rng& rng);

struct SampleRequest {
  std::optional<std::string> prompt;
  EffortMetrics metrics;
  std::size_t frames = 120;
  std::size_t steps = 50;
  double guidance = 7.5;
  std::uint64_t seed = 0;
};

MotionSequence ddim_sample(const Denoiser& model, const LatentCodec& codec,
                           const PromptVocabulary& vocabulary, const DiffusionSchedule& schedule,
                           const SampleRequest& request);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  DenoiserConfig model;
  std::size_t iterations = 2000;
  std::size_t batch_size = 16;
  double learning_rate = 5e-4;
  std::size_t lr_decay_step = 50000;
  double lr_decay_factor = 0.1;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double p_uncond = 0.1;
  std::size_t diffusion_steps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  double codec_gain = 30.0;  // corpus offsets are a few cm; this brings latents near unit scale
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  // Missing fields keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainingExample {
  nn::Tensor latents;  // [T x G x D]
  std::optional<std::size_t> text_id;
  std::vector<double> metrics;  // flattened [G x 2], measured on the source motion
};

// Encodes the motion and measures its effort metrics.
TrainingExample make_training_example(const MotionSequence& motion, const LatentCodec& codec,
                                      const PromptVocabulary& vocabulary);

// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW() = default;
  AdamW(double beta1, double beta2, double epsilon, double weight_decay);

  void step(const nn::ParameterList& params, double learning_rate);
  std::size_t steps_taken() const { return t_; }

  // Moment tensors are exposed for checkpointing.
  void export_state(const nn::ParameterList& params, std::vector<std::string>& names,
                    std::map<std::string, nn::Tensor>& tensors) const;
  void import_state(const nn::ParameterList& params, const std::map<std::string, nn::Tensor>& tensors,
                    std::size_t steps_taken);

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  double weight_decay_ = 0.0;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<nn::Tensor, nn::Tensor>> moments_;
};

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<TrainingExample> data, PromptVocabulary vocabulary,
          GroupMap groups);

  // Restores model, optimizer, generator and iteration from a checkpoint
  // written by save().
  static Trainer resume(const std::filesystem::path& checkpoint, std::vector<TrainingExample> data);

  // One optimization step over a freshly drawn batch; returns its mean loss.
  double step();

  std::size_t iteration() const { return iteration_; }
  double current_learning_rate() const;
  const TrainConfig& config() const { return config_; }
  Denoiser& model() { return model_; }
  const Denoiser& model() const { return model_; }
  const DiffusionSchedule& schedule() const { return schedule_; }

  void save(const std::filesystem::path& path);

 private:
  TrainConfig config_;
  std::vector<TrainingExample> data_;
  PromptVocabulary vocabulary_;
  GroupMap groups_;
  DiffusionSchedule schedule_;
  Denoiser model_;
  AdamW optimizer_;
  Rng rng_;
  std::size_t iteration_ = 0;
};

// A trained model and everything needed to sample from it.
struct LoadedModel {
  Denoiser model;
  PromptVocabulary vocabulary;
  GroupMap groups;
  LatentCodec codec;
  DiffusionSchedule schedule;
  TrainConfig config;
  std::size_t iteration = 0;
};

// Throws ModelError when the file is missing or malformed.
LoadedModel load_model(const std::filesystem::path& checkpoint);

} // namespace effortgen
