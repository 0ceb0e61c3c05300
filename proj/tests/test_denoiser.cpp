#include <doctest.h>

#include <set>

#include "effortgen/denoiser.hpp"
#include "effortgen/errors.hpp"
#include "test_support.hpp"

using namespace effortgen;
using effortgen::nn::Tensor;

namespace {

DenoiserConfig small_config(ConditioningMode mode = ConditioningMode::kRegion) {
  DenoiserConfig c;
  c.latent_dim = 8;
  c.heads = 2;
  c.layers = 1;
  c.mode = mode;
  return c;
}

}

TEST_SUITE("denoiser") {

TEST_CASE("config validation and JSON round trip") {
  DenoiserConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  const DenoiserConfig p = DenoiserConfig::full_scale();
  CHECK(p.latent_dim == 256);
  CHECK(p.heads == 8);
  CHECK(p.layers == 5);
  const DenoiserConfig back = DenoiserConfig::from_json(p.to_json());
  CHECK(back.latent_dim == 256);
  CHECK(back.mode == p.mode);
  CHECK(conditioning_mode_from_string(to_string(ConditioningMode::kGlobal)) ==
        ConditioningMode::kGlobal);
  CHECK_THROWS(conditioning_mode_from_string("sideways"));
}

TEST_CASE("codec round trips motions exactly enough") {
  const LatentCodec codec(default_group_map(), 16, 5.0);
  const MotionSequence m = synth_motion(4, 0.1, 1.0, 10, 3);
  const Tensor z = codec.encode(m);
  CHECK(z.shape() == std::vector<std::size_t>{10, 7, 16});
  const MotionSequence back = codec.decode(z);
  for (std::size_t i = 0; i < m.positions().size(); ++i) {
    CHECK(back.positions()[i] == doctest::Approx(m.positions()[i]).epsilon(1e-12));
  }
  Tensor zero({10, 7, 16});
  const MotionSequence rest = codec.decode(zero);
  CHECK(rest.at(5, 3) == rest_pose()[3]);
}

TEST_CASE("forward output shape and input checks") {
  const Denoiser model(small_config(), 1);
  Rng rng(2);
  const Tensor z = testsupport::random_tensor({3, 7, 8}, rng);
  const auto metrics = baseline_metrics().flattened();
  const Tensor v = model.forward(z, 10, 2, metrics);
  CHECK(v.shape() == z.shape());
  CHECK(v.all_finite());
  CHECK_THROWS_AS(model.forward(z, 10, 2, std::vector<double>(3, 0.0)), ValidationError);
  CHECK_THROWS_AS(model.forward(Tensor({3, 6, 8}), 10, 2, metrics), ValidationError);
  CHECK_THROWS(model.forward(z, 10, 99, metrics));
}

TEST_CASE("forward is deterministic without dropout") {
  const Denoiser model(small_config(), 4);
  Rng rng(5);
  const Tensor z = testsupport::random_tensor({2, 7, 8}, rng);
  const auto metrics = baseline_metrics().flattened();
  CHECK(model.forward(z, 3, std::nullopt, metrics) == model.forward(z, 3, std::nullopt, metrics));
}

TEST_CASE("metrics change the output once the model is randomized") {
  Denoiser model(small_config(), 6);
  Rng rng(7);
  testsupport::randomize(model.parameters(), rng);
  const Tensor z = testsupport::random_tensor({2, 7, 8}, rng);
  const auto a = baseline_metrics().flattened();
  const auto b = scale_metrics(baseline_metrics(), 1.3).flattened();
  CHECK(nn::max_abs_diff(model.forward(z, 3, 0, a), model.forward(z, 3, 0, b)) > 1e-9);
}

TEST_CASE("zeroed output projections give the identity") {
  Denoiser model(small_config(), 8);
  Rng rng(9);
  testsupport::randomize(model.parameters(), rng);
  model.zero_output_projections();
  const Tensor z = testsupport::random_tensor({4, 7, 8}, rng);
  CHECK(model.forward(z, 500, 1, baseline_metrics().flattened()) == z);
}

TEST_CASE("global conditioning forward requires global mode") {
  const Denoiser region(small_config(), 1);
  const Denoiser global(small_config(ConditioningMode::kGlobal), 1);
  const Tensor z({2, 7, 8}, 0.1);
  const auto m = baseline_metrics().flattened();
  CHECK_THROWS(region.global_conditioning_forward(z, 1, 0, m));
  CHECK(global.global_conditioning_forward(z, 1, 0, m) == global.forward(z, 1, 0, m));
}

TEST_CASE("text embedding lookup") {
  const Denoiser model(small_config(), 1);
  const PromptVocabulary vocab = default_vocabulary();
  CHECK(model.embed_text("a person jumps", vocab).source == 12);
  CHECK_FALSE(model.embed_text(std::nullopt, vocab).source.has_value());
  CHECK_THROWS_AS(model.embed_text("a person flies", vocab), ValidationError);
}

TEST_CASE("parameter names are unique") {
  Denoiser model(small_config(), 1);
  std::set<std::string> names;
  for (auto* p : model.parameters()) CHECK(names.insert(p->name).second);
  CHECK(names.count("text_table") == 1);
  CHECK(names.count("blocks.0.metric.region_identity") == 1);
}

}
