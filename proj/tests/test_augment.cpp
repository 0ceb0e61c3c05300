#include <doctest.h>

#include <fstream>

#include "effortgen/augment.hpp"
#include "effortgen/errors.hpp"
#include "test_support.hpp"

using namespace effortgen;

namespace {

MotionSequence ramp(std::size_t frames) {
  std::vector<double> pos;
  for (std::size_t t = 0; t < frames; ++t) {
    pos.insert(pos.end(), {double(t), 0.0, 0.0, 0.0, double(2 * t), 0.0});
  }
  return MotionSequence(20, 2, pos, "a person walks");
}

}

TEST_SUITE("augment") {

TEST_CASE("speed up keeps every (k+1)th frame") {
  const MotionSequence s = speed_up(ramp(7), 2);
  REQUIRE(s.frames() == 3);
  CHECK(s.coord(1, 0, 0) == 3.0);
  CHECK(s.coord(2, 1, 1) == 12.0);
  CHECK(s.fps() == 20);
  CHECK(s.label() == "a person walks");
  CHECK(speed_up(ramp(8), 1).frames() == 4);
}

TEST_CASE("slow down interpolates between frames") {
  const MotionSequence s = slow_down(ramp(3), 1);
  REQUIRE(s.frames() == 5);
  CHECK(s.coord(1, 0, 0) == 0.5);
  CHECK(s.coord(3, 1, 1) == 3.0);
  CHECK(slow_down(ramp(3), 2).frames() == 7);
}

TEST_CASE("pacing parameters are bounded") {
  CHECK_THROWS_AS(speed_up(ramp(9), 0), ValidationError);
  CHECK_THROWS_AS(speed_up(ramp(9), 3), ValidationError);
  CHECK_NOTHROW(speed_up(ramp(9), 3, 3));
  CHECK_THROWS_AS(slow_down(ramp(9), 0), ValidationError);
  CHECK_THROWS_AS(slow_down(ramp(9), 3), ValidationError);
  CHECK_THROWS_AS(speed_up(ramp(2), 1), ValidationError);
}

TEST_CASE("constant velocity: peak scales with pacing, collective is preserved") {
  const GroupMap g({{"a", {0}}, {"b", {1}}}, 2);
  const MotionSequence m = ramp(13);
  const EffortMetrics base = effort_metrics(m, g);
  const EffortMetrics fast = effort_metrics(speed_up(m, 2), g);
  const EffortMetrics slow = effort_metrics(slow_down(m, 2), g);
  CHECK(fast.peak(0) == doctest::Approx(3.0 * base.peak(0)).epsilon(1e-12));
  CHECK(slow.peak(1) == doctest::Approx(base.peak(1) / 3.0).epsilon(1e-12));
  CHECK(fast.collective(0) == doctest::Approx(base.collective(0)).epsilon(1e-12));
  CHECK(slow.collective(1) == doctest::Approx(base.collective(1)).epsilon(1e-12));
}

TEST_CASE("corpus augmentation writes outputs and a manifest") {
  const auto in = testsupport::fresh_dir("aug_in");
  const auto out = testsupport::fresh_dir("aug_out");
  SynthCorpusOptions o;
  o.count = 3;
  o.frames = 12;
  auto corpus = synth_corpus(o);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    save_motion(corpus[i], in / ("m" + std::to_string(i) + ".json"));
  }
  std::ofstream(in / "broken.json") << "[";
  std::ofstream(in / "run.json") << "{}";
  const AugmentResult r = augment_corpus(in, out, {1, 2}, {1});
  CHECK(r.records.size() == 3 * 4);
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0].first.find("broken.json") != std::string::npos);
  const auto manifest = read_manifest(out / "manifest.jsonl");
  REQUIRE(manifest.size() == r.records.size());
  for (const auto& rec : manifest) {
    const MotionSequence m = load_motion(out / rec.out);
    CHECK(effort_metrics(m, default_group_map()) == rec.metrics);
  }
  CHECK_THROWS_AS(augment_corpus(in / "nope", out, {1}, {1}), IoError);
}

}
