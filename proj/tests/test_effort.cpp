#include <doctest.h>

#include "effortgen/effort.hpp"
#include "effortgen/errors.hpp"
#include "test_support.hpp"

using namespace effortgen;

TEST_SUITE("effort") {

TEST_CASE("hand fixture matches numpy reference") {
  // 4 frames, 3 joints; group a = {0, 1}, group b = {2}.
  const std::vector<double> pos = {0, 0, 0, 1, 0, 0, 0, 0, 5,  //
                                   3, 4, 0, 1, 0, 1, 0, 0, 5,  //
                                   3, 4, 12, 1, 0, 1, 0, 2, 5, //
                                   0, 0, 0, 1, 0, 1, 0, 2, 6};
  const MotionSequence m(20, 3, pos);
  const GroupMap g({{"a", {0, 1}}, {"b", {2}}}, 3);
  const EffortMetrics e = effort_metrics(m, g);
  CHECK(e.peak(0) == 6.5);
  CHECK(e.collective(0) == 15.5);
  CHECK(e.peak(1) == 2.0);
  CHECK(e.collective(1) == 3.0);
  CHECK(e.flattened() == std::vector<double>{6.5, 15.5, 2.0, 3.0});
}

TEST_CASE("static motion has zero effort") {
  const MotionSequence m(20, 22, std::vector<double>(5 * 22 * 3, 0.7));
  const EffortMetrics e = effort_metrics(m, default_group_map());
  for (std::size_t g = 0; g < e.regions(); ++g) {
    CHECK(e.peak(g) == 0.0);
    CHECK(e.collective(g) == 0.0);
  }
}

TEST_CASE("random motions agree with the scalar oracle") {
  Rng rng(17);
  const GroupMap groups = default_group_map();
  for (int i = 0; i < 20; ++i) {
    const MotionSequence m = testsupport::random_motion(rng, 2 + rng.below(30));
    const EffortMetrics e = effort_metrics(m, groups);
    const auto o = testsupport::oracle_effort(m, groups);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      CHECK(testsupport::rel_err(e.peak(g), o.peak[g]) <= 1e-12);
      CHECK(testsupport::rel_err(e.collective(g), o.collective[g]) <= 1e-12);
    }
  }
}

TEST_CASE("joint and group diffs have T-1 rows") {
  Rng rng(2);
  const MotionSequence m = testsupport::random_motion(rng, 6);
  const FrameMatrix d = joint_diffs(m);
  CHECK(d.rows == 5);
  CHECK(d.cols == 22);
  const FrameMatrix gd = group_diffs(d, default_group_map());
  CHECK(gd.rows == 5);
  CHECK(gd.cols == 7);
}

TEST_CASE("group map must match the motion") {
  const MotionSequence m(20, 3, std::vector<double>(2 * 3 * 3, 0.0));
  CHECK_THROWS_AS(effort_metrics(m, default_group_map()), ValidationError);
}

TEST_CASE("baseline constants") {
  const EffortMetrics b = baseline_metrics();
  CHECK(b.peak() == std::vector<double>{0.010, 0.015, 0.015, 0.010, 0.014, 0.014, 0.012});
  CHECK(b.collective() == std::vector<double>{1.256, 1.279, 1.279, 1.252, 1.293, 1.295, 1.262});
}

TEST_CASE("scaling and direct assignment") {
  const EffortMetrics b = baseline_metrics();
  CHECK(scale_metrics(b, 1.0, {}) == b);
  const std::vector<std::size_t> arms = {4, 5};
  const EffortMetrics s = scale_metrics(b, 1.3, arms);
  CHECK(s.peak(4) == 0.014 * 1.3);
  CHECK(s.collective(5) == 1.295 * 1.3);
  CHECK(s.peak(0) == b.peak(0));
  const EffortMetrics z = scale_metrics(b, 0.0, {});
  CHECK(z.peak(3) == 0.0);
  CHECK_THROWS_AS(scale_metrics(b, -1.0, {}), ValidationError);
  CHECK_THROWS_AS(scale_metrics(b, 1.0, std::vector<std::size_t>{9}), ValidationError);
  const EffortMetrics a = set_metrics(b, 4, 0.3, 1.0);
  CHECK(a.peak(4) == 0.3);
  CHECK(a.collective(4) == 1.0);
  CHECK_THROWS_AS(set_metrics(b, 4, -0.3, 1.0), ValidationError);
}

TEST_CASE("metrics JSON round trip") {
  const GroupMap g = default_group_map();
  const EffortMetrics b = baseline_metrics();
  const auto j = metrics_to_json(b, g);
  CHECK(j.at("regions").at(0) == "root");
  CHECK(metrics_from_json(j) == b);
  CHECK_THROWS(metrics_from_json(nlohmann::json{{"peak", {0.1}}, {"collective", {0.1, 0.2}}}));
}

}
