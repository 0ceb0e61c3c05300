#include <doctest.h>

#include "effortgen/errors.hpp"
#include "effortgen/evaluation.hpp"
#include "test_support.hpp"

using namespace effortgen;

TEST_SUITE("evaluation") {

TEST_CASE("average ranks share ties") {
  const std::vector<double> a = {3, 1, 4, 1, 5};
  CHECK(average_ranks(a) == std::vector<double>{3, 1.5, 4, 1.5, 5});
  const std::vector<double> b = {2, 7, 1, 8, 2};
  CHECK(average_ranks(b) == std::vector<double>{2.5, 4, 1, 5, 2.5});
}

TEST_CASE("spearman exact regime") {
  const std::vector<double> x = {1, 2, 3, 4, 5, 6, 7};
  std::vector<double> y = {0.1, 0.2, 0.5, 0.7, 0.8, 1.0, 1.4};
  SpearmanResult r = spearman(x, y);
  CHECK(r.rho == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.p_value == doctest::Approx(1.0 / 5040.0).epsilon(1e-12));
  CHECK(is_monotone_pass(r));
  std::reverse(y.begin(), y.end());
  r = spearman(x, y);
  CHECK(r.rho == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(r.p_value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(is_monotone_pass(r));
}

TEST_CASE("spearman tied fixture matches scipy") {
  const std::vector<double> x = {3, 1, 4, 1, 5};
  const std::vector<double> y = {2, 7, 1, 8, 2};
  const SpearmanResult r = spearman(x, y);
  CHECK(r.rho == doctest::Approx(-0.7894736842105264).epsilon(1e-14));
  CHECK(r.p_value == doctest::Approx(116.0 / 120.0).epsilon(1e-12));
}

TEST_CASE("spearman t approximation above the exact limit") {
  const std::vector<double> x = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> y = {0.3, 0.1, 0.5, 0.4, 0.9, 0.7, 0.6, 1.2, 1.0};
  const SpearmanResult r = spearman(x, y);
  CHECK(r.rho == doctest::Approx(0.8833333333333333).epsilon(1e-14));
  CHECK(r.p_value == doctest::Approx(0.0007952502117489343).epsilon(1e-9));
}

TEST_CASE("constant series are degenerate and fail") {
  const std::vector<double> x = {1, 2, 3, 4};
  const std::vector<double> y = {2, 2, 2, 2};
  const SpearmanResult r = spearman(x, y);
  CHECK(r.degenerate);
  CHECK(r.rho == 0.0);
  CHECK(r.p_value == 1.0);
  CHECK_FALSE(is_monotone_pass(r));
  CHECK_THROWS_AS(spearman(x, std::vector<double>{1, 2}), ValidationError);
}

TEST_CASE("thresholds are strict") {
  CHECK_FALSE(is_monotone_pass({0.5, 0.01, false}));
  CHECK_FALSE(is_monotone_pass({0.9, 0.05, false}));
  CHECK(is_monotone_pass({0.51, 0.049, false}));
}

TEST_CASE("effort MAE") {
  const std::vector<EffortMetrics> g = {EffortMetrics({1.0, 2.0}, {3.0, 4.0})};
  const std::vector<EffortMetrics> t = {EffortMetrics({1.5, 1.0}, {3.0, 6.0})};
  const EffortMae m = effort_mae(g, t);
  CHECK(m.peak == doctest::Approx(0.75));
  CHECK(m.collective == doctest::Approx(1.0));
  CHECK_THROWS_AS(effort_mae(g, {}), ValidationError);
}

TEST_CASE("laban descriptors on the hand fixture") {
  const std::vector<double> pos = {0, 0, 0, 1, 0, 0, 0, 0, 5,  //
                                   3, 4, 0, 1, 0, 1, 0, 0, 5,  //
                                   3, 4, 12, 1, 0, 1, 0, 2, 5, //
                                   0, 0, 0, 1, 0, 1, 0, 2, 6};
  const LabanDescriptors d = laban_descriptors(MotionSequence(20, 3, pos));
  CHECK(d.weight == doctest::Approx(170.0).epsilon(1e-14));
  CHECK(d.time == doctest::Approx(26.751369321762315).epsilon(1e-14));
  CHECK(d.flow == doctest::Approx(41.12310562561766).epsilon(1e-14));
  CHECK_THROWS_AS(laban_descriptors(MotionSequence(20, 1, std::vector<double>(9, 0.0))),
                  ValidationError);
}

TEST_CASE("laban descriptors agree with the oracle") {
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    const MotionSequence m = testsupport::random_motion(rng, 4 + rng.below(20));
    const LabanDescriptors d = laban_descriptors(m);
    const auto o = testsupport::oracle_laban(m);
    CHECK(testsupport::rel_err(d.weight, o.weight) <= 1e-12);
    CHECK(testsupport::rel_err(d.time, o.time) <= 1e-12);
    CHECK(testsupport::rel_err(d.flow, o.flow) <= 1e-12);
  }
}

TEST_CASE("monotonicity rates count passing series") {
  const std::vector<double> scales = {0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3};
  const std::vector<double> up = {1, 2, 3, 4, 5, 6, 7};
  const std::vector<double> down = {7, 6, 5, 4, 3, 2, 1};
  const std::vector<RegionSeries> series = {{"a", "r1", scales, up, up},
                                            {"a", "r2", scales, up, down},
                                            {"b", "r1", scales, down, down},
                                            {"b", "r2", scales, up, up}};
  const MonotonicityRates r = structural_monotonicity(series);
  CHECK(r.peak == doctest::Approx(75.0));
  CHECK(r.collective == doctest::Approx(50.0));
  const LabanRates l = laban_monotonicity({{"a", scales, up, down, up}});
  CHECK(l.weight == 100.0);
  CHECK(l.time == 0.0);
  CHECK(l.flow == 100.0);
  CHECK_THROWS_AS(structural_monotonicity({{"a", "r", {1, 2}, {1, 2}, {1, 2}}}), ValidationError);
}

TEST_CASE("trend report averages seeds and round trips through CSV") {
  std::vector<Measurement> ms;
  for (double s : {0.8, 1.0, 1.2}) {
    for (std::uint64_t seed : {0u, 1u}) {
      ms.push_back({"a person walks", "root", "peak", s, seed, s + 0.1 * double(seed)});
      ms.push_back({"a person walks", "root", "collective", s, seed, 2.0 - s});
      ms.push_back({"a person walks", "all", "weight", s, seed, s});
      ms.push_back({"a person walks", "all", "time", s, seed, s});
      ms.push_back({"a person walks", "all", "flow", s, seed, s});
    }
  }
  const TrendReport r = build_trend_report(ms);
  REQUIRE(r.structural.size() == 2);
  CHECK(r.structural[0].values[0] == doctest::Approx(0.85));
  CHECK(r.structural[0].stats.rho == doctest::Approx(1.0));
  CHECK_FALSE(r.structural[1].pass);
  CHECK(r.laban.size() == 3);
  CHECK(r.seeds == std::vector<std::uint64_t>{0, 1});
  const auto parsed = parse_trend_csv(r.to_csv());
  REQUIRE(parsed.size() == ms.size());
  CHECK(parsed[3].value == ms[3].value);
  CHECK(build_trend_report(parsed).to_json() == r.to_json());

  auto missing = ms;
  missing.pop_back();
  CHECK_THROWS_AS(build_trend_report(missing), ValidationError);
  auto dup = ms;
  dup.push_back(ms[0]);
  CHECK_THROWS_AS(build_trend_report(dup), ValidationError);
  CHECK_THROWS_AS(parse_trend_csv("action,region\nx"), ParseError);
}

TEST_CASE("mean metrics by label") {
  const GroupMap g = default_group_map();
  const MotionSequence a = synth_motion(1, 0.1, 1.0, 10, 1);
  const MotionSequence b = synth_motion(1, 0.2, 1.0, 10, 2);
  const auto means = mean_metrics_by_label({a, b}, g);
  REQUIRE(means.size() == 1);
  const auto& m = means.at("a person walks");
  const EffortMetrics ea = effort_metrics(a, g);
  const EffortMetrics eb = effort_metrics(b, g);
  CHECK(m.peak(1) == doctest::Approx((ea.peak(1) + eb.peak(1)) / 2.0));
}

}
