#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "effortgen/denoiser.hpp"
#include "effortgen/diffusion.hpp"
#include "effortgen/effort.hpp"
#include "effortgen/motion.hpp"

namespace effortgen {

// Largest sample size for which p-values are computed by full enumeration.
inline constexpr std::size_t kExactSpearmanLimit = 8;
inline constexpr double kMonotonicityMaxP = 0.05;
inline constexpr double kMonotonicityMinRho = 0.5;

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;  // one-sided, H1: positive association
  bool degenerate = false;  // an input was constant; rho reported as 0
};

// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Spearman rank correlation. For n <= 8 the p-value is the exact fraction of
// the n! rearrangements of y whose correlation is at least the observed one;
// larger samples use the Student-t approximation.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

// p < 0.05 and rho > 0.5 (strict on both).
bool is_monotone_pass(const SpearmanResult& r);

struct EffortMae {
  double peak = 0.0;
  double collective = 0.0;
};

EffortMae effort_mae(const std::vector<EffortMetrics>& generated,
                     const std::vector<EffortMetrics>& target);

struct LabanDescriptors {
  double weight = 0.0;  // max_t sum_j |v|^2
  double time = 0.0;    // max_t sum_j |a|
  double flow = 0.0;    // max_t sum_j |jerk|
};

// Forward differences in meters per frame.
LabanDescriptors laban_descriptors(const MotionSequence& m);

// Measured metric values of one (action, region) over ordered effort scales.
struct RegionSeries {
  std::string action;
  std::string region;
  std::vector<double> scales;
  std::vector<double> peak;
  std::vector<double> collective;
};

struct ActionLabanSeries {
  std::string action;
  std::vector<double> scales;
  std::vector<double> weight;
  std::vector<double> time;
  std::vector<double> flow;
};

struct MonotonicityRates {
  double peak = 0.0;        // percent
  double collective = 0.0;  // percent
};

struct LabanRates {
  double weight = 0.0;  // percent
  double flow = 0.0;
  double time = 0.0;
};

MonotonicityRates structural_monotonicity(const std::vector<RegionSeries>& series,
                                          std::size_t levels = 7);
LabanRates laban_monotonicity(const std::vector<ActionLabanSeries>& series, std::size_t levels = 7);

// Reference values reported for the full-size model trained on HumanML3D.
// They are not reproducible with the synthetic corpus and are kept for
// side-by-side reporting only.
struct ReferenceResults {
  static constexpr double kPeakMae = 0.0597;
  static constexpr double kCollectiveMae = 1.574;
  static constexpr double kStructuralPeak = 74.5;
  static constexpr double kStructuralCollective = 60.2;
  static constexpr double kLabanWeight = 78.6;
  static constexpr double kLabanFlow = 85.7;
  static constexpr double kLabanTime = 92.9;
};

// One row of the flat trend CSV.
struct Measurement {
  std::string action;
  std::string region;  // "all" for Laban descriptors
  std::string metric;  // peak, collective, weight, time, flow
  double scale = 0.0;
  std::uint64_t seed = 0;
  double value = 0.0;
};

struct SeriesVerdict {
  std::string action;
  std::string region;
  std::string metric;
  std::vector<double> values;  // seed-averaged, one per scale
  SpearmanResult stats;
  bool pass = false;
};

struct TrendReport {
  std::vector<double> scales;
  std::vector<std::uint64_t> seeds;
  std::vector<Measurement> measurements;
  std::vector<SeriesVerdict> structural;  // metric peak/collective
  std::vector<SeriesVerdict> laban;       // metric weight/time/flow, region "all"
  MonotonicityRates structural_rates;
  LabanRates laban_rates;

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Groups measurements into series, averages seeds, and applies the
// monotonicity test. Throws ValidationError when any (action, region,
// metric) lacks a scale/seed combination.
TrendReport build_trend_report(std::vector<Measurement> measurements);

std::vector<Measurement> parse_trend_csv(const std::string& text);

// Mean effort metrics of the labelled motions, keyed by label.
std::map<std::string, EffortMetrics> mean_metrics_by_label(const std::vector<MotionSequence>& motions,
                                                           const GroupMap& groups);

struct TrendRequest {
  std::vector<std::string> prompts;
  std::vector<double> scales = {0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::size_t frames = 120;
  std::size_t steps = 50;
  double guidance = 7.5;
  // Per-prompt base metrics; prompts without an entry use baseline_metrics().
  std::map<std::string, EffortMetrics> base_metrics;
  // Regions whose metrics are scaled; empty scales all.
  std::vector<std::size_t> regions;
};

TrendReport trend_run(const Denoiser& model, const LatentCodec& codec,
                      const PromptVocabulary& vocabulary, const DiffusionSchedule& schedule,
                      const TrendRequest& request);

} // namespace effortgen
