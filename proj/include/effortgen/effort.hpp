#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "effortgen/motion.hpp"

namespace effortgen {

inline constexpr std::size_t kMetricsPerRegion = 2;

// Dense row-major real matrix used for per-frame effort signals.
struct FrameMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

// Per-region (peak change, collective change) pairs. Peak is in meters per
// frame, collective in meters summed over the clip.
class EffortMetrics {
 public:
  explicit EffortMetrics(std::size_t regions = 0);
  EffortMetrics(std::vector<double> peak, std::vector<double> collective);

  std::size_t regions() const { return peak_.size(); }
  double peak(std::size_t g) const { return peak_[g]; }
  double collective(std::size_t g) const { return collective_[g]; }
  double value(std::size_t g, std::size_t column) const {
    return column == 0 ? peak_[g] : collective_[g];
  }
  const std::vector<double>& peak() const { return peak_; }
  const std::vector<double>& collective() const { return collective_; }

  // Row-major [regions x 2] copy, the layout the denoiser consumes.
  std::vector<double> flattened() const;

  void set(std::size_t g, double peak, double collective);

  friend bool operator==(const EffortMetrics&, const EffortMetrics&) = default;

 private:
  std::vector<double> peak_;
  std::vector<double> collective_;
};

// ||pos[t+1, j] - pos[t, j]|| for t in 0..T-2.
FrameMatrix joint_diffs(const MotionSequence& m);

// Mean of joint_diffs over each group's joints.
FrameMatrix group_diffs(const FrameMatrix& diffs, const GroupMap& groups);

EffortMetrics effort_metrics(const MotionSequence& m, const GroupMap& groups);

// Average HumanML3D values for the seven default regions.
EffortMetrics baseline_metrics();

// Multiplies the rows named in `regions` (all rows when empty) by `multiplier`.
EffortMetrics scale_metrics(const EffortMetrics& base, double multiplier,
                            std::span<const std::size_t> regions = {});

// Assigns a fixed (peak, collective) pair to one region.
EffortMetrics set_metrics(const EffortMetrics& base, std::size_t region, double peak,
                          double collective);

nlohmann::json metrics_to_json(const EffortMetrics& m, const GroupMap& groups);
EffortMetrics metrics_from_json(const nlohmann::json& j);

} // namespace effortgen
