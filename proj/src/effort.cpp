#include "effortgen/effort.hpp"

#include <algorithm>
#include <cmath>

#include "effortgen/errors.hpp"

namespace effortgen {

namespace {

void check_row(double peak, double collective) {
  if (!std::isfinite(peak) || !std::isfinite(collective) || peak < 0.0 || collective < 0.0) {
    throw ValidationError("effort metrics must be finite and non-negative");
  }
}

} // namespace

EffortMetrics::EffortMetrics(std::size_t regions) : peak_(regions, 0.0), collective_(regions, 0.0) {}

EffortMetrics::EffortMetrics(std::vector<double> peak, std::vector<double> collective)
    : peak_(std::move(peak)), collective_(std::move(collective)) {
  if (peak_.size() != collective_.size()) {
    throw ValidationError("peak and collective columns differ in length");
  }
  for (std::size_t g = 0; g < peak_.size(); ++g) {
    check_row(peak_[g], collective_[g]);
  }
}

std::vector<double> EffortMetrics::flattened() const {
  std::vector<double> out(peak_.size() * kMetricsPerRegion);
  for (std::size_t g = 0; g < peak_.size(); ++g) {
    out[g * 2] = peak_[g];
    out[g * 2 + 1] = collective_[g];
  }
  return out;
}

void EffortMetrics::set(std::size_t g, double peak, double collective) {
  check_row(peak, collective);
  peak_.at(g) = peak;
  collective_.at(g) = collective;
}

FrameMatrix joint_diffs(const MotionSequence& m) {
  const std::size_t steps = m.frames() - 1;
  const std::size_t joints = m.joints();
  FrameMatrix out{steps, joints, std::vector<double>(steps * joints)};
  const auto pos = m.positions();
  for (std::size_t t = 0; t < steps; ++t) {
    const double* a = pos.data() + t * joints * 3;
    const double* b = a + joints * 3;
    for (std::size_t j = 0; j < joints; ++j) {
      const double dx = b[3 * j] - a[3 * j];
      const double dy = b[3 * j + 1] - a[3 * j + 1];
      const double dz = b[3 * j + 2] - a[3 * j + 2];
      out(t, j) = std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  }
  return out;
}

FrameMatrix group_diffs(const FrameMatrix& diffs, const GroupMap& groups) {
  if (diffs.cols != groups.joint_count()) {
    throw ValidationError("joint diffs have " + std::to_string(diffs.cols) +
                          " joints, group map expects " + std::to_string(groups.joint_count()));
  }
  FrameMatrix out{diffs.rows, groups.size(), std::vector<double>(diffs.rows * groups.size())};
  for (std::size_t t = 0; t < diffs.rows; ++t) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& members = groups[g].joints;
      double sum = 0.0;
      for (std::size_t j : members) {
        sum += diffs(t, j);
      }
      out(t, g) = sum / static_cast<double>(members.size());
    }
  }
  return out;
}

EffortMetrics effort_metrics(const MotionSequence& m, const GroupMap& groups) {
  const FrameMatrix per_group = group_diffs(joint_diffs(m), groups);
  std::vector<double> peak(groups.size(), 0.0);
  std::vector<double> collective(groups.size(), 0.0);
  for (std::size_t t = 0; t < per_group.rows; ++t) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      peak[g] = std::max(peak[g], per_group(t, g));
      collective[g] += per_group(t, g);
    }
  }
  return EffortMetrics(std::move(peak), std::move(collective));
}

EffortMetrics baseline_metrics() {
  // root, left lower, right lower, spine, left upper, right upper, head
  return EffortMetrics({0.010, 0.015, 0.015, 0.010, 0.014, 0.014, 0.012},
                       {1.256, 1.279, 1.279, 1.252, 1.293, 1.295, 1.262});
}

EffortMetrics scale_metrics(const EffortMetrics& base, double multiplier,
                            std::span<const std::size_t> regions) {
  if (!(multiplier >= 0.0) || !std::isfinite(multiplier)) {
    throw ValidationError("metric multiplier must be finite and >= 0");
  }
  EffortMetrics out = base;
  auto apply = [&](std::size_t g) {
    if (g >= base.regions()) {
      throw ValidationError("region index " + std::to_string(g) + " out of range");
    }
    out.set(g, base.peak(g) * multiplier, base.collective(g) * multiplier);
  };
  if (regions.empty()) {
    for (std::size_t g = 0; g < base.regions(); ++g) {
      apply(g);
    }
  } else {
    for (std::size_t g : regions) {
      apply(g);
    }
  }
  return out;
}

EffortMetrics set_metrics(const EffortMetrics& base, std::size_t region, double peak,
                          double collective) {
  if (region >= base.regions()) {
    throw ValidationError("region index " + std::to_string(region) + " out of range");
  }
  EffortMetrics out = base;
  out.set(region, peak, collective);
  return out;
}

nlohmann::json metrics_to_json(const EffortMetrics& m, const GroupMap& groups) {
  if (m.regions() != groups.size()) {
    throw ValidationError("metrics/group map region count mismatch");
  }
  return {{"regions", groups.names()}, {"peak", m.peak()}, {"collective", m.collective()}};
}

EffortMetrics metrics_from_json(const nlohmann::json& j) {
  try {
    return EffortMetrics(j.at("peak").get<std::vector<double>>(),
                         j.at("collective").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metrics: ") + e.what());
  }
}

} // namespace effortgen
