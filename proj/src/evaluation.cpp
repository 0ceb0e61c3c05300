#include "effortgen/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>

#include "effortgen/errors.hpp"

namespace effortgen {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t k = i;
    while (k + 1 < n && values[order[k + 1]] == values[order[i]]) {
      ++k;
    }
    const double mean_rank = 0.5 * static_cast<double>(i + k) + 1.0;
    for (std::size_t m = i; m <= k; ++m) {
      ranks[order[m]] = mean_rank;
    }
    i = k + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0;
  double va = 0.0;
  double vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

} // namespace

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ValidationError("spearman: inputs differ in length");
  }
  const std::size_t n = x.size();
  if (n < 3) {
    throw ValidationError("spearman needs at least 3 pairs");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw ValidationError("spearman: non-finite input");
    }
  }
  if (is_constant(x) || is_constant(y)) {
    return {0.0, 1.0, true};
  }
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  SpearmanResult r;
  r.rho = std::clamp(pearson(rx, ry), -1.0, 1.0);

  if (n <= kExactSpearmanLimit) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<double> shuffled(n);
    std::size_t at_least = 0;
    std::size_t total = 0;
    // Tolerance absorbs rounding between algebraically equal correlations.
    const double threshold = r.rho - 1e-12;
    do {
      for (std::size_t i = 0; i < n; ++i) {
        shuffled[i] = ry[perm[i]];
      }
      if (pearson(rx, shuffled) >= threshold) {
        ++at_least;
      }
      ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    r.p_value = static_cast<double>(at_least) / static_cast<double>(total);
  } else {
    const double dof = static_cast<double>(n - 2);
    if (r.rho >= 1.0) {
      r.p_value = 0.0;
    } else if (r.rho <= -1.0) {
      r.p_value = 1.0;
    } else {
      const double t = r.rho * std::sqrt(dof / (1.0 - r.rho * r.rho));
      const boost::math::students_t dist(dof);
      r.p_value = boost::math::cdf(boost::math::complement(dist, t));
    }
  }
  return r;
}

bool is_monotone_pass(const SpearmanResult& r) {
  return !r.degenerate && r.p_value < kMonotonicityMaxP && r.rho > kMonotonicityMinRho;
}

EffortMae effort_mae(const std::vector<EffortMetrics>& generated,
                     const std::vector<EffortMetrics>& target) {
  if (generated.size() != target.size() || generated.empty()) {
    throw ValidationError("effort_mae: sets must be non-empty and equal in size");
  }
  double peak = 0.0;
  double collective = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    if (generated[i].regions() != target[i].regions()) {
      throw ValidationError("effort_mae: region count mismatch at sample " + std::to_string(i));
    }
    for (std::size_t g = 0; g < generated[i].regions(); ++g) {
      peak += std::abs(generated[i].peak(g) - target[i].peak(g));
      collective += std::abs(generated[i].collective(g) - target[i].collective(g));
      ++count;
    }
  }
  return {peak / static_cast<double>(count), collective / static_cast<double>(count)};
}

LabanDescriptors laban_descriptors(const MotionSequence& m) {
  const std::size_t frames = m.frames();
  if (frames < 4) {
    throw ValidationError("Laban descriptors need at least 4 frames");
  }
  const std::size_t joints = m.joints();
  const std::size_t row = joints * 3;
  const auto pos = m.positions();
  std::vector<double> vel((frames - 1) * row);
  for (std::size_t t = 0; t + 1 < frames; ++t) {
    for (std::size_t i = 0; i < row; ++i) {
      vel[t * row + i] = pos[(t + 1) * row + i] - pos[t * row + i];
    }
  }
  std::vector<double> acc((frames - 2) * row);
  for (std::size_t t = 0; t + 2 < frames; ++t) {
    for (std::size_t i = 0; i < row; ++i) {
      acc[t * row + i] = vel[(t + 1) * row + i] - vel[t * row + i];
    }
  }
  std::vector<double> jerk((frames - 3) * row);
  for (std::size_t t = 0; t + 3 < frames; ++t) {
    for (std::size_t i = 0; i < row; ++i) {
      jerk[t * row + i] = acc[(t + 1) * row + i] - acc[t * row + i];
    }
  }
  auto frame_sum = [&](const std::vector<double>& d, std::size_t t, bool squared) {
    double s = 0.0;
    for (std::size_t j = 0; j < joints; ++j) {
      const double* p = d.data() + t * row + 3 * j;
      const double sq = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
      s += squared ? sq : std::sqrt(sq);
    }
    return s;
  };
  LabanDescriptors out;
  for (std::size_t t = 0; t + 1 < frames; ++t) {
    out.weight = std::max(out.weight, frame_sum(vel, t, true));
  }
  for (std::size_t t = 0; t + 2 < frames; ++t) {
    out.time = std::max(out.time, frame_sum(acc, t, false));
  }
  for (std::size_t t = 0; t + 3 < frames; ++t) {
    out.flow = std::max(out.flow, frame_sum(jerk, t, false));
  }
  return out;
}

namespace {

void check_levels(const std::vector<double>& scales, std::size_t values, std::size_t levels,
                  const std::string& what) {
  if (scales.size() != levels || values != levels) {
    throw ValidationError(what + ": expected " + std::to_string(levels) + " scale levels, got " +
                          std::to_string(std::min(scales.size(), values)));
  }
}

double percent(std::size_t passes, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(passes) / static_cast<double>(total);
}

} // namespace

MonotonicityRates structural_monotonicity(const std::vector<RegionSeries>& series,
                                          std::size_t levels) {
  std::size_t peak_pass = 0;
  std::size_t coll_pass = 0;
  for (const auto& s : series) {
    check_levels(s.scales, s.peak.size(), levels, s.action + "/" + s.region + " peak");
    check_levels(s.scales, s.collective.size(), levels, s.action + "/" + s.region + " collective");
    peak_pass += is_monotone_pass(spearman(s.scales, s.peak)) ? 1 : 0;
    coll_pass += is_monotone_pass(spearman(s.scales, s.collective)) ? 1 : 0;
  }
  return {percent(peak_pass, series.size()), percent(coll_pass, series.size())};
}

LabanRates laban_monotonicity(const std::vector<ActionLabanSeries>& series, std::size_t levels) {
  std::size_t w = 0;
  std::size_t t = 0;
  std::size_t f = 0;
  for (const auto& s : series) {
    check_levels(s.scales, s.weight.size(), levels, s.action + " weight");
    check_levels(s.scales, s.time.size(), levels, s.action + " time");
    check_levels(s.scales, s.flow.size(), levels, s.action + " flow");
    w += is_monotone_pass(spearman(s.scales, s.weight)) ? 1 : 0;
    t += is_monotone_pass(spearman(s.scales, s.time)) ? 1 : 0;
    f += is_monotone_pass(spearman(s.scales, s.flow)) ? 1 : 0;
  }
  return {percent(w, series.size()), percent(f, series.size()), percent(t, series.size())};
}

// ---------------------------------------------------------------------------

namespace {

bool is_laban_metric(const std::string& metric) {
  return metric == "weight" || metric == "time" || metric == "flow";
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

} // namespace

TrendReport build_trend_report(std::vector<Measurement> measurements) {
  TrendReport report;
  std::set<double> scale_set;
  std::set<std::uint64_t> seed_set;
  // Preserve first-seen order of series keys so reports follow request order.
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  std::map<std::tuple<std::string, std::string, std::string>,
           std::map<std::pair<double, std::uint64_t>, double>>
      cells;
  for (const auto& m : measurements) {
    if (m.metric != "peak" && m.metric != "collective" && !is_laban_metric(m.metric)) {
      throw ValidationError("unknown trend metric '" + m.metric + "'");
    }
    scale_set.insert(m.scale);
    seed_set.insert(m.seed);
    auto key = std::make_tuple(m.action, m.region, m.metric);
    auto [it, inserted] = cells.try_emplace(key);
    if (inserted) {
      keys.push_back(key);
    }
    if (!it->second.emplace(std::make_pair(m.scale, m.seed), m.value).second) {
      throw ValidationError("duplicate measurement for " + m.action + "/" + m.region + "/" +
                            m.metric);
    }
  }
  report.scales.assign(scale_set.begin(), scale_set.end());
  report.seeds.assign(seed_set.begin(), seed_set.end());
  if (report.scales.size() < 3) {
    throw ValidationError("trend report needs at least 3 scale levels");
  }

  std::vector<RegionSeries> region_series;
  std::map<std::string, ActionLabanSeries> laban_series;
  std::vector<std::string> laban_order;
  for (const auto& key : keys) {
    const auto& [action, region, metric] = key;
    const auto& grid = cells.at(key);
    SeriesVerdict verdict{action, region, metric, {}, {}, false};
    for (double scale : report.scales) {
      double sum = 0.0;
      for (std::uint64_t seed : report.seeds) {
        const auto it = grid.find({scale, seed});
        if (it == grid.end()) {
          throw ValidationError("missing series value: " + action + "/" + region + "/" + metric +
                                " at scale " + format_double(scale) + ", seed " +
                                std::to_string(seed));
        }
        sum += it->second;
      }
      verdict.values.push_back(sum / static_cast<double>(report.seeds.size()));
    }
    verdict.stats = spearman(report.scales, verdict.values);
    verdict.pass = is_monotone_pass(verdict.stats);
    if (is_laban_metric(metric)) {
      auto [it, inserted] = laban_series.try_emplace(action);
      if (inserted) {
        it->second.action = action;
        it->second.scales = report.scales;
        laban_order.push_back(action);
      }
      (metric == "weight" ? it->second.weight : metric == "time" ? it->second.time : it->second.flow) =
          verdict.values;
      report.laban.push_back(std::move(verdict));
    } else {
      auto it = std::find_if(region_series.begin(), region_series.end(), [&](const RegionSeries& s) {
        return s.action == action && s.region == region;
      });
      if (it == region_series.end()) {
        region_series.push_back({action, region, report.scales, {}, {}});
        it = std::prev(region_series.end());
      }
      (metric == "peak" ? it->peak : it->collective) = verdict.values;
      report.structural.push_back(std::move(verdict));
    }
  }
  for (const auto& s : region_series) {
    if (s.peak.empty() || s.collective.empty()) {
      throw ValidationError("missing " + std::string(s.peak.empty() ? "peak" : "collective") +
                            " series for " + s.action + "/" + s.region);
    }
  }
  std::vector<ActionLabanSeries> laban_list;
  for (const auto& action : laban_order) {
    const auto& s = laban_series.at(action);
    if (s.weight.empty() || s.time.empty() || s.flow.empty()) {
      throw ValidationError("incomplete Laban series for " + action);
    }
    laban_list.push_back(s);
  }
  report.structural_rates = structural_monotonicity(region_series, report.scales.size());
  report.laban_rates = laban_monotonicity(laban_list, report.scales.size());
  report.measurements = std::move(measurements);
  return report;
}

nlohmann::json TrendReport::to_json() const {
  auto verdict_json = [](const SeriesVerdict& v) {
    return nlohmann::json{{"action", v.action},
                          {"region", v.region},
                          {"metric", v.metric},
                          {"values", v.values},
                          {"rho", v.stats.rho},
                          {"p_value", v.stats.p_value},
                          {"degenerate", v.stats.degenerate},
                          {"pass", v.pass}};
  };
  nlohmann::json structural_json = nlohmann::json::array();
  for (const auto& v : structural) {
    structural_json.push_back(verdict_json(v));
  }
  nlohmann::json laban_json = nlohmann::json::array();
  for (const auto& v : laban) {
    laban_json.push_back(verdict_json(v));
  }
  return {{"scales", scales},
          {"seeds", seeds},
          {"structural", structural_json},
          {"laban", laban_json},
          {"rates",
           {{"structural_peak", structural_rates.peak},
            {"structural_collective", structural_rates.collective},
            {"laban_weight", laban_rates.weight},
            {"laban_flow", laban_rates.flow},
            {"laban_time", laban_rates.time}}}};
}

std::string TrendReport::to_csv() const {
  std::ostringstream out;
  out << "action,region,metric,scale,seed,value\n";
  for (const auto& m : measurements) {
    out << m.action << ',' << m.region << ',' << m.metric << ',' << format_double(m.scale) << ','
        << m.seed << ',' << format_double(m.value) << '\n';
  }
  return out.str();
}

std::vector<Measurement> parse_trend_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "action,region,metric,scale,seed,value") {
    throw ParseError("trend CSV: missing or unexpected header");
  }
  std::vector<Measurement> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      fields.push_back(field);
    }
    if (fields.size() != 6) {
      throw ParseError("trend CSV line " + std::to_string(lineno) + ": expected 6 fields");
    }
    try {
      out.push_back({fields[0], fields[1], fields[2], std::stod(fields[3]),
                     std::stoull(fields[4]), std::stod(fields[5])});
    } catch (const std::exception&) {
      throw ParseError("trend CSV line " + std::to_string(lineno) + ": bad number");
    }
  }
  return out;
}

std::map<std::string, EffortMetrics> mean_metrics_by_label(const std::vector<MotionSequence>& motions,
                                                           const GroupMap& groups) {
  std::map<std::string, std::pair<EffortMetrics, std::size_t>> sums;
  for (const auto& m : motions) {
    if (!m.label()) {
      continue;
    }
    const EffortMetrics e = effort_metrics(m, groups);
    auto [it, inserted] = sums.try_emplace(*m.label(), EffortMetrics(groups.size()), 0);
    EffortMetrics& acc = it->second.first;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      acc.set(g, acc.peak(g) + e.peak(g), acc.collective(g) + e.collective(g));
    }
    ++it->second.second;
  }
  std::map<std::string, EffortMetrics> out;
  for (auto& [label, entry] : sums) {
    EffortMetrics mean(groups.size());
    const double n = static_cast<double>(entry.second);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      mean.set(g, entry.first.peak(g) / n, entry.first.collective(g) / n);
    }
    out.emplace(label, mean);
  }
  return out;
}

TrendReport trend_run(const Denoiser& model, const LatentCodec& codec,
                      const PromptVocabulary& vocabulary, const DiffusionSchedule& schedule,
                      const TrendRequest& request) {
  if (request.prompts.empty()) {
    throw ValidationError("trend run needs at least one prompt");
  }
  if (request.scales.size() < 3) {
    throw ValidationError("trend run needs at least 3 scales");
  }
  if (!std::is_sorted(request.scales.begin(), request.scales.end()) ||
      std::adjacent_find(request.scales.begin(), request.scales.end()) != request.scales.end()) {
    throw ValidationError("trend scales must be strictly increasing");
  }
  if (request.seeds.empty()) {
    throw ValidationError("trend run needs at least one seed");
  }
  const GroupMap& groups = codec.groups();
  std::vector<Measurement> measurements;
  for (const auto& prompt : request.prompts) {
    vocabulary.id_of(prompt);
    const auto base_it = request.base_metrics.find(prompt);
    const EffortMetrics base =
        base_it != request.base_metrics.end() ? base_it->second : baseline_metrics();
    for (double scale : request.scales) {
      const EffortMetrics target = scale_metrics(base, scale, request.regions);
      for (std::uint64_t seed : request.seeds) {
        SampleRequest sample{prompt, target, request.frames, request.steps, request.guidance, seed};
        const MotionSequence motion = ddim_sample(model, codec, vocabulary, schedule, sample);
        const EffortMetrics measured = effort_metrics(motion, groups);
        for (std::size_t g = 0; g < groups.size(); ++g) {
          measurements.push_back({prompt, groups[g].name, "peak", scale, seed, measured.peak(g)});
          measurements.push_back(
              {prompt, groups[g].name, "collective", scale, seed, measured.collective(g)});
        }
        const LabanDescriptors laban = laban_descriptors(motion);
        measurements.push_back({prompt, "all", "weight", scale, seed, laban.weight});
        measurements.push_back({prompt, "all", "time", scale, seed, laban.time});
        measurements.push_back({prompt, "all", "flow", scale, seed, laban.flow});
      }
    }
  }
  return build_trend_report(std::move(measurements));
}

} // namespace effortgen
