#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "effortgen/augment.hpp"
#include "effortgen/diffusion.hpp"
#include "effortgen/effort.hpp"
#include "effortgen/errors.hpp"
#include "effortgen/evaluation.hpp"
#include "effortgen/motion.hpp"

#ifndef EFFORTGEN_VERSION
#define EFFORTGEN_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace effortgen::cli {

const char* version() { return EFFORTGEN_VERSION; }

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) {
      out.push_back(item.substr(b, e - b + 1));
    }
  }
  return out;
}

namespace {

double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw UsageError("bad " + what + " '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) {
    throw UsageError("bad " + what + " '" + s + "'");
  }
  return v;
}

// Strips accumulation noise so 0.7 + 3 * 0.1 prints and compares as 1.0.
double tidy(double v) { return std::round(v * 1e9) / 1e9; }

} // namespace

std::vector<double> parse_scales(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
      out.push_back(parse_number(item, "scale"));
    }
    if (out.empty()) {
      throw UsageError("empty scale list");
    }
    return out;
  }
  const auto colon = text.find(':', dots);
  if (colon == std::string::npos) {
    throw UsageError("scale range needs a step: a..b:step");
  }
  const double lo = parse_number(text.substr(0, dots), "scale");
  const double hi = parse_number(text.substr(dots + 2, colon - dots - 2), "scale");
  const double step = parse_number(text.substr(colon + 1), "scale step");
  if (!(step > 0.0) || hi < lo) {
    throw UsageError("scale range must satisfy a <= b and step > 0");
  }
  std::vector<double> out;
  for (std::size_t i = 0;; ++i) {
    const double v = tidy(lo + static_cast<double>(i) * step);
    if (v > hi + 1e-9) {
      break;
    }
    out.push_back(v);
  }
  return out;
}

namespace {

std::string fmt_scale(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
}

GroupMap groups_from(const json& opts) {
  const auto it = opts.find("groups");
  if (it == opts.end() || it->is_null()) {
    return default_group_map();
  }
  return load_group_map(it->get<std::string>());
}

std::vector<std::size_t> region_indices(const json& names, const GroupMap& groups) {
  std::vector<std::size_t> out;
  for (const auto& n : names) {
    out.push_back(groups.index_of(n.get<std::string>()));
  }
  return out;
}

// "left_upper=0.3,1.0"
EffortMetrics apply_set_metrics(EffortMetrics m, const json& assignments, const GroupMap& groups) {
  for (const auto& a : assignments) {
    const std::string text = a.get<std::string>();
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw UsageError("--set-metric expects region=peak,collective, got '" + text + "'");
    }
    const auto values = split_list(text.substr(eq + 1));
    if (values.size() != 2) {
      throw UsageError("--set-metric expects two values in '" + text + "'");
    }
    m = set_metrics(m, groups.index_of(text.substr(0, eq)), parse_number(values[0], "peak"),
                    parse_number(values[1], "collective"));
  }
  return m;
}

EffortMetrics base_from(const json& opts) {
  const auto it = opts.find("base_metrics");
  if (it == opts.end() || it->is_null()) {
    return baseline_metrics();
  }
  std::ifstream in(it->get<std::string>());
  if (!in) {
    throw IoError("cannot open base metrics file " + it->get<std::string>());
  }
  try {
    return metrics_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError(std::string("base metrics: ") + e.what());
  }
}

} // namespace

// ---------------------------------------------------------------------------

int run_metrics_extract(const json& opts) {
  const GroupMap groups = groups_from(opts);
  const MotionSequence m = load_motion(opts.at("file").get<std::string>());
  const json out = metrics_to_json(effort_metrics(m, groups), groups);
  std::cout << out.dump(2) << '\n';
  if (!opts.value("out_dir", std::string()).empty()) {
    ensure_dir(opts.at("out_dir").get<std::string>());
    write_text(fs::path(opts.at("out_dir").get<std::string>()) / "metrics.json", out.dump(2) + "\n");
  }
  return kOk;
}

int run_metrics_baseline(const json& opts) {
  const GroupMap groups = default_group_map();
  const EffortMetrics base = baseline_metrics();
  if (opts.value("json", false)) {
    std::cout << metrics_to_json(base, groups).dump(2) << '\n';
    return kOk;
  }
  std::printf("%-12s %6s %10s\n", "region", "peak", "collective");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::printf("%-12s %6.3f %10.3f\n", groups[g].name.c_str(), base.peak(g), base.collective(g));
  }
  return kOk;
}

int run_synth(const json& opts) {
  const fs::path out_dir = opts.at("out_dir").get<std::string>();
  ensure_dir(out_dir);
  const PromptVocabulary vocab = default_vocabulary();
  SynthCorpusOptions so;
  for (const auto& p : opts.at("actions")) {
    so.actions.push_back(vocab.id_of(p.get<std::string>()));
  }
  const auto amp = opts.at("amplitude").get<std::vector<double>>();
  const auto freq = opts.at("frequency").get<std::vector<double>>();
  if (amp.size() != 2 || freq.size() != 2) {
    throw ValidationError("amplitude and frequency take two values (lo hi)");
  }
  const auto count = opts.at("count").get<std::size_t>();
  so.count = count;
  so.frames = opts.at("frames").get<std::size_t>();
  so.amplitude_min = amp[0];
  so.amplitude_max = amp[1];
  so.frequency_min = freq[0];
  so.frequency_max = freq[1];
  so.seed = opts.at("seed").get<std::uint64_t>();
  const auto motions = synth_corpus(so);
  for (std::size_t i = 0; i < motions.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%04zu.json", i);
    save_motion(motions[i], out_dir / name);
  }
  std::cout << "wrote " << count << " motions to " << out_dir.string() << '\n';
  return kOk;
}

int run_augment(const json& opts) {
  const GroupMap groups = groups_from(opts);
  const auto result = augment_corpus(opts.at("input").get<std::string>(),
                                     opts.at("out_dir").get<std::string>(),
                                     opts.at("k").get<std::vector<std::size_t>>(),
                                     opts.at("m").get<std::vector<std::size_t>>(), groups);
  for (const auto& [file, reason] : result.skipped) {
    std::cerr << "skipped " << file << ": " << reason << '\n';
  }
  std::cout << "wrote " << result.records.size() << " motions ("
            << result.skipped.size() << " inputs skipped)\n";
  return kOk;
}

int run_train(const json& opts) {
  const fs::path out_dir = opts.at("out_dir").get<std::string>();
  ensure_dir(out_dir);
  const auto corpus = load_corpus(opts.at("data").get<std::string>());
  if (corpus.empty()) {
    throw ValidationError("no motions found in " + opts.at("data").get<std::string>());
  }
  const std::string resume = opts.value("resume", std::string());

  auto build_examples = [&](const TrainConfig& cfg, const GroupMap& groups,
                            const PromptVocabulary& vocab) {
    const LatentCodec codec(groups, cfg.model.latent_dim, cfg.codec_gain);
    std::vector<TrainingExample> data;
    for (const auto& entry : corpus) {
      data.push_back(make_training_example(entry.motion, codec, vocab));
    }
    return data;
  };

  std::optional<Trainer> trainer;
  if (!resume.empty()) {
    const LoadedModel probe = load_model(resume);
    trainer.emplace(Trainer::resume(resume, build_examples(probe.config, probe.groups, probe.vocabulary)));
  } else {
    const TrainConfig cfg = TrainConfig::from_json(opts.at("train_config"));
    const GroupMap groups = groups_from(opts);
    const PromptVocabulary vocab = default_vocabulary();
    trainer.emplace(cfg, build_examples(cfg, groups, vocab), vocab, groups);
  }
  const std::size_t target = opts.contains("iterations") && !opts.at("iterations").is_null()
                                 ? opts.at("iterations").get<std::size_t>()
                                 : trainer->config().iterations;
  const std::size_t every = trainer->config().checkpoint_every;
  const std::size_t log_every = opts.value("log_every", std::size_t{100});

  std::ofstream loss_log(out_dir / "loss.csv", std::ios::binary);
  if (!loss_log) {
    throw IoError("cannot write " + (out_dir / "loss.csv").string());
  }
  loss_log << "iteration,loss,learning_rate\n" << std::setprecision(17);
  while (trainer->iteration() < target) {
    const double lr = trainer->current_learning_rate();
    const double loss = trainer->step();
    loss_log << trainer->iteration() << ',' << loss << ',' << lr << '\n';
    if (log_every > 0 && trainer->iteration() % log_every == 0) {
      std::cerr << "iter " << trainer->iteration() << " loss " << loss << '\n';
    }
    if (every > 0 && trainer->iteration() % every == 0) {
      char name[40];
      std::snprintf(name, sizeof name, "checkpoint_%06zu.ckpt", trainer->iteration());
      trainer->save(out_dir / name);
    }
  }
  trainer->save(out_dir / "model.ckpt");
  std::cout << "trained to iteration " << trainer->iteration() << "; model at "
            << (out_dir / "model.ckpt").string() << '\n';
  return kOk;
}

int run_generate(const json& opts) {
  const fs::path out_dir = opts.at("out_dir").get<std::string>();
  ensure_dir(out_dir);
  const LoadedModel lm = load_model(opts.at("model").get<std::string>());
  std::optional<std::string> prompt;
  if (opts.contains("prompt") && !opts.at("prompt").is_null()) {
    prompt = opts.at("prompt").get<std::string>();
    lm.vocabulary.id_of(*prompt);
  }
  const std::vector<std::size_t> regions = region_indices(opts.at("regions"), lm.groups);
  const EffortMetrics base = base_from(opts);
  json summary = json::array();
  for (double scale : opts.at("scales").get<std::vector<double>>()) {
    const EffortMetrics target =
        apply_set_metrics(scale_metrics(base, scale, regions), opts.at("set_metric"), lm.groups);
    SampleRequest req{prompt,
                      target,
                      opts.at("frames").get<std::size_t>(),
                      opts.at("steps").get<std::size_t>(),
                      opts.at("guidance").get<double>(),
                      opts.at("seed").get<std::uint64_t>()};
    const MotionSequence motion = ddim_sample(lm.model, lm.codec, lm.vocabulary, lm.schedule, req);
    const std::string file = "motion_x" + fmt_scale(scale) + ".json";
    save_motion(motion, out_dir / file);
    summary.push_back({{"scale", scale},
                       {"file", file},
                       {"target", metrics_to_json(target, lm.groups)},
                       {"measured", metrics_to_json(effort_metrics(motion, lm.groups), lm.groups)}});
    std::cout << (out_dir / file).string() << '\n';
  }
  write_text(out_dir / "generate.json", summary.dump(2) + "\n");
  return kOk;
}

int run_evaluate_trend(const json& opts) {
  const fs::path out_dir = opts.at("out_dir").get<std::string>();
  ensure_dir(out_dir);
  const LoadedModel lm = load_model(opts.at("model").get<std::string>());
  TrendRequest req;
  req.prompts = opts.at("prompts").get<std::vector<std::string>>();
  if (req.prompts.empty()) {
    req.prompts = lm.vocabulary.entries();
  }
  req.scales = opts.at("scales").get<std::vector<double>>();
  req.seeds = opts.at("seeds").get<std::vector<std::uint64_t>>();
  req.frames = opts.at("frames").get<std::size_t>();
  req.steps = opts.at("steps").get<std::size_t>();
  req.guidance = opts.at("guidance").get<double>();
  req.regions = region_indices(opts.at("regions"), lm.groups);
  const std::string base = opts.at("base").get<std::string>();
  if (base == "corpus") {
    if (!opts.contains("data") || opts.at("data").is_null()) {
      throw UsageError("--base corpus needs --data");
    }
    std::vector<MotionSequence> motions;
    for (auto& e : load_corpus(opts.at("data").get<std::string>())) {
      motions.push_back(std::move(e.motion));
    }
    req.base_metrics = mean_metrics_by_label(motions, lm.groups);
  } else if (base != "table") {
    throw UsageError("--base must be 'table' or 'corpus'");
  }
  const TrendReport report = trend_run(lm.model, lm.codec, lm.vocabulary, lm.schedule, req);
  write_text(out_dir / "trend.json", report.to_json().dump(2) + "\n");
  write_text(out_dir / "trend.csv", report.to_csv());

  std::printf("structural series: %zu, Laban series: %zu\n", report.structural.size(),
              report.laban.size());
  std::printf("%-24s %10s %10s\n", "rate (%)", "measured", "reference");
  std::printf("%-24s %10.1f %10.1f\n", "structural peak", report.structural_rates.peak,
              ReferenceResults::kStructuralPeak);
  std::printf("%-24s %10.1f %10.1f\n", "structural collective", report.structural_rates.collective,
              ReferenceResults::kStructuralCollective);
  std::printf("%-24s %10.1f %10.1f\n", "Laban weight", report.laban_rates.weight,
              ReferenceResults::kLabanWeight);
  std::printf("%-24s %10.1f %10.1f\n", "Laban flow", report.laban_rates.flow,
              ReferenceResults::kLabanFlow);
  std::printf("%-24s %10.1f %10.1f\n", "Laban time", report.laban_rates.time,
              ReferenceResults::kLabanTime);
  return kOk;
}

int run_evaluate_mae(const json& opts) {
  const fs::path out_dir = opts.at("out_dir").get<std::string>();
  ensure_dir(out_dir);
  const LoadedModel lm = load_model(opts.at("model").get<std::string>());
  auto corpus = load_corpus(opts.at("data").get<std::string>());
  const std::size_t limit = opts.value("limit", std::size_t{0});
  if (limit > 0 && corpus.size() > limit) {
    corpus.erase(corpus.begin() + static_cast<std::ptrdiff_t>(limit), corpus.end());
  }
  if (corpus.empty()) {
    throw ValidationError("no motions to evaluate");
  }
  const std::uint64_t seed = opts.at("seed").get<std::uint64_t>();
  std::vector<EffortMetrics> generated;
  std::vector<EffortMetrics> targets;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const MotionSequence& m = corpus[i].motion;
    const EffortMetrics target = effort_metrics(m, lm.groups);
    SampleRequest req{m.label(), target, m.frames(), opts.at("steps").get<std::size_t>(),
                      opts.at("guidance").get<double>(), seed + i};
    const MotionSequence out = ddim_sample(lm.model, lm.codec, lm.vocabulary, lm.schedule, req);
    generated.push_back(effort_metrics(out, lm.groups));
    targets.push_back(target);
  }
  const EffortMae mae = effort_mae(generated, targets);
  const json report = {{"samples", corpus.size()},
                       {"peak_mae", mae.peak},
                       {"collective_mae", mae.collective},
                       {"reference", {{"peak_mae", ReferenceResults::kPeakMae},
                                      {"collective_mae", ReferenceResults::kCollectiveMae}}}};
  write_text(out_dir / "mae.json", report.dump(2) + "\n");
  std::printf("%-16s %10s %10s\n", "MAE", "measured", "reference");
  std::printf("%-16s %10.4f %10.4f\n", "peak", mae.peak, ReferenceResults::kPeakMae);
  std::printf("%-16s %10.4f %10.4f\n", "collective", mae.collective,
              ReferenceResults::kCollectiveMae);
  return kOk;
}

// ---------------------------------------------------------------------------

void write_run_record(const json& opts) {
  const std::string dir = opts.value("out_dir", std::string());
  if (dir.empty()) {
    return;
  }
  ensure_dir(dir);
  const json record = {{"version", version()}, {"resolved", opts}};
  write_text(fs::path(dir) / "run.json", record.dump(2) + "\n");
}

json read_run_record(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  json record;
  try {
    record = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!record.contains("resolved") || !record.at("resolved").contains("command")) {
    throw ValidationError(path.string() + " is not a run record");
  }
  return record.at("resolved");
}

int execute(const json& opts) {
  const std::string cmd = opts.at("command").get<std::string>();
  int code = kUsage;
  if (cmd == "metrics extract") {
    code = run_metrics_extract(opts);
  } else if (cmd == "metrics baseline") {
    code = run_metrics_baseline(opts);
  } else if (cmd == "synth") {
    code = run_synth(opts);
  } else if (cmd == "augment") {
    code = run_augment(opts);
  } else if (cmd == "train") {
    code = run_train(opts);
  } else if (cmd == "generate") {
    code = run_generate(opts);
  } else if (cmd == "evaluate trend") {
    code = run_evaluate_trend(opts);
  } else if (cmd == "evaluate mae") {
    code = run_evaluate_mae(opts);
  } else {
    throw UsageError("unknown command '" + cmd + "'");
  }
  if (code == kOk) {
    write_run_record(opts);
  }
  return code;
}

} // namespace effortgen::cli
