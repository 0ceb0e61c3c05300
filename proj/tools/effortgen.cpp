// effortgen: effort metrics, synthetic corpora, training, generation and
// evaluation from one binary.

#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"
#include "effortgen/diffusion.hpp"
#include "effortgen/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace effortgen;
using namespace effortgen::cli;

namespace {

std::string absolute(const std::string& p) {
  return p.empty() ? p : fs::absolute(p).lexically_normal().string();
}

// Collects a subcommand's options together with their defaults so that the
// resolved configuration is: defaults < --config file < explicit flags.
class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& about, std::string command)
      : app_(parent.add_subcommand(name, about)), command_(std::move(command)) {}

  CLI::App* app() const { return app_; }
  const std::string& command() const { return command_; }

  template <class T>
  CLI::Option* option(const std::string& flags, const std::string& key, T fallback,
                      const std::string& about,
                      std::function<json(const T&)> convert = [](const T& v) { return json(v); }) {
    auto value = std::make_shared<T>(fallback);
    CLI::Option* opt = app_->add_option(flags, *value, about);
    if constexpr (!std::is_same_v<T, std::vector<std::string>>) {
      opt->capture_default_str();
    }
    entries_.push_back({key, opt, [value, convert] { return convert(*value); }});
    return opt;
  }

  CLI::Option* flag(const std::string& flags, const std::string& key, const std::string& about) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app_->add_flag(flags, *value, about);
    entries_.push_back({key, opt, [value] { return json(*value); }});
    return opt;
  }

  json defaults() const {
    json out = json::object();
    for (const auto& e : entries_) {
      out[e.key] = e.get();
    }
    return out;
  }

  json explicit_values() const {
    json out = json::object();
    for (const auto& e : entries_) {
      if (e.option->count() > 0) {
        out[e.key] = e.get();
      }
    }
    return out;
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<json()> get;
  };
  CLI::App* app_;
  std::string command_;
  std::vector<Entry> entries_;
};

json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config " + path);
  }
  try {
    json j = json::parse(in);
    if (!j.is_object()) {
      throw ParseError("config " + path + " must hold a JSON object");
    }
    return j;
  } catch (const json::exception& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
}

json to_scales(const std::string& s) { return parse_scales(s); }
json to_list(const std::string& s) { return split_list(s); }
json to_path(const std::string& s) { return s.empty() ? json(nullptr) : json(absolute(s)); }
json to_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) {
        throw std::invalid_argument(item);
      }
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + item + "'");
    }
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Effort-conditioned motion diffusion toolkit"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Random seed")->capture_default_str();
  app.add_option("--config", config_path, "JSON file overriding defaults");
  app.add_option("--out-dir", out_dir, "Directory for outputs and run.json");

  std::deque<Command> commands;

  // metrics
  CLI::App* metrics = app.add_subcommand("metrics", "Effort metric extraction");
  metrics->require_subcommand(1);
  auto& extract = commands.emplace_back(*metrics, "extract", "Metrics of one motion file", "metrics extract");
  extract.option<std::string>("file", "file", "", "Motion JSON", to_path)->required();
  extract.option<std::string>("--groups", "groups", "", "Group map JSON", to_path);
  auto& baseline = commands.emplace_back(*metrics, "baseline", "Print the dataset baselines", "metrics baseline");
  baseline.flag("--json", "json", "Emit JSON instead of a table");

  // synth
  auto& synth = commands.emplace_back(app, "synth", "Write a synthetic motion corpus", "synth");
  synth.option<std::size_t>("--count", "count", 64, "Number of motions");
  synth.option<std::size_t>("--frames", "frames", 40, "Frames per motion");
  synth.option<std::string>("--actions", "actions", "", "Comma-separated prompts (default all)", to_list);
  synth.option<std::vector<double>>("--amplitude", "amplitude", {0.04, 0.2}, "Amplitude range [m]")
      ->expected(2);
  synth.option<std::vector<double>>("--frequency", "frequency", {0.5, 1.5}, "Frequency range [Hz]")
      ->expected(2);

  // augment
  auto& augment = commands.emplace_back(app, "augment", "Pacing augmentation of a corpus", "augment");
  augment.option<std::string>("input", "input", "", "Input directory", to_path)->required();
  augment.option<std::vector<std::size_t>>("--k", "k", {1}, "Speed-up factors (frames skipped)")
      ->delimiter(',');
  augment.option<std::vector<std::size_t>>("--m", "m", {1}, "Slow-down factors (frames inserted)")
      ->delimiter(',');
  augment.option<std::string>("--groups", "groups", "", "Group map JSON", to_path);

  // train
  auto& train = commands.emplace_back(app, "train", "Train the denoiser", "train");
  train.option<std::string>("--data", "data", "", "Corpus directory", to_path)->required();
  train.option<std::string>("--resume", "resume", "", "Checkpoint to continue from", to_path);
  train.option<std::size_t>("--iterations", "iterations", 0, "Total iterations (overrides config)");
  train.option<std::size_t>("--batch-size", "batch_size", 16, "Batch size");
  train.option<double>("--lr", "learning_rate", 5e-4, "Learning rate");
  train.option<std::size_t>("--log-every", "log_every", 100, "Progress interval on stderr");
  train.option<std::string>("--groups", "groups", "", "Group map JSON", to_path);
  train.flag("--full-scale", "full_scale", "Use the full-size architecture (D=256, H=8, L=5)");

  // generate
  auto& generate = commands.emplace_back(app, "generate", "Sample motions for effort scales", "generate");
  generate.option<std::string>("--model", "model", "", "Checkpoint", to_path)->required();
  generate.option<std::string>("--prompt", "prompt", "", "Text prompt (omit for unconditional)",
                               [](const std::string& s) { return s.empty() ? json(nullptr) : json(s); });
  generate.option<std::string>("--scale", "scales", "1.0", "Scale value, list or a..b:step", to_scales);
  generate.option<std::string>("--regions", "regions", "", "Regions to scale (default all)", to_list);
  generate.option<std::vector<std::string>>("--set-metric", "set_metric", {},
                                            "region=peak,collective (repeatable)");
  generate.option<std::string>("--base-metrics", "base_metrics", "", "Metrics JSON used as base",
                               to_path);
  generate.option<std::size_t>("--frames", "frames", 120, "Frames");
  generate.option<std::size_t>("--steps", "steps", 50, "DDIM steps");
  generate.option<double>("--guidance", "guidance", 7.5, "Guidance weight");

  // evaluate
  CLI::App* evaluate = app.add_subcommand("evaluate", "Effort-oriented evaluation");
  evaluate->require_subcommand(1);
  auto& trend = commands.emplace_back(*evaluate, "trend", "Metric-to-motion consistency", "evaluate trend");
  trend.option<std::string>("--model", "model", "", "Checkpoint", to_path)->required();
  trend.option<std::string>("--prompts", "prompts", "", "Comma-separated prompts (default all)", to_list);
  trend.option<std::string>("--scale", "scales", "0.7..1.3:0.1", "Scales", to_scales);
  trend.option<std::string>("--seeds", "seeds", "", "Comma-separated seeds (default seed..seed+2)",
                            to_seeds);
  trend.option<std::size_t>("--frames", "frames", 120, "Frames");
  trend.option<std::size_t>("--steps", "steps", 50, "DDIM steps");
  trend.option<double>("--guidance", "guidance", 7.5, "Guidance weight");
  trend.option<std::string>("--regions", "regions", "", "Regions to scale (default all)", to_list);
  trend.option<std::string>("--base", "base", "table", "Base metrics: table or corpus");
  trend.option<std::string>("--data", "data", "", "Corpus for --base corpus", to_path);
  auto& mae = commands.emplace_back(*evaluate, "mae", "Effort MAE against a corpus", "evaluate mae");
  mae.option<std::string>("--model", "model", "", "Checkpoint", to_path)->required();
  mae.option<std::string>("--data", "data", "", "Corpus directory", to_path)->required();
  mae.option<std::size_t>("--limit", "limit", 0, "Evaluate at most this many motions");
  mae.option<std::size_t>("--steps", "steps", 50, "DDIM steps");
  mae.option<double>("--guidance", "guidance", 7.5, "Guidance weight");

  // replay
  CLI::App* replay = app.add_subcommand("replay", "Re-run a command from its run.json");
  std::string record_path;
  replay->add_option("record", record_path, "run.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (replay->parsed()) {
    json opts = read_run_record(record_path);
    if (!out_dir.empty()) {
      opts["out_dir"] = absolute(out_dir);
    }
    return execute(opts);
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands) {
    if (c.app()->parsed()) {
      chosen = &c;
    }
  }
  if (chosen == nullptr) {
    throw UsageError("no command given");
  }
  const std::string& name = chosen->command();
  json opts = chosen->defaults();
  json config = config_path.empty() ? json::object() : read_config(config_path);

  if (name == "train") {
    // The config file holds a training config; flags override its fields.
    TrainConfig tc = TrainConfig::from_json(config);
    if (!config.contains("model") && opts.at("full_scale").get<bool>()) {
      tc.model = DenoiserConfig::full_scale();
    }
    const json flags = chosen->explicit_values();
    if (flags.contains("batch_size")) {
      tc.batch_size = flags.at("batch_size").get<std::size_t>();
    }
    if (flags.contains("learning_rate")) {
      tc.learning_rate = flags.at("learning_rate").get<double>();
    }
    if (flags.contains("iterations")) {
      tc.iterations = flags.at("iterations").get<std::size_t>();
    }
    if (seed_opt->count() > 0 || !config.contains("seed")) {
      tc.seed = seed;
    }
    opts = {{"data", opts.at("data")},
            {"resume", opts.at("resume")},
            {"groups", opts.at("groups")},
            {"log_every", opts.at("log_every")},
            {"iterations", flags.contains("iterations") ? flags.at("iterations") : json(nullptr)},
            {"train_config", tc.to_json()}};
    if (opts.at("resume").is_null()) {
      opts.erase("resume");
    }
  } else {
    for (const auto& [key, value] : config.items()) {
      if (!opts.contains(key)) {
        throw UsageError("config key '" + key + "' is not an option of " + name);
      }
      opts[key] = value;
    }
    const json flags = chosen->explicit_values();
    for (const auto& [key, value] : flags.items()) {
      opts[key] = value;
    }
    opts["seed"] = seed_opt->count() > 0 || !config.contains("seed") ? json(seed) : config.at("seed");
    if (name == "evaluate trend" && opts.at("seeds").empty()) {
      const auto s = opts.at("seed").get<std::uint64_t>();
      opts["seeds"] = {s, s + 1, s + 2};
    }
  }
  opts["command"] = name;
  opts["out_dir"] = out_dir.empty() ? (name == "metrics extract" || name == "metrics baseline"
                                           ? std::string()
                                           : absolute("."))
                                    : absolute(out_dir);
  if (name == "train" || name == "synth" || name == "augment") {
    if (out_dir.empty()) {
      throw UsageError(name + " requires --out-dir");
    }
  }
  return execute(opts);
}

} // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kMissingModel;
  } catch (const ParseError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kValidation;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
