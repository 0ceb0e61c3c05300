#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace effortgen::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kValidation = 4,
  kMissingModel = 5,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const char* version();

// Parses "1.0", "0.7,1.0,1.3" or "0.7..1.3:0.1".
std::vector<double> parse_scales(const std::string& text);
std::vector<std::string> split_list(const std::string& text, char sep = ',');

// Each command consumes a fully resolved option object, so a run can be
// replayed from the run.json written next to its outputs.
int run_metrics_extract(const nlohmann::json& opts);
int run_metrics_baseline(const nlohmann::json& opts);
int run_synth(const nlohmann::json& opts);
int run_augment(const nlohmann::json& opts);
int run_train(const nlohmann::json& opts);
int run_generate(const nlohmann::json& opts);
int run_evaluate_trend(const nlohmann::json& opts);
int run_evaluate_mae(const nlohmann::json& opts);

// Dispatches on opts["command"].
int execute(const nlohmann::json& opts);

void write_run_record(const nlohmann::json& opts);
nlohmann::json read_run_record(const std::filesystem::path& path);

} // namespace effortgen::cli
