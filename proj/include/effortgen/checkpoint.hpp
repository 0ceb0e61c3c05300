#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "effortgen/tensor.hpp"

namespace effortgen::nn {

// On disk: one line of compact JSON carrying at least {"names", "shapes"},
// then the tensors' values as little-endian IEEE-754 doubles concatenated in
// name order.
struct Checkpoint {
  nlohmann::json header;  // extra fields beyond names/shapes are preserved
  std::vector<std::string> names;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params,
                     nlohmann::json extra = nlohmann::json::object());
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values by name; throws ModelError on a missing name or shape mismatch.
void restore_parameters(const Checkpoint& checkpoint, const ParameterList& params);

} // namespace effortgen::nn
