#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "effortgen/effort.hpp"
#include "effortgen/motion.hpp"

namespace effortgen {

inline constexpr std::size_t kMaxPacingParam = 2;

// Keeps frames 0, k+1, 2(k+1), ... at the original fps.
MotionSequence speed_up(const MotionSequence& m, std::size_t k,
                        std::size_t max_k = kMaxPacingParam);

// Inserts `inserted` linearly interpolated frames between every consecutive pair.
MotionSequence slow_down(const MotionSequence& m, std::size_t inserted,
                         std::size_t max_m = kMaxPacingParam);

struct ManifestRecord {
  std::string src;
  std::string transform;  // "original", "speedup" or "slowdown"
  std::size_t param = 0;
  std::string out;
  EffortMetrics metrics;

  nlohmann::json to_json(const GroupMap& groups) const;
};

struct AugmentResult {
  std::vector<ManifestRecord> records;
  // Inputs that could not be read, with the reason.
  std::vector<std::pair<std::string, std::string>> skipped;
};

// Writes every input plus its speed_up/slow_down variants into `out_dir`,
// together with a `manifest.jsonl` (one record per output file).
AugmentResult augment_corpus(const std::filesystem::path& in_dir,
                             const std::filesystem::path& out_dir,
                             const std::vector<std::size_t>& ks,
                             const std::vector<std::size_t>& ms,
                             const GroupMap& groups = default_group_map());

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

} // namespace effortgen
