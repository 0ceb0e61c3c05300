#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace effortgen {

inline constexpr std::size_t kDefaultJointCount = 22;
inline constexpr int kDefaultFps = 20;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

// Joint trajectories, frames x joints x 3, in meters.
//
// Construction validates shape and finiteness; the object is immutable
// afterwards so it can be shared freely between threads.
class MotionSequence {
 public:
  MotionSequence(int fps, std::size_t joints, std::vector<double> positions,
                 std::optional<std::string> label = std::nullopt);

  int fps() const { return fps_; }
  std::size_t frames() const { return frames_; }
  std::size_t joints() const { return joints_; }
  const std::optional<std::string>& label() const { return label_; }

  Vec3 at(std::size_t frame, std::size_t joint) const {
    const double* p = positions_.data() + (frame * joints_ + joint) * 3;
    return {p[0], p[1], p[2]};
  }
  double coord(std::size_t frame, std::size_t joint, std::size_t axis) const {
    return positions_[(frame * joints_ + joint) * 3 + axis];
  }

  // Flat row-major [frames][joints][3] view.
  std::span<const double> positions() const { return positions_; }

  MotionSequence with_label(std::optional<std::string> label) const;

 private:
  int fps_;
  std::size_t frames_;
  std::size_t joints_;
  std::vector<double> positions_;
  std::optional<std::string> label_;
};

// Ordered partition of joints into named anatomical regions.
class GroupMap {
 public:
  struct Group {
    std::string name;
    std::vector<std::size_t> joints;
  };

  // Throws ValidationError unless groups are non-empty, disjoint and cover
  // 0..joint_count-1.
  GroupMap(std::vector<Group> groups, std::size_t joint_count);

  std::size_t size() const { return groups_.size(); }
  std::size_t joint_count() const { return joint_count_; }
  const Group& operator[](std::size_t g) const { return groups_[g]; }
  const std::vector<Group>& groups() const { return groups_; }
  std::size_t max_group_size() const;

  // Index of the named group; throws ValidationError when unknown.
  std::size_t index_of(const std::string& name) const;
  std::vector<std::string> names() const;

  // Same groups in a new order: result[i] = this[order[i]].
  GroupMap permuted(std::span<const std::size_t> order) const;

  nlohmann::json to_json() const;
  static GroupMap from_json(const nlohmann::json& j);

 private:
  std::vector<Group> groups_;
  std::size_t joint_count_;
};

// The seven-region layout over the 22 HumanML3D joints.
GroupMap default_group_map();

GroupMap load_group_map(const std::filesystem::path& path);

class PromptVocabulary {
 public:
  explicit PromptVocabulary(std::vector<std::string> entries);

  std::size_t size() const { return entries_.size(); }
  const std::string& operator[](std::size_t id) const { return entries_[id]; }
  const std::vector<std::string>& entries() const { return entries_; }
  std::optional<std::size_t> find(const std::string& prompt) const;
  // Throws ValidationError listing the vocabulary when the prompt is unknown.
  std::size_t id_of(const std::string& prompt) const;

 private:
  std::vector<std::string> entries_;
};

// The fourteen action prompts (lower body, upper body, full body).
PromptVocabulary default_vocabulary();

nlohmann::json motion_to_json(const MotionSequence& m);
MotionSequence motion_from_json(const nlohmann::json& j);

MotionSequence load_motion(const std::filesystem::path& path);
void save_motion(const MotionSequence& m, const std::filesystem::path& path);

// Name of the per-run record the command-line tool writes next to its
// outputs; corpus readers skip it.
inline constexpr const char* kRunRecordName = "run.json";

// True for *.json files other than the run record.
bool is_motion_file(const std::filesystem::path& p);

struct CorpusEntry {
  std::filesystem::path path;
  MotionSequence motion;
};

// Every *.json motion directly inside `dir`, in path order. Throws on the
// first unreadable file.
std::vector<CorpusEntry> load_corpus(const std::filesystem::path& dir);

// Canonical standing pose for the default 22-joint skeleton.
std::vector<Vec3> rest_pose();

// Deterministic sinusoidal motion around the rest pose. Each region that the
// action drives oscillates along an action-specific direction; all offsets
// are proportional to `amplitude`.
MotionSequence synth_motion(std::size_t action_id, double amplitude, double frequency,
                            std::size_t frames, std::uint64_t seed);

struct SynthCorpusOptions {
  std::vector<std::size_t> actions;  // empty: every vocabulary action
  std::size_t count = 64;
  std::size_t frames = 40;
  double amplitude_min = 0.04;  // meters
  double amplitude_max = 0.2;
  double frequency_min = 0.5;  // Hz
  double frequency_max = 1.5;
  std::uint64_t seed = 0;
};

// Actions cycle in order; amplitude, frequency and motion seed are drawn
// per sample.
std::vector<MotionSequence> synth_corpus(const SynthCorpusOptions& options);

// Regions (default map indices) that `action_id` moves in synth_motion.
std::vector<std::size_t> synth_active_regions(std::size_t action_id);

} // namespace effortgen
