#include "effortgen/motion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "effortgen/errors.hpp"
#include "effortgen/rng.hpp"

namespace effortgen {

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state(const std::string& text) {
  std::istringstream in(text);
  in >> engine_;
  if (!in) {
    throw ParseError("invalid generator state");
  }
}

MotionSequence::MotionSequence(int fps, std::size_t joints, std::vector<double> positions,
                               std::optional<std::string> label)
    : fps_(fps), frames_(0), joints_(joints), positions_(std::move(positions)),
      label_(std::move(label)) {
  if (fps_ <= 0) {
    throw ValidationError("fps must be positive, got " + std::to_string(fps_));
  }
  if (joints_ == 0) {
    throw ValidationError("motion needs at least one joint");
  }
  if (positions_.size() % (joints_ * 3) != 0) {
    throw ValidationError("position buffer is not a multiple of joints x 3");
  }
  frames_ = positions_.size() / (joints_ * 3);
  if (frames_ < 2) {
    throw ValidationError("motion needs at least 2 frames, got " + std::to_string(frames_));
  }
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    if (!std::isfinite(positions_[i])) {
      const std::size_t frame = i / (joints_ * 3);
      const std::size_t joint = (i / 3) % joints_;
      throw ValidationError("non-finite coordinate at frame " + std::to_string(frame) +
                            ", joint " + std::to_string(joint));
    }
  }
}

MotionSequence MotionSequence::with_label(std::optional<std::string> label) const {
  return MotionSequence(fps_, joints_, positions_, std::move(label));
}

GroupMap::GroupMap(std::vector<Group> groups, std::size_t joint_count)
    : groups_(std::move(groups)), joint_count_(joint_count) {
  if (groups_.empty()) {
    throw ValidationError("group map has no groups");
  }
  std::vector<int> owner(joint_count_, -1);
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].joints.empty()) {
      throw ValidationError("group '" + groups_[g].name + "' is empty");
    }
    for (std::size_t j : groups_[g].joints) {
      if (j >= joint_count_) {
        throw ValidationError("group '" + groups_[g].name + "' references joint " +
                              std::to_string(j) + " outside 0.." +
                              std::to_string(joint_count_ - 1));
      }
      if (owner[j] >= 0) {
        throw ValidationError("joint " + std::to_string(j) + " assigned to both '" +
                              groups_[owner[j]].name + "' and '" + groups_[g].name + "'");
      }
      owner[j] = static_cast<int>(g);
    }
  }
  for (std::size_t j = 0; j < joint_count_; ++j) {
    if (owner[j] < 0) {
      throw ValidationError("joint " + std::to_string(j) + " is not covered by any group");
    }
  }
}

std::size_t GroupMap::max_group_size() const {
  std::size_t width = 0;
  for (const auto& g : groups_) {
    width = std::max(width, g.joints.size());
  }
  return width;
}

std::size_t GroupMap::index_of(const std::string& name) const {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].name == name) {
      return g;
    }
  }
  throw ValidationError("unknown region '" + name + "'");
}

std::vector<std::string> GroupMap::names() const {
  std::vector<std::string> out;
  out.reserve(groups_.size());
  for (const auto& g : groups_) {
    out.push_back(g.name);
  }
  return out;
}

GroupMap GroupMap::permuted(std::span<const std::size_t> order) const {
  if (order.size() != groups_.size()) {
    throw ValidationError("permutation length does not match group count");
  }
  std::vector<Group> out;
  out.reserve(order.size());
  for (std::size_t i : order) {
    out.push_back(groups_.at(i));
  }
  return GroupMap(std::move(out), joint_count_);
}

nlohmann::json GroupMap::to_json() const {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : groups_) {
    groups.push_back({{"name", g.name}, {"joints", g.joints}});
  }
  return {{"groups", groups}};
}

GroupMap GroupMap::from_json(const nlohmann::json& j) {
  try {
    std::vector<Group> groups;
    std::size_t max_joint = 0;
    for (const auto& g : j.at("groups")) {
      Group group{g.at("name").get<std::string>(), g.at("joints").get<std::vector<std::size_t>>()};
      for (std::size_t idx : group.joints) {
        max_joint = std::max(max_joint, idx + 1);
      }
      groups.push_back(std::move(group));
    }
    const std::size_t joints = j.contains("n_joints") ? j.at("n_joints").get<std::size_t>() : max_joint;
    return GroupMap(std::move(groups), joints);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("group map: ") + e.what());
  }
}

GroupMap default_group_map() {
  return GroupMap(
      {
          {"root", {0}},
          {"left_lower", {1, 4, 7, 10}},
          {"right_lower", {2, 5, 8, 11}},
          {"spine", {3, 6, 9}},
          {"left_upper", {13, 16, 18, 20}},
          {"right_upper", {14, 17, 19, 21}},
          {"head", {12, 15}},
      },
      kDefaultJointCount);
}

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

} // namespace

GroupMap load_group_map(const std::filesystem::path& path) {
  return GroupMap::from_json(read_json_file(path));
}

PromptVocabulary::PromptVocabulary(std::vector<std::string> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    for (std::size_t k = i + 1; k < entries_.size(); ++k) {
      if (entries_[i] == entries_[k]) {
        throw ValidationError("duplicate prompt '" + entries_[i] + "'");
      }
    }
  }
}

std::optional<std::size_t> PromptVocabulary::find(const std::string& prompt) const {
  const auto it = std::find(entries_.begin(), entries_.end(), prompt);
  if (it == entries_.end()) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - entries_.begin());
}

std::size_t PromptVocabulary::id_of(const std::string& prompt) const {
  if (auto id = find(prompt)) {
    return *id;
  }
  std::string msg = "unknown prompt '" + prompt + "'; vocabulary:";
  for (const auto& e : entries_) {
    msg += "\n  " + e;
  }
  throw ValidationError(msg);
}

PromptVocabulary default_vocabulary() {
  return PromptVocabulary({
      // lower body
      "a person lunges",
      "a person walks",
      "a person runs",
      "a person kicks",
      // upper body
      "a person waves",
      "a person waves an arm",
      "a person punches",
      "a person throws a ball",
      "a person swings arms",
      "a person shakes arms",
      // full body
      "a person squats",
      "a person dances",
      "a person jumps",
      "a person bends over",
  });
}

nlohmann::json motion_to_json(const MotionSequence& m) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t t = 0; t < m.frames(); ++t) {
    nlohmann::json frame = nlohmann::json::array();
    for (std::size_t j = 0; j < m.joints(); ++j) {
      const Vec3 p = m.at(t, j);
      frame.push_back({p.x, p.y, p.z});
    }
    frames.push_back(std::move(frame));
  }
  nlohmann::json j = {{"fps", m.fps()}, {"n_joints", m.joints()}, {"frames", std::move(frames)}};
  if (m.label()) {
    j["label"] = *m.label();
  }
  return j;
}

MotionSequence motion_from_json(const nlohmann::json& j) {
  int fps = kDefaultFps;
  std::size_t joints = 0;
  std::vector<double> positions;
  std::optional<std::string> label;
  try {
    if (j.contains("fps")) {
      fps = j.at("fps").get<int>();
    }
    const auto& frames = j.at("frames");
    if (!frames.is_array() || frames.empty()) {
      throw ValidationError("motion has no frames");
    }
    joints = j.contains("n_joints") ? j.at("n_joints").get<std::size_t>() : frames[0].size();
    positions.reserve(frames.size() * joints * 3);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto& frame = frames[t];
      if (!frame.is_array() || frame.size() != joints) {
        throw ValidationError("frame " + std::to_string(t) + " has " + std::to_string(frame.size()) +
                              " joints, expected " + std::to_string(joints));
      }
      for (const auto& p : frame) {
        if (!p.is_array() || p.size() != 3) {
          throw ValidationError("frame " + std::to_string(t) + ": joint entry is not [x, y, z]");
        }
        for (const auto& c : p) {
          // NaN and Inf serialize as null in strict JSON.
          if (!c.is_number()) {
            throw ValidationError("frame " + std::to_string(t) + ": non-numeric coordinate");
          }
          positions.push_back(c.get<double>());
        }
      }
    }
    if (j.contains("label") && !j.at("label").is_null()) {
      label = j.at("label").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("motion: ") + e.what());
  }
  return MotionSequence(fps, joints, std::move(positions), std::move(label));
}

MotionSequence load_motion(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Some exporters write bare NaN/Infinity literals; report those as the
    // invariant violation they are rather than as a syntax problem.
    if (text.find("NaN") != std::string::npos || text.find("Infinity") != std::string::npos) {
      throw ValidationError(path.string() + ": non-finite coordinate literal");
    }
    throw ParseError(path.string() + ": " + e.what());
  }
  return motion_from_json(j);
}

void save_motion(const MotionSequence& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << motion_to_json(m).dump() << '\n';
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

std::vector<Vec3> rest_pose() {
  return {
      {0.00, 0.93, 0.00},   // pelvis
      {0.06, 0.84, 0.00},   // left hip
      {-0.06, 0.84, 0.00},  // right hip
      {0.00, 1.04, -0.01},  // spine1
      {0.10, 0.48, 0.01},   // left knee
      {-0.10, 0.48, 0.01},  // right knee
      {0.00, 1.17, 0.00},   // spine2
      {0.09, 0.08, -0.03},  // left ankle
      {-0.09, 0.08, -0.03}, // right ankle
      {0.00, 1.22, 0.01},   // spine3
      {0.11, 0.02, 0.10},   // left foot
      {-0.11, 0.02, 0.10},  // right foot
      {0.00, 1.44, 0.00},   // neck
      {0.08, 1.35, 0.00},   // left collar
      {-0.08, 1.35, 0.00},  // right collar
      {0.00, 1.58, 0.04},   // head
      {0.18, 1.38, 0.00},   // left shoulder
      {-0.18, 1.38, 0.00},  // right shoulder
      {0.44, 1.38, 0.00},   // left elbow
      {-0.44, 1.38, 0.00},  // right elbow
      {0.69, 1.38, 0.00},   // left wrist
      {-0.69, 1.38, 0.00},  // right wrist
  };
}

namespace {

enum Region : std::size_t {
  kRoot = 0,
  kLeftLower,
  kRightLower,
  kSpine,
  kLeftUpper,
  kRightUpper,
  kHead,
};

struct RegionDrive {
  std::size_t region;
  Vec3 direction;
  double phase;       // radians, added to the seeded phase
  double freq_ratio;  // multiplies the requested frequency
};

std::vector<RegionDrive> action_drives(std::size_t action_id) {
  constexpr double pi = std::numbers::pi;
  const Vec3 fwd{0, 0, 1}, up{0, 1, 0}, side{1, 0, 0};
  switch (action_id) {
    case 0: // lunges
      return {{kRoot, up, 0, 1}, {kLeftLower, fwd, 0, 1}, {kRightLower, fwd, pi, 1}};
    case 1: // walks
      return {{kLeftLower, fwd, 0, 1}, {kRightLower, fwd, pi, 1}};
    case 2: // runs
      return {{kRoot, up, 0, 2},
              {kLeftLower, fwd, 0, 1},
              {kRightLower, fwd, pi, 1},
              {kLeftUpper, fwd, pi, 1},
              {kRightUpper, fwd, 0, 1}};
    case 3: // kicks
      return {{kRightLower, fwd, 0, 1}};
    case 4: // waves
      return {{kLeftUpper, side, 0, 1.5}, {kRightUpper, side, pi, 1.5}};
    case 5: // waves an arm
      return {{kRightUpper, side, 0, 1.5}};
    case 6: // punches
      return {{kLeftUpper, fwd, 0, 1}, {kRightUpper, fwd, pi, 1}};
    case 7: // throws a ball
      return {{kSpine, fwd, 0, 1}, {kRightUpper, fwd, 0.5 * pi, 1}};
    case 8: // swings arms
      return {{kLeftUpper, fwd, 0, 1}, {kRightUpper, fwd, pi, 1}, {kSpine, side, 0, 0.5}};
    case 9: // shakes arms
      return {{kLeftUpper, up, 0, 2.5}, {kRightUpper, up, 0.3, 2.5}};
    case 10: // squats
      return {{kRoot, up, 0, 1}, {kSpine, up, 0, 1}, {kHead, up, 0, 1},
              {kLeftLower, fwd, 0, 1}, {kRightLower, fwd, 0, 1}};
    case 11: // dances
      return {{kRoot, side, 0, 1},        {kLeftLower, up, 0, 2},   {kRightLower, up, pi, 2},
              {kSpine, side, 0.2, 1},     {kLeftUpper, up, 0.5, 1}, {kRightUpper, up, 2.0, 1},
              {kHead, side, 0.4, 1}};
    case 12: // jumps
      return {{kRoot, up, 0, 1},      {kLeftLower, up, 0, 1},  {kRightLower, up, 0, 1},
              {kSpine, up, 0, 1},     {kLeftUpper, up, 0.3, 1}, {kRightUpper, up, 0.3, 1},
              {kHead, up, 0, 1}};
    case 13: // bends over
      return {{kSpine, fwd, 0, 1}, {kHead, fwd, 0, 1}, {kLeftUpper, fwd, 0, 1},
              {kRightUpper, fwd, 0, 1}};
    default:
      throw ValidationError("synthetic action id " + std::to_string(action_id) +
                            " outside vocabulary (0..13)");
  }
}

} // namespace

std::vector<std::size_t> synth_active_regions(std::size_t action_id) {
  std::vector<std::size_t> out;
  for (const auto& d : action_drives(action_id)) {
    out.push_back(d.region);
  }
  std::sort(out.begin(), out.end());
  return out;
}

MotionSequence synth_motion(std::size_t action_id, double amplitude, double frequency,
                            std::size_t frames, std::uint64_t seed) {
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
    throw ValidationError("amplitude must be finite and >= 0");
  }
  if (!(frequency > 0.0) || !std::isfinite(frequency)) {
    throw ValidationError("frequency must be finite and > 0");
  }
  if (frames < 4) {
    throw ValidationError("synthetic motion needs at least 4 frames");
  }
  const auto drives = action_drives(action_id);
  const GroupMap groups = default_group_map();
  const std::vector<Vec3> rest = rest_pose();

  Rng rng(seed);
  const double base_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<double> region_gain(groups.size(), 0.0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    region_gain[g] = rng.uniform(0.8, 1.2);
  }

  const std::size_t joints = rest.size();
  std::vector<double> positions(frames * joints * 3);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < joints; ++j) {
      double* p = positions.data() + (t * joints + j) * 3;
      p[0] = rest[j].x;
      p[1] = rest[j].y;
      p[2] = rest[j].z;
    }
  }
  const double dt = 1.0 / kDefaultFps;
  for (const auto& drive : drives) {
    const auto& members = groups[drive.region].joints;
    for (std::size_t t = 0; t < frames; ++t) {
      const double angle = 2.0 * std::numbers::pi * frequency * drive.freq_ratio *
                               static_cast<double>(t) * dt +
                           base_phase + drive.phase;
      const double s = amplitude * region_gain[drive.region] * std::sin(angle);
      for (std::size_t k = 0; k < members.size(); ++k) {
        // Distal joints of a chain swing further.
        const double reach = 0.5 + 0.5 * static_cast<double>(k + 1) / static_cast<double>(members.size());
        double* p = positions.data() + (t * joints + members[k]) * 3;
        p[0] += s * reach * drive.direction.x;
        p[1] += s * reach * drive.direction.y;
        p[2] += s * reach * drive.direction.z;
      }
    }
  }
  return MotionSequence(kDefaultFps, joints, std::move(positions),
                        default_vocabulary()[action_id]);
}

std::vector<MotionSequence> synth_corpus(const SynthCorpusOptions& options) {
  if (options.amplitude_min > options.amplitude_max ||
      options.frequency_min > options.frequency_max) {
    throw ValidationError("amplitude and frequency ranges need lo <= hi");
  }
  std::vector<std::size_t> actions = options.actions;
  if (actions.empty()) {
    for (std::size_t i = 0; i < default_vocabulary().size(); ++i) {
      actions.push_back(i);
    }
  }
  Rng rng(options.seed);
  std::vector<MotionSequence> out;
  out.reserve(options.count);
  for (std::size_t i = 0; i < options.count; ++i) {
    const std::size_t action = actions[i % actions.size()];
    const double a = rng.uniform(options.amplitude_min, options.amplitude_max);
    const double f = rng.uniform(options.frequency_min, options.frequency_max);
    out.push_back(synth_motion(action, a, f, options.frames, rng.next_u64()));
  }
  return out;
}

bool is_motion_file(const std::filesystem::path& p) {
  return p.extension() == ".json" && p.filename() != kRunRecordName;
}

std::vector<CorpusEntry> load_corpus(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw IoError("corpus directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_motion_file(entry.path())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<CorpusEntry> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    out.push_back({f, load_motion(f)});
  }
  return out;
}

} // namespace effortgen
