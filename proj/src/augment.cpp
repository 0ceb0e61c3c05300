#include "effortgen/augment.hpp"

#include <algorithm>
#include <fstream>

#include "effortgen/errors.hpp"

namespace effortgen {

MotionSequence speed_up(const MotionSequence& m, std::size_t k, std::size_t max_k) {
  if (k == 0 || k > max_k) {
    throw ValidationError("speed-up k must be in 1.." + std::to_string(max_k));
  }
  const std::size_t stride = k + 1;
  const std::size_t frames = (m.frames() + stride - 1) / stride;
  if (frames < 2) {
    throw ValidationError("sequence of " + std::to_string(m.frames()) +
                          " frames too short for speed-up k=" + std::to_string(k));
  }
  const std::size_t row = m.joints() * 3;
  const auto pos = m.positions();
  std::vector<double> out;
  out.reserve(frames * row);
  for (std::size_t t = 0; t < m.frames(); t += stride) {
    out.insert(out.end(), pos.begin() + static_cast<std::ptrdiff_t>(t * row),
               pos.begin() + static_cast<std::ptrdiff_t>((t + 1) * row));
  }
  return MotionSequence(m.fps(), m.joints(), std::move(out), m.label());
}

MotionSequence slow_down(const MotionSequence& m, std::size_t inserted, std::size_t max_m) {
  if (inserted == 0 || inserted > max_m) {
    throw ValidationError("slow-down m must be in 1.." + std::to_string(max_m));
  }
  const std::size_t row = m.joints() * 3;
  const std::size_t frames = m.frames() + (m.frames() - 1) * inserted;
  const auto pos = m.positions();
  std::vector<double> out;
  out.reserve(frames * row);
  for (std::size_t t = 0; t + 1 < m.frames(); ++t) {
    const double* a = pos.data() + t * row;
    const double* b = a + row;
    out.insert(out.end(), a, a + row);
    for (std::size_t s = 1; s <= inserted; ++s) {
      const double w = static_cast<double>(s) / static_cast<double>(inserted + 1);
      for (std::size_t i = 0; i < row; ++i) {
        out.push_back(a[i] + w * (b[i] - a[i]));
      }
    }
  }
  const double* last = pos.data() + (m.frames() - 1) * row;
  out.insert(out.end(), last, last + row);
  return MotionSequence(m.fps(), m.joints(), std::move(out), m.label());
}

nlohmann::json ManifestRecord::to_json(const GroupMap& groups) const {
  return {{"src", src},
          {"transform", transform},
          {"param", param},
          {"out", out},
          {"metrics", metrics_to_json(metrics, groups)}};
}

AugmentResult augment_corpus(const std::filesystem::path& in_dir,
                             const std::filesystem::path& out_dir,
                             const std::vector<std::size_t>& ks,
                             const std::vector<std::size_t>& ms, const GroupMap& groups) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(in_dir)) {
    throw IoError("input directory " + in_dir.string() + " does not exist");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  }

  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (entry.is_regular_file() && is_motion_file(entry.path())) {
      inputs.push_back(entry.path());
    }
  }
  std::sort(inputs.begin(), inputs.end());

  AugmentResult result;
  auto emit = [&](const fs::path& src, const MotionSequence& motion, const std::string& transform,
                  std::size_t param) {
    std::string name = src.stem().string();
    if (transform != "original") {
      name += "_" + transform + std::to_string(param);
    }
    name += ".json";
    save_motion(motion, out_dir / name);
    result.records.push_back(
        {src.filename().string(), transform, param, name, effort_metrics(motion, groups)});
  };

  for (const auto& src : inputs) {
    std::optional<MotionSequence> motion;
    try {
      motion = load_motion(src);
      if (motion->joints() != groups.joint_count()) {
        throw ValidationError("joint count " + std::to_string(motion->joints()) +
                              " does not match group map");
      }
    } catch (const ParseError& e) {
      result.skipped.emplace_back(src.filename().string(), e.what());
      continue;
    } catch (const ValidationError& e) {
      result.skipped.emplace_back(src.filename().string(), e.what());
      continue;
    }
    emit(src, *motion, "original", 0);
    for (std::size_t k : ks) {
      try {
        emit(src, speed_up(*motion, k), "speedup", k);
      } catch (const ValidationError& e) {
        result.skipped.emplace_back(src.filename().string() + " speedup" + std::to_string(k),
                                    e.what());
      }
    }
    for (std::size_t m : ms) {
      emit(src, slow_down(*motion, m), "slowdown", m);
    }
  }

  std::ofstream manifest(out_dir / "manifest.jsonl");
  if (!manifest) {
    throw IoError("cannot write manifest in " + out_dir.string());
  }
  for (const auto& r : result.records) {
    manifest << r.to_json(groups).dump() << '\n';
  }
  return result;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open manifest " + path.string());
  }
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("src").get<std::string>(), j.at("transform").get<std::string>(),
                     j.at("param").get<std::size_t>(), j.at("out").get<std::string>(),
                     metrics_from_json(j.at("metrics"))});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

} // namespace effortgen
