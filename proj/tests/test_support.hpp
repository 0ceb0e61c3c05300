#pragma once

// Helpers shared by the unit and acceptance tests. The oracle functions are
// deliberately naive scalar loops written without the library's code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "effortgen/effort.hpp"
#include "effortgen/motion.hpp"
#include "effortgen/nn.hpp"
#include "effortgen/rng.hpp"
#include "effortgen/tensor.hpp"

namespace testsupport {

using effortgen::GroupMap;
using effortgen::MotionSequence;
using effortgen::Rng;
using effortgen::nn::Tensor;

// Gaussian random walk starting at the rest pose.
inline MotionSequence random_motion(Rng& rng, std::size_t frames, std::size_t joints = 22,
                                    double step = 0.02) {
  std::vector<double> pos(frames * joints * 3);
  for (std::size_t i = 0; i < joints * 3; ++i) {
    pos[i] = rng.uniform(-1.0, 1.0);
  }
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t i = 0; i < joints * 3; ++i) {
      pos[t * joints * 3 + i] = pos[(t - 1) * joints * 3 + i] + step * rng.normal();
    }
  }
  return MotionSequence(effortgen::kDefaultFps, joints, std::move(pos));
}

struct OracleMetrics {
  std::vector<double> peak;
  std::vector<double> collective;
};

inline OracleMetrics oracle_effort(const MotionSequence& m, const GroupMap& groups) {
  OracleMetrics out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double peak = 0.0;
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < m.frames(); ++t) {
      double s = 0.0;
      for (std::size_t j : groups[g].joints) {
        const double dx = m.coord(t + 1, j, 0) - m.coord(t, j, 0);
        const double dy = m.coord(t + 1, j, 1) - m.coord(t, j, 1);
        const double dz = m.coord(t + 1, j, 2) - m.coord(t, j, 2);
        s += std::sqrt(dx * dx + dy * dy + dz * dz);
      }
      s /= static_cast<double>(groups[g].joints.size());
      peak = std::max(peak, s);
      total += s;
    }
    out.peak.push_back(peak);
    out.collective.push_back(total);
  }
  return out;
}

struct OracleLaban {
  double weight = 0.0;
  double time = 0.0;
  double flow = 0.0;
};

inline OracleLaban oracle_laban(const MotionSequence& m) {
  const std::size_t T = m.frames();
  const std::size_t J = m.joints();
  auto vel = [&](std::size_t t, std::size_t j, std::size_t c) {
    return m.coord(t + 1, j, c) - m.coord(t, j, c);
  };
  auto acc = [&](std::size_t t, std::size_t j, std::size_t c) {
    return vel(t + 1, j, c) - vel(t, j, c);
  };
  auto jerk = [&](std::size_t t, std::size_t j, std::size_t c) {
    return acc(t + 1, j, c) - acc(t, j, c);
  };
  OracleLaban out;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    double e = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      e += vel(t, j, 0) * vel(t, j, 0) + vel(t, j, 1) * vel(t, j, 1) + vel(t, j, 2) * vel(t, j, 2);
    }
    out.weight = std::max(out.weight, e);
  }
  for (std::size_t t = 0; t + 2 < T; ++t) {
    double e = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      e += std::sqrt(acc(t, j, 0) * acc(t, j, 0) + acc(t, j, 1) * acc(t, j, 1) +
                     acc(t, j, 2) * acc(t, j, 2));
    }
    out.time = std::max(out.time, e);
  }
  for (std::size_t t = 0; t + 3 < T; ++t) {
    double e = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      e += std::sqrt(jerk(t, j, 0) * jerk(t, j, 0) + jerk(t, j, 1) * jerk(t, j, 1) +
                     jerk(t, j, 2) * jerk(t, j, 2));
    }
    out.flow = std::max(out.flow, e);
  }
  return out;
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    v = scale * rng.normal();
  }
  return t;
}

// Overwrites every parameter with N(0, scale^2) values.
inline void randomize(const effortgen::nn::ParameterList& params, Rng& rng, double scale = 0.3) {
  for (auto* p : params) {
    for (double& v : p->value.data()) {
      v = scale * rng.normal();
    }
  }
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("effortgen_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Runs a shell command and captures stdout; returns the exit status.
inline int run_capture(const std::string& cmd, std::string& out) {
  out.clear();
  FILE* pipe = popen((cmd + " 2>/dev/null").c_str(), "r");
  if (pipe == nullptr) {
    return -1;
  }
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) {
    out.append(buf, n);
  }
  const int status = pclose(pipe);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace testsupport
