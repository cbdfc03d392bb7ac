// Shared helpers for the unit tests: random inputs and brute-force oracles
// written independently of the library code paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "mcma/core.hpp"

namespace testing {

inline mcma::FeatureMap random_features(std::mt19937_64& rng, int c, int h, int w,
                                        float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  mcma::FeatureMap f(c, h, w);
  for (auto& v : f.data) v = d(rng);
  return f;
}

inline mcma::FlowField random_flow(std::mt19937_64& rng, int h, int w, float max_abs) {
  std::uniform_real_distribution<float> d(-max_abs, max_abs);
  mcma::FlowField f(h, w);
  for (auto& v : f.u) v = d(rng);
  for (auto& v : f.v) v = d(rng);
  return f;
}

inline mcma::Frame random_frame(std::mt19937_64& rng, int w, int h, int channels,
                                std::int64_t index = 0) {
  std::uniform_int_distribution<int> d(0, 255);
  mcma::Frame f(w, h, channels, index);
  for (auto& v : f.data) v = static_cast<std::uint8_t>(d(rng));
  return f;
}

// Textbook four-weight bilinear interpolation with edge clamping.
inline double bilinear_oracle(const mcma::FeatureMap& f, int c, double x, double y) {
  x = std::min(std::max(x, 0.0), f.width - 1.0);
  y = std::min(std::max(y, 0.0), f.height - 1.0);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, f.width - 1);
  const int y1 = std::min(y0 + 1, f.height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  return (1 - ax) * (1 - ay) * f.at(c, y0, x0) + ax * (1 - ay) * f.at(c, y0, x1) +
         (1 - ax) * ay * f.at(c, y1, x0) + ax * ay * f.at(c, y1, x1);
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mcma_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
