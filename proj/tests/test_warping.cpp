#include <algorithm>
#include <random>

#include "doctest.h"
#include "mcma/warping.hpp"
#include "support.hpp"

using namespace mcma;
using warping::WarpConfig;

TEST_CASE("bilinear_sample basics") {
  std::mt19937_64 rng(1);
  const FeatureMap f = testing::random_features(rng, 3, 5, 6);
  const auto at = warping::bilinear_sample(f, 2, 3);
  for (int c = 0; c < 3; ++c) CHECK(at[c] == f.at(c, 3, 2));
  const auto corner = warping::bilinear_sample(f, -5, -5);
  for (int c = 0; c < 3; ++c) CHECK(corner[c] == f.at(c, 0, 0));
  const auto far = warping::bilinear_sample(f, 100, 2);
  for (int c = 0; c < 3; ++c) CHECK(far[c] == f.at(c, 2, 5));

  const FeatureMap two(1, 1, 2, std::vector<float>{0.0f, 2.0f});
  CHECK(warping::bilinear_sample(two, 0.5, 0.0)[0] == 1.0f);
}

TEST_CASE("bilinear_sample agrees with the four-weight formula") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> coord(-2.0, 9.0);
  const FeatureMap f = testing::random_features(rng, 2, 6, 7);
  for (int i = 0; i < 500; ++i) {
    const double x = coord(rng), y = coord(rng);
    const auto s = warping::bilinear_sample(f, x, y);
    for (int c = 0; c < 2; ++c) {
      CHECK(s[c] == doctest::Approx(testing::bilinear_oracle(f, c, x, y)).epsilon(1e-6));
    }
  }
}

TEST_CASE("warp of a horizontal ramp") {
  const int w = 9, h = 4;
  FeatureMap ramp(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) ramp.at(0, y, x) = static_cast<float>(x);
  }
  const FeatureMap out = warping::warp_features(ramp, FlowField(h, w, 1.0f, 0.0f), {1.0});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) CHECK(out.at(0, y, x) == std::min(x + 1, w - 1));
  }
}

TEST_CASE("identities under zero flow and zero lambda") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const FeatureMap f = testing::random_features(rng, 3, 7, 9, -50.0f, 50.0f);
    CHECK(warping::warp_features(f, FlowField(7, 9), {2.0}) == f);
    CHECK(warping::warp_features(f, testing::random_flow(rng, 7, 9, 6.0f), {0.0}) == f);
  }
}

TEST_CASE("integer shifts are exact in the interior") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> shift(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const int du = shift(rng), dv = shift(rng);
    const FeatureMap f = testing::random_features(rng, 2, 10, 12);
    const FeatureMap out = warping::warp_features(
        f, FlowField(10, 12, static_cast<float>(du), static_cast<float>(dv)), {1.0});
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 12; ++x) {
          const int sx = x + du, sy = y + dv;
          if (sx < 0 || sx >= 12 || sy < 0 || sy >= 10) continue;
          CHECK(out.at(c, y, x) == f.at(c, sy, sx));
        }
      }
    }
  }
}

TEST_CASE("warping is linear in the features and bounded") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> coef(-3.0f, 3.0f);
  for (int trial = 0; trial < 200; ++trial) {
    const FeatureMap f = testing::random_features(rng, 2, 6, 8);
    const FeatureMap g = testing::random_features(rng, 2, 6, 8);
    const FlowField flow = testing::random_flow(rng, 6, 8, 4.0f);
    const WarpConfig cfg{1.7};
    const float a = coef(rng), b = coef(rng);
    FeatureMap mix(2, 6, 8);
    for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * f.data[i] + b * g.data[i];
    const FeatureMap wf = warping::warp_features(f, flow, cfg);
    const FeatureMap wg = warping::warp_features(g, flow, cfg);
    const FeatureMap wm = warping::warp_features(mix, flow, cfg);
    for (std::size_t i = 0; i < mix.data.size(); ++i) {
      const double expect = double(a) * wf.data[i] + double(b) * wg.data[i];
      const double scale = std::max({1.0, std::abs(expect)});
      CHECK(std::abs(wm.data[i] - expect) <= 1e-5 * scale);
    }
    const auto [lo, hi] = std::minmax_element(f.data.begin(), f.data.end());
    for (float v : wf.data) {
      CHECK(v >= *lo);
      CHECK(v <= *hi);
    }
  }
}

TEST_CASE("warp matches a per-pixel oracle") {
  std::mt19937_64 rng(6);
  const FeatureMap f = testing::random_features(rng, 3, 8, 11);
  const FlowField flow = testing::random_flow(rng, 8, 11, 5.0f);
  const double lambda = 2.0;
  const FeatureMap out = warping::warp_features(f, flow, {lambda});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 11; ++x) {
        const double expect = testing::bilinear_oracle(f, c, x + lambda * flow.u_at(x, y),
                                                       y + lambda * flow.v_at(x, y));
        CHECK(out.at(c, y, x) == doctest::Approx(expect).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("warp argument checks") {
  const FeatureMap f(1, 4, 5);
  CHECK_THROWS_AS(warping::warp_features(f, FlowField(5, 4), {}), ShapeError);
  CHECK_THROWS(warping::warp_features(f, FlowField(4, 5), {-1.0}));
  CHECK(warping::warp_features(f, FlowField(4, 5), {}).same_shape(f));
}
