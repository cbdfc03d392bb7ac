#include "mcma/warping.hpp"

#include <cmath>

#include "mcma/detail/interp.hpp"

namespace mcma::warping {

std::vector<float> bilinear_sample(const FeatureMap& features, double x, double y) {
  const detail::Tap tx = detail::make_tap(x, features.width);
  const detail::Tap ty = detail::make_tap(y, features.height);
  std::vector<float> out(features.channels);
  for (int c = 0; c < features.channels; ++c) {
    const float* plane = features.data.data() + c * features.plane_size();
    out[c] = static_cast<float>(detail::sample(plane, features.width, tx, ty));
  }
  return out;
}

FeatureMap warp_features(const FeatureMap& features, const FlowField& flow,
                         const WarpConfig& cfg) {
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
    throw Error("warp lambda must be a finite value >= 0");
  }
  if (flow.width != features.width || flow.height != features.height) {
    throw ShapeError("warp_features: flow grid " + std::to_string(flow.width) + "x" +
                     std::to_string(flow.height) + " does not match features " +
                     std::to_string(features.width) + "x" + std::to_string(features.height));
  }
  FeatureMap out(features.channels, features.height, features.width);
  const std::size_t plane = features.plane_size();
  for (int y = 0; y < features.height; ++y) {
    for (int x = 0; x < features.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * features.width + x;
      const detail::Tap tx = detail::make_tap(x + cfg.lambda * flow.u[i], features.width);
      const detail::Tap ty = detail::make_tap(y + cfg.lambda * flow.v[i], features.height);
      for (int c = 0; c < features.channels; ++c) {
        out.data[c * plane + i] = static_cast<float>(
            detail::sample(features.data.data() + c * plane, features.width, tx, ty));
      }
    }
  }
  return out;
}

}  // namespace mcma::warping
