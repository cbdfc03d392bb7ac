// Flow-guided bilinear warping of feature maps: phi = W(f, lambda * F).
#pragma once

#include <vector>

#include "mcma/core.hpp"

namespace mcma::warping {

struct WarpConfig {
  /// Multiplier applied to the flow before sampling.
  double lambda = 2.0;
};

/// Per-channel bilinear interpolation at (x, y) = (col, row). Coordinates
/// outside the grid are clamped to the border first.
std::vector<float> bilinear_sample(const FeatureMap& features, double x, double y);

/// output(p) = bilinear_sample(features, p + lambda * flow(p)). The flow
/// must already be on the feature grid.
FeatureMap warp_features(const FeatureMap& features, const FlowField& flow,
                         const WarpConfig& cfg = {});

}  // namespace mcma::warping
