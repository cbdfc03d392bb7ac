// Dense optical flow (polynomial-expansion method), flow resizing and
// motion statistics.
//
// Convention: a FlowField F estimated for (prev, curr) is *backward* flow.
// Pixel p of `curr` originates at p + F(p) in `prev`, so the previous
// frame (or its features) is aligned to the current geometry by sampling
// at p + F(p).
#pragma once

#include <map>
#include <vector>

#include "mcma/core.hpp"

namespace mcma::flow {

struct FlowParams {
  int pyramid_levels = 3;
  double pyramid_scale = 0.5;
  int window_size = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;

  void validate() const;
};

/// Luma for RGB frames (rounded BT.601 weights); gray frames pass through.
Frame to_grayscale(const Frame& frame);

/// Local quadratic model f(x) ~ x^T A x + b^T x + c per pixel, with x the
/// offset (col, row) from the pixel centre. A is symmetric.
struct PolyCoefficients {
  int width = 0;
  int height = 0;
  std::vector<float> a11, a12, a22, b1, b2, c;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Gaussian-weighted least-squares quadratic fit over a poly_n x poly_n
/// neighbourhood. Edges are replicated.
PolyCoefficients polynomial_expansion(const Frame& gray, int poly_n, double poly_sigma);

/// Same fit on a float plane (row-major, width x height).
PolyCoefficients polynomial_expansion(const std::vector<float>& plane, int width, int height,
                                      int poly_n, double poly_sigma);

/// Backward flow of `curr` relative to `prev` at the input resolution.
FlowField estimate_flow(const Frame& prev, const Frame& curr, const FlowParams& params = {});

/// Area-averaged downsample by the scale's integer factor.
Frame downscale_frame(const Frame& frame, FlowScale scale);

/// Bilinear resampling of u and v onto a target grid; displacements are
/// rescaled to target-grid pixels.
FlowField resize_flow(const FlowField& flow, int target_height, int target_width);

/// Bilinear resampling of a single plane (half-pixel centres, clamped).
std::vector<float> resample_plane(const std::vector<float>& plane, int width, int height,
                                  int target_width, int target_height);

/// Mean length of the displacement vectors.
double mean_flow_magnitude(const FlowField& flow);

/// Mean endpoint error against a reference field, ignoring a border band
/// of `margin` pixels.
double average_endpoint_error(const FlowField& estimate, const FlowField& reference,
                              int margin = 0);

/// Source of backward flow for consecutive frames, at its own working
/// resolution.
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual FlowField estimate(const Frame& prev, const Frame& curr) const = 0;
};

/// Polynomial-expansion flow computed on frames downscaled by `scale`.
class FarnebackEstimator final : public FlowEstimator {
 public:
  explicit FarnebackEstimator(FlowParams params = {}, FlowScale scale = FlowScale::kFull);
  FlowField estimate(const Frame& prev, const Frame& curr) const override;

  const FlowParams& params() const { return params_; }
  FlowScale scale() const { return scale_; }

 private:
  FlowParams params_;
  FlowScale scale_;
};

/// Replays known flow fields keyed by the current frame's index.
class OracleEstimator final : public FlowEstimator {
 public:
  explicit OracleEstimator(std::map<std::int64_t, FlowField> flows);
  FlowField estimate(const Frame& prev, const Frame& curr) const override;

 private:
  std::map<std::int64_t, FlowField> flows_;
};

}  // namespace mcma::flow
