// Feature-space moving average with motion correction.
//
//   phi_j = W(f'_i, lambda * F)          (previous state aligned to frame j)
//   f'_j  = alpha * E(x_j) + (1 - alpha) * phi_j
//   y'_j  = D(f'_j)
//
// The recursion runs on the pre-decoder features; the first frame seeds the
// state with its own encoder output.
#pragma once

#include <optional>

#include "mcma/core.hpp"
#include "mcma/flow.hpp"
#include "mcma/model.hpp"

namespace mcma::fusion {

struct TemporalState {
  FeatureMap features;    // f' of the last absorbed frame
  Frame prev_frame;       // needed for the next flow estimate
  std::int64_t frames_absorbed = 0;
};

/// Elementwise alpha * curr + (1 - alpha) * warped_prev. alpha = 1 returns
/// curr exactly and curr == warped_prev returns it unchanged.
FeatureMap ema_fuse(const FeatureMap& curr, const FeatureMap& warped_prev, double alpha);

/// Backward flow between two frames, resampled to the feature grid and
/// optionally negated.
FlowField flow_on_feature_grid(const FlowField& raw, int feature_height, int feature_width,
                               bool flip_sign);

/// The state carried into step j, aligned to frame j's geometry: warped for
/// MCMA, unchanged for plain EMA. `grid_flow` may be empty for EMA.
FeatureMap align_state(const FeatureMap& state, const FlowField* grid_flow,
                       const PipelineConfig& cfg);

/// Combines the current features with the aligned state. Baseline ignores
/// the state.
FeatureMap fuse(const FeatureMap& current, const FeatureMap* aligned_state,
                const PipelineConfig& cfg);

/// Whether step j needs an optical flow estimate.
inline bool needs_flow(const PipelineConfig& cfg, bool has_state) {
  return has_state && cfg.method == Method::kMcma;
}

struct StepResult {
  TemporalState state;
  SegmentationMask mask;
  /// Flow at the estimator's resolution, present when one was computed.
  std::optional<FlowField> flow;
};

/// One iteration of the temporal loop.
StepResult mcma_step(const std::optional<TemporalState>& state, const Frame& frame,
                     const model::SegmentationModel& model,
                     const flow::FlowEstimator& flow_estimator, const PipelineConfig& cfg);

}  // namespace mcma::fusion
