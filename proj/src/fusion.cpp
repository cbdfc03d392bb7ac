#include "mcma/fusion.hpp"

#include "mcma/warping.hpp"

namespace mcma::fusion {

FeatureMap ema_fuse(const FeatureMap& curr, const FeatureMap& warped_prev, double alpha) {
  if (!curr.same_shape(warped_prev)) throw ShapeError("ema_fuse: feature shapes differ");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("ema_fuse: alpha must lie in (0, 1]");
  if (alpha == 1.0) return curr;
  FeatureMap out(curr.channels, curr.height, curr.width);
  for (std::size_t i = 0; i < curr.data.size(); ++i) {
    const double prev = warped_prev.data[i];
    // Blend in double, store in float; the result stays within
    // [min(curr, prev), max(curr, prev)].
    out.data[i] = static_cast<float>(prev + alpha * (double(curr.data[i]) - prev));
  }
  return out;
}

FlowField flow_on_feature_grid(const FlowField& raw, int feature_height, int feature_width,
                               bool flip_sign) {
  FlowField grid = flow::resize_flow(raw, feature_height, feature_width);
  if (flip_sign) {
    for (auto& u : grid.u) u = -u;
    for (auto& v : grid.v) v = -v;
  }
  return grid;
}

FeatureMap align_state(const FeatureMap& state, const FlowField* grid_flow,
                       const PipelineConfig& cfg) {
  if (cfg.method != Method::kMcma) return state;
  if (grid_flow == nullptr) throw Error("align_state: MCMA needs a flow field");
  return warping::warp_features(state, *grid_flow, warping::WarpConfig{cfg.lambda});
}

FeatureMap fuse(const FeatureMap& current, const FeatureMap* aligned_state,
                const PipelineConfig& cfg) {
  if (cfg.method == Method::kBaseline || aligned_state == nullptr) return current;
  return ema_fuse(current, *aligned_state, cfg.alpha);
}

StepResult mcma_step(const std::optional<TemporalState>& state, const Frame& frame,
                     const model::SegmentationModel& model,
                     const flow::FlowEstimator& flow_estimator, const PipelineConfig& cfg) {
  cfg.validate();
  if (state && (state->prev_frame.width != frame.width ||
                state->prev_frame.height != frame.height)) {
    throw ShapeError("frame " + std::to_string(frame.index) + " is " +
                     std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                     " but the sequence is " + std::to_string(state->prev_frame.width) + "x" +
                     std::to_string(state->prev_frame.height));
  }

  StepResult result;
  const FeatureMap current = model.encode(frame);
  FeatureMap fused;
  if (!state) {
    fused = current;
  } else {
    if (!state->features.same_shape(current)) {
      throw ShapeError("encoder output shape changed at frame " + std::to_string(frame.index));
    }
    std::optional<FlowField> grid;
    if (needs_flow(cfg, true)) {
      result.flow = flow_estimator.estimate(state->prev_frame, frame);
      grid = flow_on_feature_grid(*result.flow, current.height, current.width,
                                  cfg.flip_flow_sign);
    }
    const FeatureMap aligned = align_state(state->features, grid ? &*grid : nullptr, cfg);
    fused = fuse(current, &aligned, cfg);
  }
  result.mask = model.decode(fused);
  result.state.features = std::move(fused);
  result.state.prev_frame = frame;
  result.state.frames_absorbed = state ? state->frames_absorbed + 1 : 1;
  return result;
}

}  // namespace mcma::fusion
