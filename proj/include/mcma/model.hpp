// Encoder/decoder partition of a segmentation model.
//
// The reference model is analytic: features are negative squared colour
// distances to per-class prototypes at 1/stride resolution, decoded by
// bilinear upsampling and argmax. The feature-file model replays encoder
// outputs exported from an external network.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mcma/core.hpp"

namespace mcma::model {

struct ClassPrototype {
  std::array<std::uint8_t, 3> color{0, 0, 0};
  double bias = 0.0;
};

struct ModelSpec {
  ModelKind kind = ModelKind::kReference;
  int feature_stride = 4;
  /// One entry per class, in class-index order (reference kind).
  std::vector<ClassPrototype> prototypes;
  /// Class count for the feature-files kind; the reference kind uses
  /// prototypes.size().
  int num_classes = 0;
  /// Per-frame Gaussian feature noise, keyed by (noise_seed, frame index).
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
  std::filesystem::path feature_dir;

  int class_count() const {
    return kind == ModelKind::kReference ? static_cast<int>(prototypes.size()) : num_classes;
  }
  void validate() const;
};

/// f = E(x).
FeatureMap encode(const Frame& frame, const ModelSpec& spec);
/// y = D(f): bilinear upsampling by feature_stride, argmax with ties going
/// to the lowest class index.
SegmentationMask decode(const FeatureMap& features, const ModelSpec& spec);

/// Text form of a ModelSpec (key = value lines):
///   kind = reference | features
///   stride = 4
///   num_classes = N            (features kind)
///   feature_dir = PATH         (features kind; relative to the file)
///   noise_std = 0, noise_seed = 0
///   class_color.K = R G B, class_bias.K = b   (reference kind)
ModelSpec parse_model_config(const std::string& text,
                             const std::filesystem::path& base_dir = {});
ModelSpec load_model_config(const std::filesystem::path& path);
std::string format_model_config(const ModelSpec& spec);

/// Path of the exported features for one frame.
std::filesystem::path feature_file(const std::filesystem::path& dir, std::int64_t index);

/// Encoder and decoder bound to one ModelSpec. Both calls are const and
/// safe to issue concurrently.
class SegmentationModel {
 public:
  explicit SegmentationModel(ModelSpec spec);

  FeatureMap encode(const Frame& frame) const { return model::encode(frame, spec_); }
  SegmentationMask decode(const FeatureMap& features) const {
    return model::decode(features, spec_);
  }
  int num_classes() const { return spec_.class_count(); }
  const ModelSpec& spec() const { return spec_; }

 private:
  ModelSpec spec_;
};

}  // namespace mcma::model
