// Shared domain types for motion-corrected temporal segmentation.
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcma {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Shapes of two operands do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An 8-bit image, row-major and channel-interleaved. `index` is the
/// position of the frame in its sequence.
struct Frame {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
  std::int64_t index = 0;

  Frame() = default;
  Frame(int width, int height, int channels, std::int64_t index = 0);
  Frame(int width, int height, int channels, std::vector<std::uint8_t> data,
        std::int64_t index = 0);

  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }

  /// Throws ShapeError unless the invariants hold.
  void validate() const;

  /// Equality ignores the sequence index.
  bool same_pixels(const Frame& other) const {
    return width == other.width && height == other.height &&
           channels == other.channels && data == other.data;
  }
};

/// Encoder output: `channels` planes of height x width, channel-major.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, float fill = 0.0f);
  FeatureMap(int channels, int height, int width, std::vector<float> data);

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height) * width;
  }
  bool same_shape(const FeatureMap& other) const {
    return channels == other.channels && height == other.height &&
           width == other.width;
  }
  void validate() const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Dense displacement field. Units are pixels of the field's own grid.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> u;
  std::vector<float> v;

  FlowField() = default;
  FlowField(int height, int width, float u0 = 0.0f, float v0 = 0.0f);

  float& u_at(int x, int y) { return u[static_cast<std::size_t>(y) * width + x]; }
  float u_at(int x, int y) const { return u[static_cast<std::size_t>(y) * width + x]; }
  float& v_at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
  float v_at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return static_cast<std::size_t>(width) * height; }
  void validate() const;

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

/// Per-pixel class index at full input resolution.
struct SegmentationMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  SegmentationMask() = default;
  SegmentationMask(int height, int width, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y) {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int x, int y) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t size() const { return static_cast<std::size_t>(width) * height; }
  /// Throws unless every label is below `num_classes`.
  void validate(int num_classes) const;

  friend bool operator==(const SegmentationMask&, const SegmentationMask&) = default;
};

/// Resolution at which optical flow is computed, relative to the input.
enum class FlowScale { kFull = 1, kHalf = 2, kQuarter = 4 };

/// Integer downsampling factor of a flow scale (1, 2 or 4).
inline int downsample_factor(FlowScale s) { return static_cast<int>(s); }
/// Accepts 1, 0.5 or 0.25.
FlowScale flow_scale_from_real(double scale);
double flow_scale_to_real(FlowScale s);

enum class Executor { kSequential, kParallel };
enum class ModelKind { kReference, kFeatureFiles };

/// Temporal aggregation applied on top of the frame-wise model.
enum class Method {
  kBaseline,  // D(E(x)) per frame
  kEma,       // feature-space moving average, no motion correction
  kMcma,      // flow-warped moving average
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);
std::string to_string(Executor e);
Executor executor_from_string(const std::string& s);

struct PipelineConfig {
  Method method = Method::kMcma;
  double alpha = 0.1;
  double lambda = 2.0;
  FlowScale flow_scale = FlowScale::kFull;
  int num_classes = 2;
  Executor executor = Executor::kSequential;
  ModelKind model = ModelKind::kReference;
  /// Negates the estimated flow before warping.
  bool flip_flow_sign = false;

  void validate() const;
};

}  // namespace mcma
