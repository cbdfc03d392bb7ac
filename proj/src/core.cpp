#include "mcma/core.hpp"

#include <cmath>

namespace mcma {

Frame::Frame(int width, int height, int channels, std::int64_t index)
    : width(width),
      height(height),
      channels(channels),
      data(static_cast<std::size_t>(width) * height * channels, 0),
      index(index) {}

Frame::Frame(int width, int height, int channels, std::vector<std::uint8_t> data,
             std::int64_t index)
    : width(width), height(height), channels(channels), data(std::move(data)),
      index(index) {
  validate();
}

void Frame::validate() const {
  if (width < 2 || height < 2) {
    throw ShapeError("frame must be at least 2x2, got " + std::to_string(width) +
                     "x" + std::to_string(height));
  }
  if (channels != 1 && channels != 3) {
    throw ShapeError("frame must have 1 or 3 channels, got " +
                     std::to_string(channels));
  }
  if (data.size() != static_cast<std::size_t>(width) * height * channels) {
    throw ShapeError("frame data length does not match its dimensions");
  }
}

FeatureMap::FeatureMap(int channels, int height, int width, float fill)
    : channels(channels),
      height(height),
      width(width),
      data(static_cast<std::size_t>(channels) * height * width, fill) {}

FeatureMap::FeatureMap(int channels, int height, int width, std::vector<float> data)
    : channels(channels), height(height), width(width), data(std::move(data)) {
  validate();
}

void FeatureMap::validate() const {
  if (channels < 1 || height < 1 || width < 1) {
    throw ShapeError("feature map dimensions must be positive");
  }
  if (data.size() != static_cast<std::size_t>(channels) * height * width) {
    throw ShapeError("feature data length does not match its dimensions");
  }
  for (float value : data) {
    if (!std::isfinite(value)) throw FormatError("feature map holds a non-finite value");
  }
}

FlowField::FlowField(int height, int width, float u0, float v0)
    : height(height),
      width(width),
      u(static_cast<std::size_t>(height) * width, u0),
      v(static_cast<std::size_t>(height) * width, v0) {}

void FlowField::validate() const {
  if (height < 1 || width < 1) throw ShapeError("flow dimensions must be positive");
  if (u.size() != size() || v.size() != size()) {
    throw ShapeError("flow component length does not match its dimensions");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (!std::isfinite(u[i]) || !std::isfinite(v[i])) {
      throw FormatError("flow field holds a non-finite value");
    }
  }
}

SegmentationMask::SegmentationMask(int height, int width, std::uint8_t fill)
    : height(height), width(width), labels(static_cast<std::size_t>(height) * width, fill) {}

void SegmentationMask::validate(int num_classes) const {
  if (labels.size() != size()) throw ShapeError("mask length does not match its dimensions");
  for (auto label : labels) {
    if (label >= num_classes) {
      throw FormatError("mask label " + std::to_string(label) + " is not below " +
                        std::to_string(num_classes));
    }
  }
}

FlowScale flow_scale_from_real(double scale) {
  if (scale == 1.0) return FlowScale::kFull;
  if (scale == 0.5) return FlowScale::kHalf;
  if (scale == 0.25) return FlowScale::kQuarter;
  throw Error("flow scale must be 1, 0.5 or 0.25");
}

double flow_scale_to_real(FlowScale s) { return 1.0 / downsample_factor(s); }

std::string to_string(Method m) {
  switch (m) {
    case Method::kBaseline: return "baseline";
    case Method::kEma: return "ema";
    case Method::kMcma: return "mcma";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "baseline") return Method::kBaseline;
  if (s == "ema") return Method::kEma;
  if (s == "mcma") return Method::kMcma;
  throw Error("unknown method '" + s + "'");
}

std::string to_string(Executor e) {
  return e == Executor::kSequential ? "seq" : "par";
}

Executor executor_from_string(const std::string& s) {
  if (s == "seq" || s == "sequential") return Executor::kSequential;
  if (s == "par" || s == "parallel") return Executor::kParallel;
  throw Error("unknown executor '" + s + "'");
}

void PipelineConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("alpha must lie in (0, 1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("lambda must be >= 0");
  if (num_classes < 2 || num_classes > 256) throw Error("num_classes must lie in [2, 256]");
}

}  // namespace mcma
