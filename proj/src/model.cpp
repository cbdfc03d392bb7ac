#include "mcma/model.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "mcma/detail/interp.hpp"
#include "mcma/io.hpp"

namespace mcma::model {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::int64_t index) {
  // splitmix64 finaliser over the pair.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

FeatureMap encode_reference(const Frame& frame, const ModelSpec& spec) {
  const int stride = spec.feature_stride;
  if (frame.width % stride != 0 || frame.height % stride != 0) {
    throw ShapeError("frame " + std::to_string(frame.width) + "x" +
                     std::to_string(frame.height) + " is not divisible by feature stride " +
                     std::to_string(stride));
  }
  const int w = frame.width / stride;
  const int h = frame.height / stride;
  const int classes = spec.class_count();
  FeatureMap out(classes, h, w);
  const double inv_area = 1.0 / (static_cast<double>(stride) * stride);
  constexpr double kInvScale = 1.0 / (255.0 * 255.0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double mean[3] = {0.0, 0.0, 0.0};
      for (int dy = 0; dy < stride; ++dy) {
        for (int dx = 0; dx < stride; ++dx) {
          for (int c = 0; c < 3; ++c) {
            mean[c] += frame.at(x * stride + dx, y * stride + dy, frame.channels == 3 ? c : 0);
          }
        }
      }
      for (double& m : mean) m *= inv_area;
      for (int k = 0; k < classes; ++k) {
        const auto& proto = spec.prototypes[k];
        double dist = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double d = mean[c] - proto.color[c];
          dist += d * d;
        }
        out.at(k, y, x) = static_cast<float>(-dist * kInvScale + proto.bias);
      }
    }
  }

  if (spec.noise_std > 0.0) {
    std::mt19937_64 rng(mix_seed(spec.noise_seed, frame.index));
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (float& value : out.data) value = static_cast<float>(value + noise(rng));
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T number(const std::string& text, int line) {
  T value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw FormatError("model config line " + std::to_string(line) + ": bad number '" + text +
                      "'");
  }
  return value;
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void ModelSpec::validate() const {
  if (feature_stride < 1) throw Error("feature_stride must be >= 1");
  if (noise_std < 0.0) throw Error("noise_std must be >= 0");
  if (kind == ModelKind::kReference) {
    if (prototypes.size() < 2) throw Error("reference model needs at least 2 class prototypes");
    if (prototypes.size() > 256) throw Error("at most 256 classes are supported");
  } else {
    if (num_classes < 2 || num_classes > 256) throw Error("num_classes must lie in [2, 256]");
    if (feature_dir.empty()) throw Error("feature-files model needs a feature directory");
  }
}

ModelSpec parse_model_config(const std::string& text, const std::filesystem::path& base_dir) {
  ModelSpec spec;
  std::map<int, std::array<std::uint8_t, 3>> colors;
  std::map<int, double> biases;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string content = trim(raw.substr(0, raw.find('#')));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw FormatError("model config line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    if (key == "kind") {
      if (value == "reference") spec.kind = ModelKind::kReference;
      else if (value == "features") spec.kind = ModelKind::kFeatureFiles;
      else throw FormatError("model config line " + std::to_string(line) + ": unknown kind '" + value + "'");
    } else if (key == "stride") {
      spec.feature_stride = number<int>(value, line);
    } else if (key == "num_classes") {
      spec.num_classes = number<int>(value, line);
    } else if (key == "feature_dir") {
      const std::filesystem::path dir(value);
      spec.feature_dir = dir.is_absolute() ? dir : base_dir / dir;
    } else if (key == "noise_std") {
      spec.noise_std = number<double>(value, line);
    } else if (key == "noise_seed") {
      spec.noise_seed = number<std::uint64_t>(value, line);
    } else if (key.rfind("class_color.", 0) == 0) {
      std::istringstream rgb(value);
      std::array<std::uint8_t, 3> c{};
      for (auto& channel : c) {
        std::string tok;
        rgb >> tok;
        const int v = number<int>(tok, line);
        if (v < 0 || v > 255) {
          throw FormatError("model config line " + std::to_string(line) + ": colour out of range");
        }
        channel = static_cast<std::uint8_t>(v);
      }
      colors[number<int>(key.substr(12), line)] = c;
    } else if (key.rfind("class_bias.", 0) == 0) {
      biases[number<int>(key.substr(11), line)] = number<double>(value, line);
    } else {
      throw FormatError("model config line " + std::to_string(line) + ": unknown key '" + key +
                        "'");
    }
  }
  for (const auto& [k, c] : colors) {
    if (k != static_cast<int>(spec.prototypes.size())) {
      throw FormatError("model config: class colours must be numbered 0, 1, 2, ...");
    }
    spec.prototypes.push_back({c, 0.0});
  }
  for (const auto& [k, b] : biases) {
    if (k < 0 || k >= static_cast<int>(spec.prototypes.size())) {
      throw FormatError("model config: class_bias." + std::to_string(k) + " has no colour");
    }
    spec.prototypes[k].bias = b;
  }
  try {
    spec.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  return spec;
}

ModelSpec load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_model_config(text.str(), path.parent_path());
}

std::string format_model_config(const ModelSpec& spec) {
  std::ostringstream out;
  out << "kind = " << (spec.kind == ModelKind::kReference ? "reference" : "features") << '\n'
      << "stride = " << spec.feature_stride << '\n'
      << "noise_std = " << shortest(spec.noise_std) << '\n'
      << "noise_seed = " << spec.noise_seed << '\n';
  if (spec.kind == ModelKind::kFeatureFiles) {
    out << "num_classes = " << spec.num_classes << '\n'
        << "feature_dir = " << spec.feature_dir.string() << '\n';
  }
  for (std::size_t k = 0; k < spec.prototypes.size(); ++k) {
    const auto& p = spec.prototypes[k];
    out << "class_color." << k << " = " << int(p.color[0]) << ' ' << int(p.color[1]) << ' '
        << int(p.color[2]) << '\n';
    if (p.bias != 0.0) out << "class_bias." << k << " = " << shortest(p.bias) << '\n';
  }
  return out.str();
}

std::filesystem::path feature_file(const std::filesystem::path& dir, std::int64_t index) {
  return dir / (io::frame_stem(index) + ".mcfe");
}

FeatureMap encode(const Frame& frame, const ModelSpec& spec) {
  spec.validate();
  if (spec.kind == ModelKind::kReference) return encode_reference(frame, spec);
  const auto path = feature_file(spec.feature_dir, frame.index);
  if (!std::filesystem::exists(path)) {
    throw Error("missing feature file " + path.string());
  }
  FeatureMap features = io::read_features(path);
  if (features.channels != spec.num_classes) {
    throw ShapeError(path.string() + ": expected " + std::to_string(spec.num_classes) +
                     " channels, found " + std::to_string(features.channels));
  }
  return features;
}

SegmentationMask decode(const FeatureMap& features, const ModelSpec& spec) {
  if (features.channels != spec.class_count()) {
    throw ShapeError("decode: feature map has " + std::to_string(features.channels) +
                     " channels but the model has " + std::to_string(spec.class_count()) +
                     " classes");
  }
  const int stride = spec.feature_stride;
  const int width = features.width * stride;
  const int height = features.height * stride;
  std::vector<detail::Tap> xs(width);
  for (int x = 0; x < width; ++x) {
    xs[x] = detail::make_tap(detail::source_coord(x, features.width, width), features.width);
  }
  SegmentationMask mask(height, width);
  const std::size_t plane = features.plane_size();
  for (int y = 0; y < height; ++y) {
    const detail::Tap ty =
        detail::make_tap(detail::source_coord(y, features.height, height), features.height);
    for (int x = 0; x < width; ++x) {
      int best = 0;
      double best_score = detail::sample(features.data.data(), features.width, xs[x], ty);
      for (int c = 1; c < features.channels; ++c) {
        const double score =
            detail::sample(features.data.data() + c * plane, features.width, xs[x], ty);
        if (score > best_score) {
          best = c;
          best_score = score;
        }
      }
      mask.at(x, y) = static_cast<std::uint8_t>(best);
    }
  }
  return mask;
}

SegmentationModel::SegmentationModel(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

}  // namespace mcma::model
