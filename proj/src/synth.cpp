#include "mcma/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mcma/flow.hpp"
#include "mcma/io.hpp"

namespace mcma::synth {
namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t hash4(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return splitmix(splitmix(splitmix(splitmix(a) ^ b) ^ c) ^ d);
}

// Uniform in [0, 1).
double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Smoothly interpolated lattice noise in [-1, 1]; `surface` separates the
// textures of different objects.
double value_noise(std::uint64_t seed, std::uint64_t surface, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  auto lattice = [&](std::int64_t i, std::int64_t j) {
    return 2.0 * unit(hash4(seed, surface, static_cast<std::uint64_t>(i),
                            static_cast<std::uint64_t>(j))) -
           1.0;
  };
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double sx = smooth(x - fx);
  const double sy = smooth(y - fy);
  const double top = lattice(ix, iy) + sx * (lattice(ix + 1, iy) - lattice(ix, iy));
  const double bottom =
      lattice(ix, iy + 1) + sx * (lattice(ix + 1, iy + 1) - lattice(ix, iy + 1));
  return top + sy * (bottom - top);
}

// Two octaves, still within [-1, 1].
double texture(std::uint64_t seed, std::uint64_t surface, double x, double y, double scale) {
  return 0.65 * value_noise(seed, 2 * surface, x / scale, y / scale) +
         0.35 * value_noise(seed, 2 * surface + 1, 2.0 * x / scale, 2.0 * y / scale);
}

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

bool contains(const SceneObject& o, double cx, double cy, double px, double py) {
  if (o.shape == Shape::kDisk) {
    const double dx = px - cx;
    const double dy = py - cy;
    return dx * dx + dy * dy <= o.radius * o.radius;
  }
  return px >= cx - o.width / 2 && px < cx + o.width / 2 && py >= cy - o.height / 2 &&
         py < cy + o.height / 2;
}

constexpr std::uint64_t kBackgroundSurface = 0;
constexpr std::uint64_t kNoiseSalt = 0x6E6F697365ULL;

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<Color> default_palette(int num_classes) {
  static constexpr Color kBase[] = {
      {40, 40, 40},   {220, 60, 60},  {60, 200, 80},  {60, 90, 220},
      {220, 200, 60}, {200, 70, 200}, {60, 200, 200}, {235, 235, 235},
  };
  std::vector<Color> colors;
  for (int k = 0; k < num_classes; ++k) {
    if (k < 8) {
      colors.push_back(kBase[k]);
    } else {
      const std::uint64_t h = splitmix(static_cast<std::uint64_t>(k));
      colors.push_back({static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
                        static_cast<std::uint8_t>(h >> 16)});
    }
  }
  return colors;
}

Color SceneSpec::class_color(int class_id) const {
  if (class_id >= 0 && class_id < static_cast<int>(class_colors.size())) {
    return class_colors[class_id];
  }
  return default_palette(class_id + 1)[class_id];
}

void SceneSpec::validate() const {
  if (width < 2 || height < 2) throw Error("scene must be at least 2x2 pixels");
  if (frames < 1) throw Error("scene needs at least one frame");
  if (num_classes < 2 || num_classes > 256) throw Error("num_classes must lie in [2, 256]");
  if (background_class < 0 || background_class >= num_classes) {
    throw Error("background_class out of range");
  }
  if (static_cast<int>(class_colors.size()) > num_classes) {
    throw Error("more class colours than classes");
  }
  if (texture_amplitude < 0.0) throw Error("texture_amplitude must be >= 0");
  if (!(texture_scale > 0.0)) throw Error("texture_scale must be > 0");
  if (label_noise_rate < 0.0 || label_noise_rate > 1.0) {
    throw Error("label_noise_rate must lie in [0, 1]");
  }
  if (label_noise_rate > 0.0 && (noise_class < 0 || noise_class >= num_classes)) {
    throw Error("noise_class out of range");
  }
  if (noise_block < 1) throw Error("noise_block must be >= 1");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    const std::string where = "object " + std::to_string(i) + ": ";
    if (o.class_id < 0 || o.class_id >= num_classes) throw Error(where + "class out of range");
    if (std::abs(o.vx) > 8.0 || std::abs(o.vy) > 8.0) {
      throw Error(where + "velocity components must be within 8 px/frame");
    }
    if (o.shape == Shape::kDisk && !(o.radius > 0.0)) throw Error(where + "radius must be > 0");
    if (o.shape == Shape::kRect && !(o.width > 0.0 && o.height > 0.0)) {
      throw Error(where + "width and height must be > 0");
    }
    if (o.motion == Motion::kOscillate && !(o.period > 0.0)) {
      throw Error(where + "period must be > 0");
    }
  }
}

std::pair<double, double> object_position(const SceneObject& o, double t) {
  if (o.motion == Motion::kLinear) return {o.x + t * o.vx, o.y + t * o.vy};
  // Derivative is velocity * cos(2 pi t / period): speed never exceeds |v|.
  const double k = o.period / (2.0 * std::numbers::pi);
  const double s = std::sin(2.0 * std::numbers::pi * t / o.period);
  return {o.x + o.vx * k * s, o.y + o.vy * k * s};
}

Sequence generate(const SceneSpec& spec) {
  spec.validate();
  const int w = spec.width;
  const int h = spec.height;
  const std::size_t n_obj = spec.objects.size();
  const Color noise_color = spec.class_color(spec.noise_class);

  Sequence seq;
  std::vector<std::pair<double, double>> pos(n_obj), prev_pos(n_obj);
  std::vector<Color> colors(n_obj);
  for (std::size_t k = 0; k < n_obj; ++k) {
    const auto& o = spec.objects[k];
    colors[k] = o.has_color ? o.color : spec.class_color(o.class_id);
  }
  const Color bg = spec.class_color(spec.background_class);

  for (int j = 0; j < spec.frames; ++j) {
    for (std::size_t k = 0; k < n_obj; ++k) {
      pos[k] = object_position(spec.objects[k], j);
      prev_pos[k] = j > 0 ? object_position(spec.objects[k], j - 1) : pos[k];
    }
    const int block = spec.noise_block;
    const std::uint64_t frame_key = hash4(spec.seed, kNoiseSalt, static_cast<std::uint64_t>(j), 0);
    const int off_x = static_cast<int>(frame_key % block);
    const int off_y = static_cast<int>((frame_key >> 32) % block);

    Frame frame(w, h, 3, j);
    SegmentationMask mask(h, w, static_cast<std::uint8_t>(spec.background_class));
    FlowField flow(h, w);
    for (int y = 0; y < h; ++y) {
      const double py = y + 0.5;
      for (int x = 0; x < w; ++x) {
        const double px = x + 0.5;
        int top = -1;
        for (int k = static_cast<int>(n_obj) - 1; k >= 0; --k) {
          if (contains(spec.objects[k], pos[k].first, pos[k].second, px, py)) {
            top = k;
            break;
          }
        }
        Color base = bg;
        double tex;
        if (top >= 0) {
          base = colors[top];
          tex = texture(spec.seed, top + 1, px - pos[top].first, py - pos[top].second,
                        spec.texture_scale);
          mask.at(x, y) = static_cast<std::uint8_t>(spec.objects[top].class_id);
          flow.u_at(x, y) = static_cast<float>(prev_pos[top].first - pos[top].first);
          flow.v_at(x, y) = static_cast<float>(prev_pos[top].second - pos[top].second);
        } else {
          tex = texture(spec.seed, kBackgroundSurface, px, py, spec.texture_scale);
        }
        if (spec.label_noise_rate > 0.0 && mask.at(x, y) == spec.background_class) {
          const auto bx = static_cast<std::uint64_t>((x + off_x) / block);
          const auto by = static_cast<std::uint64_t>((y + off_y) / block);
          if (unit(hash4(frame_key, bx, by, kNoiseSalt)) < spec.label_noise_rate) {
            base = noise_color;
          }
        }
        const double jitter = spec.texture_amplitude * tex;
        for (int c = 0; c < 3; ++c) frame.at(x, y, c) = to_u8(base[c] + jitter);
      }
    }
    seq.frames.push_back(std::move(frame));
    seq.masks.push_back(std::move(mask));
    seq.flows.push_back(std::move(flow));
  }
  return seq;
}

std::vector<double> motion_profile(const Sequence& sequence) {
  std::vector<double> out;
  out.reserve(sequence.flows.size());
  for (const auto& f : sequence.flows) out.push_back(flow::mean_flow_magnitude(f));
  return out;
}

std::vector<double> motion_profile(const SceneSpec& spec) { return motion_profile(generate(spec)); }

model::ModelSpec reference_model(const SceneSpec& spec, int feature_stride) {
  model::ModelSpec m;
  m.kind = ModelKind::kReference;
  m.feature_stride = feature_stride;
  for (int k = 0; k < spec.num_classes; ++k) m.prototypes.push_back({spec.class_color(k), 0.0});
  return m;
}

TranslationPair textured_translation(int width, int height, double dx, double dy,
                                     std::uint64_t seed, double amplitude, double scale) {
  TranslationPair pair{Frame(width, height, 1, 0), Frame(width, height, 1, 1),
                       FlowField(height, width, static_cast<float>(-dx),
                                 static_cast<float>(-dy))};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      pair.prev.at(x, y) = to_u8(128.0 + amplitude * texture(seed, 0, px, py, scale));
      pair.curr.at(x, y) = to_u8(128.0 + amplitude * texture(seed, 0, px - dx, py - dy, scale));
    }
  }
  return pair;
}

Frame crop_frame(const Frame& frame, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || width < 1 || height < 1 || x0 + width > frame.width ||
      y0 + height > frame.height) {
    throw ShapeError("crop window lies outside the frame");
  }
  Frame out(width, height, frame.channels, frame.index);
  const std::size_t row = static_cast<std::size_t>(width) * frame.channels;
  for (int y = 0; y < height; ++y) {
    const auto* src = &frame.data[(static_cast<std::size_t>(y0 + y) * frame.width + x0) *
                                  frame.channels];
    std::copy(src, src + row, &out.data[static_cast<std::size_t>(y) * row]);
  }
  return out;
}

void write_dataset(const Sequence& sequence, const std::filesystem::path& dir) {
  for (std::size_t i = 0; i < sequence.frames.size(); ++i) {
    const std::string stem = io::frame_stem(sequence.frames[i].index);
    io::write_frame(sequence.frames[i], dir / "frames" / (stem + ".ppm"));
    io::write_mask(sequence.masks[i], dir / "masks" / (stem + ".pgm"));
    io::write_flow(sequence.flows[i], dir / "flow" / (stem + ".mcfl"));
  }
}

// ---------------------------------------------------------------------------
// Scene files

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& text, int line) {
  T value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw FormatError("scene line " + std::to_string(line) + ": bad number '" + text + "'");
  }
  return value;
}

Color parse_color(const std::string& text, int line) {
  std::istringstream in(text);
  Color c{};
  for (auto& channel : c) {
    std::string tok;
    if (!(in >> tok)) throw FormatError("scene line " + std::to_string(line) + ": need R G B");
    const int v = parse_number<int>(tok, line);
    if (v < 0 || v > 255) {
      throw FormatError("scene line " + std::to_string(line) + ": colour out of range");
    }
    channel = static_cast<std::uint8_t>(v);
  }
  std::string extra;
  if (in >> extra) throw FormatError("scene line " + std::to_string(line) + ": need R G B");
  return c;
}

SceneObject parse_object(const std::string& text, int line) {
  std::istringstream in(text);
  std::string shape;
  in >> shape;
  SceneObject o;
  if (shape == "disk") {
    o.shape = Shape::kDisk;
  } else if (shape == "rect") {
    o.shape = Shape::kRect;
  } else {
    throw FormatError("scene line " + std::to_string(line) + ": shape must be disk or rect");
  }
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      throw FormatError("scene line " + std::to_string(line) + ": expected key=value, got '" +
                        tok + "'");
    }
    const std::string key = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    if (key == "class") o.class_id = parse_number<int>(value, line);
    else if (key == "x") o.x = parse_number<double>(value, line);
    else if (key == "y") o.y = parse_number<double>(value, line);
    else if (key == "r") o.radius = parse_number<double>(value, line);
    else if (key == "w") o.width = parse_number<double>(value, line);
    else if (key == "h") o.height = parse_number<double>(value, line);
    else if (key == "vx") o.vx = parse_number<double>(value, line);
    else if (key == "vy") o.vy = parse_number<double>(value, line);
    else if (key == "period") o.period = parse_number<double>(value, line);
    else if (key == "motion") {
      if (value == "linear") o.motion = Motion::kLinear;
      else if (value == "oscillate") o.motion = Motion::kOscillate;
      else throw FormatError("scene line " + std::to_string(line) + ": unknown motion '" + value + "'");
    } else if (key == "color") {
      std::string rgb = value;
      std::replace(rgb.begin(), rgb.end(), ',', ' ');
      o.color = parse_color(rgb, line);
      o.has_color = true;
    } else {
      throw FormatError("scene line " + std::to_string(line) + ": unknown object key '" + key +
                        "'");
    }
  }
  return o;
}

}  // namespace

SceneSpec parse_scene(const std::string& text) {
  SceneSpec spec;
  std::vector<std::pair<int, Color>> colors;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string content = trim(raw.substr(0, raw.find('#')));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw FormatError("scene line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    if (key == "width") spec.width = parse_number<int>(value, line);
    else if (key == "height") spec.height = parse_number<int>(value, line);
    else if (key == "frames") spec.frames = parse_number<int>(value, line);
    else if (key == "seed") spec.seed = parse_number<std::uint64_t>(value, line);
    else if (key == "num_classes") spec.num_classes = parse_number<int>(value, line);
    else if (key == "background_class") spec.background_class = parse_number<int>(value, line);
    else if (key == "texture_amplitude") spec.texture_amplitude = parse_number<double>(value, line);
    else if (key == "texture_scale") spec.texture_scale = parse_number<double>(value, line);
    else if (key == "label_noise_rate") spec.label_noise_rate = parse_number<double>(value, line);
    else if (key == "noise_class") spec.noise_class = parse_number<int>(value, line);
    else if (key == "noise_block") spec.noise_block = parse_number<int>(value, line);
    else if (key == "object") spec.objects.push_back(parse_object(value, line));
    else if (key.rfind("class_color.", 0) == 0) {
      colors.emplace_back(parse_number<int>(key.substr(12), line), parse_color(value, line));
    } else {
      throw FormatError("scene line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  if (!colors.empty()) {
    spec.class_colors = default_palette(spec.num_classes);
    for (const auto& [k, c] : colors) {
      if (k < 0 || k >= spec.num_classes) throw FormatError("class_color index out of range");
      spec.class_colors[k] = c;
    }
  }
  try {
    spec.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("scene: ") + e.what());
  }
  return spec;
}

SceneSpec load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scene file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scene(text.str());
}

std::string format_scene(const SceneSpec& spec) {
  std::ostringstream out;
  out << "width = " << spec.width << "\nheight = " << spec.height
      << "\nframes = " << spec.frames << "\nseed = " << spec.seed
      << "\nnum_classes = " << spec.num_classes
      << "\nbackground_class = " << spec.background_class
      << "\ntexture_amplitude = " << fmt(spec.texture_amplitude)
      << "\ntexture_scale = " << fmt(spec.texture_scale)
      << "\nlabel_noise_rate = " << fmt(spec.label_noise_rate)
      << "\nnoise_class = " << spec.noise_class << "\nnoise_block = " << spec.noise_block << '\n';
  for (std::size_t k = 0; k < spec.class_colors.size(); ++k) {
    const auto& c = spec.class_colors[k];
    out << "class_color." << k << " = " << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2])
        << '\n';
  }
  for (const auto& o : spec.objects) {
    out << "object = " << (o.shape == Shape::kDisk ? "disk" : "rect") << " class=" << o.class_id
        << " x=" << fmt(o.x) << " y=" << fmt(o.y);
    if (o.shape == Shape::kDisk) {
      out << " r=" << fmt(o.radius);
    } else {
      out << " w=" << fmt(o.width) << " h=" << fmt(o.height);
    }
    out << " vx=" << fmt(o.vx) << " vy=" << fmt(o.vy);
    if (o.motion == Motion::kOscillate) out << " motion=oscillate period=" << fmt(o.period);
    if (o.has_color) {
      out << " color=" << int(o.color[0]) << ',' << int(o.color[1]) << ',' << int(o.color[2]);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace mcma::synth
