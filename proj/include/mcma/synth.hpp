// Synthetic moving-shape sequences with exact masks and backward flow.
//
// Objects are rigid disks or rectangles painted back to front over a
// background. Every surface carries a smooth value-noise texture attached
// to its own coordinates, so it moves with the surface and flow stays
// observable inside uniform regions. Optional label noise paints square
// blobs of another class's colour onto background pixels for a single
// frame without touching the ground-truth mask.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mcma/core.hpp"
#include "mcma/model.hpp"

namespace mcma::synth {

using Color = std::array<std::uint8_t, 3>;

enum class Shape { kDisk, kRect };
enum class Motion {
  kLinear,     // position = start + t * velocity
  kOscillate,  // speed swings between 0 and |velocity| with the given period
};

struct SceneObject {
  Shape shape = Shape::kDisk;
  int class_id = 1;
  double x = 0.0;  // centre at frame 0
  double y = 0.0;
  double radius = 10.0;  // disk
  double width = 20.0;   // rect
  double height = 20.0;
  double vx = 0.0;  // px/frame
  double vy = 0.0;
  Motion motion = Motion::kLinear;
  double period = 32.0;  // frames, oscillating motion only
  bool has_color = false;
  Color color{0, 0, 0};  // used when has_color, else the class colour
};

struct SceneSpec {
  int width = 320;
  int height = 256;
  int frames = 100;
  std::uint64_t seed = 1;
  int num_classes = 2;
  int background_class = 0;
  /// Indexed by class; filled from a default palette when shorter.
  std::vector<Color> class_colors;
  std::vector<SceneObject> objects;
  double texture_amplitude = 8.0;  // peak deviation in 8-bit levels
  double texture_scale = 6.0;      // lattice spacing in px
  double label_noise_rate = 0.0;   // per background pixel and frame
  int noise_class = 1;
  int noise_block = 8;  // blob edge length in px

  Color class_color(int class_id) const;
  void validate() const;
};

/// Distinct, well-separated colours for up to 256 classes.
std::vector<Color> default_palette(int num_classes);

struct Sequence {
  std::vector<Frame> frames;
  std::vector<SegmentationMask> masks;
  /// Ground-truth backward flow per frame; frame 0 has an all-zero field.
  std::vector<FlowField> flows;
};

/// Object centre at frame t.
std::pair<double, double> object_position(const SceneObject& object, double t);

Sequence generate(const SceneSpec& spec);

/// Per-frame mean length of the ground-truth flow vectors.
std::vector<double> motion_profile(const Sequence& sequence);
std::vector<double> motion_profile(const SceneSpec& spec);

/// Reference model whose prototypes are the scene's class colours.
model::ModelSpec reference_model(const SceneSpec& spec, int feature_stride = 4);

/// A textured gray image and a copy translated by (dx, dy); `flow` is the
/// exact backward flow (-dx, -dy).
struct TranslationPair {
  Frame prev;
  Frame curr;
  FlowField flow;
};
TranslationPair textured_translation(int width, int height, double dx, double dy,
                                     std::uint64_t seed, double amplitude = 60.0,
                                     double scale = 4.0);

/// Sub-image starting at (x0, y0); the index is preserved.
Frame crop_frame(const Frame& frame, int x0, int y0, int width, int height);

/// Writes frames/NNNNNN.ppm, masks/NNNNNN.pgm and flow/NNNNNN.mcfl.
void write_dataset(const Sequence& sequence, const std::filesystem::path& dir);

/// Parses the key = value scene format. Throws FormatError with the line
/// number on unknown keys or bad values.
SceneSpec parse_scene(const std::string& text);
SceneSpec load_scene(const std::filesystem::path& path);
/// Inverse of parse_scene.
std::string format_scene(const SceneSpec& spec);

}  // namespace mcma::synth
