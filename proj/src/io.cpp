#include "mcma/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mcma::io {
namespace {

constexpr char kFlowMagic[4] = {'M', 'C', 'F', 'L'};
constexpr char kFeatureMagic[4] = {'M', 'C', 'F', 'E'};

void put_u32(Bytes& out, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

void put_f32(Bytes& out, float value) { put_u32(out, std::bit_cast<std::uint32_t>(value)); }

std::uint32_t get_u32(const Bytes& in, std::size_t offset) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) value |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return value;
}

float get_f32(const Bytes& in, std::size_t offset) {
  return std::bit_cast<float>(get_u32(in, offset));
}

// Cursor over a netpbm header: whitespace and '#' comments between tokens.
class PnmHeader {
 public:
  explicit PnmHeader(const Bytes& bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
      out.push_back(static_cast<char>(bytes_[pos_++]));
    }
    if (out.empty()) throw FormatError("malformed header: unexpected end of header");
    return out;
  }

  long number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(c); }) ||
        t.size() > 9) {
      throw FormatError("malformed header: bad number '" + t + "'");
    }
    return std::stol(t);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t payload_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("malformed header: missing separator before payload");
    }
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const Bytes& bytes_;
  std::size_t pos_ = 0;
};

Bytes encode_pnm(int width, int height, int channels, const std::vector<std::uint8_t>& data) {
  const std::string header = std::string(channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Frame decode_frame(const Bytes& bytes, std::int64_t index) {
  PnmHeader header(bytes);
  const std::string magic = header.token();
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw FormatError("malformed header: unsupported magic '" + magic + "'");
  }
  const long width = header.number();
  const long height = header.number();
  if (width < 2 || height < 2) {
    throw FormatError("malformed header: degenerate dimensions " + std::to_string(width) +
                      "x" + std::to_string(height));
  }
  const long maxval = header.number();
  if (maxval != 255) {
    throw FormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  }
  const std::size_t offset = header.payload_offset();
  const std::size_t expected = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() < offset + expected) {
    throw FormatError("truncated payload: expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size() - std::min(offset, bytes.size())));
  }
  std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(offset + expected));
  return Frame(static_cast<int>(width), static_cast<int>(height), channels, std::move(data),
               index);
}

Frame read_frame(const std::filesystem::path& path, std::int64_t index) {
  try {
    return decode_frame(read_file(path), index);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Bytes encode_frame(const Frame& frame) {
  frame.validate();
  return encode_pnm(frame.width, frame.height, frame.channels, frame.data);
}

void write_frame(const Frame& frame, const std::filesystem::path& path) {
  write_file(path, encode_frame(frame));
}

SegmentationMask read_mask(const std::filesystem::path& path) {
  Frame gray = read_frame(path);
  if (gray.channels != 1) throw FormatError(path.string() + ": mask must be a P5 file");
  SegmentationMask mask(gray.height, gray.width);
  mask.labels = std::move(gray.data);
  return mask;
}

void write_mask(const SegmentationMask& mask, const std::filesystem::path& path) {
  if (mask.labels.size() != mask.size()) throw ShapeError("mask length mismatch");
  write_file(path, encode_pnm(mask.width, mask.height, 1, mask.labels));
}

Bytes encode_flow(const FlowField& flow) {
  flow.validate();
  Bytes out;
  out.reserve(12 + flow.size() * 8);
  out.insert(out.end(), kFlowMagic, kFlowMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(flow.width));
  put_u32(out, static_cast<std::uint32_t>(flow.height));
  for (std::size_t i = 0; i < flow.size(); ++i) {
    put_f32(out, flow.u[i]);
    put_f32(out, flow.v[i]);
  }
  return out;
}

FlowField decode_flow(const Bytes& bytes) {
  if (bytes.size() < 12) throw FormatError("flow file shorter than its header");
  if (std::memcmp(bytes.data(), kFlowMagic, 4) != 0) throw FormatError("bad magic in flow file");
  const std::uint32_t width = get_u32(bytes, 4);
  const std::uint32_t height = get_u32(bytes, 8);
  if (width == 0 || height == 0) throw FormatError("flow file declares an empty grid");
  const std::uint64_t expected = 12 + static_cast<std::uint64_t>(width) * height * 8;
  if (bytes.size() != expected) {
    throw FormatError("flow payload size mismatch: header declares " + std::to_string(width) +
                      "x" + std::to_string(height));
  }
  FlowField flow(static_cast<int>(height), static_cast<int>(width));
  for (std::size_t i = 0; i < flow.size(); ++i) {
    flow.u[i] = get_f32(bytes, 12 + i * 8);
    flow.v[i] = get_f32(bytes, 16 + i * 8);
  }
  flow.validate();
  return flow;
}

void write_flow(const FlowField& flow, const std::filesystem::path& path) {
  write_file(path, encode_flow(flow));
}

FlowField read_flow(const std::filesystem::path& path) {
  try {
    return decode_flow(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Bytes encode_features(const FeatureMap& features) {
  features.validate();
  Bytes out;
  out.reserve(16 + features.data.size() * 4);
  out.insert(out.end(), kFeatureMagic, kFeatureMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(features.channels));
  put_u32(out, static_cast<std::uint32_t>(features.height));
  put_u32(out, static_cast<std::uint32_t>(features.width));
  for (float value : features.data) put_f32(out, value);
  return out;
}

FeatureMap decode_features(const Bytes& bytes) {
  if (bytes.size() < 16) throw FormatError("feature file shorter than its header");
  if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError("bad magic in feature file");
  }
  const std::uint32_t channels = get_u32(bytes, 4);
  const std::uint32_t height = get_u32(bytes, 8);
  const std::uint32_t width = get_u32(bytes, 12);
  if (channels == 0 || height == 0 || width == 0) {
    throw FormatError("feature file declares an empty shape");
  }
  const std::uint64_t count = static_cast<std::uint64_t>(channels) * height * width;
  if (bytes.size() != 16 + count * 4) {
    throw FormatError("feature payload size mismatch: expected " + std::to_string(count * 4) +
                      " bytes, found " + std::to_string(bytes.size() - 16));
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = get_f32(bytes, 16 + i * 4);
  return FeatureMap(static_cast<int>(channels), static_cast<int>(height),
                    static_cast<int>(width), std::move(data));
}

void write_features(const FeatureMap& features, const std::filesystem::path& path) {
  write_file(path, encode_features(features));
}

FeatureMap read_features(const std::filesystem::path& path) {
  try {
    return decode_features(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string frame_stem(std::int64_t index) {
  std::ostringstream s;
  s << std::setw(6) << std::setfill('0') << index;
  return s.str();
}

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::string& extension) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace mcma::io
