// Binary file formats: PPM/PGM images, "MCFL" flow fields and "MCFE"
// feature maps. Multi-byte fields are little-endian regardless of host.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcma/core.hpp"

namespace mcma::io {

using Bytes = std::vector<std::uint8_t>;

/// Reads a binary P5 (gray) or P6 (RGB) file with maxval 255.
Frame read_frame(const std::filesystem::path& path, std::int64_t index = 0);
Frame decode_frame(const Bytes& bytes, std::int64_t index = 0);
void write_frame(const Frame& frame, const std::filesystem::path& path);
Bytes encode_frame(const Frame& frame);

/// Masks are stored as PGM with the class index as gray value.
SegmentationMask read_mask(const std::filesystem::path& path);
void write_mask(const SegmentationMask& mask, const std::filesystem::path& path);

Bytes encode_flow(const FlowField& flow);
FlowField decode_flow(const Bytes& bytes);
void write_flow(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flow(const std::filesystem::path& path);

Bytes encode_features(const FeatureMap& features);
FeatureMap decode_features(const Bytes& bytes);
void write_features(const FeatureMap& features, const std::filesystem::path& path);
FeatureMap read_features(const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);

/// "000042" style zero-padded name used by every per-frame directory.
std::string frame_stem(std::int64_t index);

/// Sorted list of files in `dir` with the given extension (".ppm" etc).
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::string& extension);

}  // namespace mcma::io
