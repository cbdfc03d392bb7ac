#include <bit>
#include <cstring>
#include <random>

#include "doctest.h"
#include "mcma/io.hpp"
#include "support.hpp"

using namespace mcma;
using io::Bytes;

namespace {

Bytes bytes_of(const std::string& s) { return Bytes(s.begin(), s.end()); }

Bytes le32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
}

Bytes lef32(float f) { return le32(std::bit_cast<std::uint32_t>(f)); }

Bytes cat(std::initializer_list<Bytes> parts) {
  Bytes out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

TEST_CASE("2x2 P5 maps bytes directly") {
  Bytes file = bytes_of("P5\n2 2\n255\n");
  for (std::uint8_t b : {0, 64, 128, 255}) file.push_back(b);
  const Frame f = io::decode_frame(file);
  CHECK(f.width == 2);
  CHECK(f.height == 2);
  CHECK(f.channels == 1);
  CHECK(f.data == std::vector<std::uint8_t>{0, 64, 128, 255});
}

TEST_CASE("PPM header tolerates comments and whitespace") {
  Bytes file = bytes_of("P6 # rgb\n2\t2 # size\n255\n");
  file.resize(file.size() + 12, 7);
  const Frame f = io::decode_frame(file);
  CHECK(f.channels == 3);
  CHECK(f.at(1, 1, 2) == 7);
}

TEST_CASE("640x512 P6 round trip") {
  std::mt19937_64 rng(1);
  const Frame f = testing::random_frame(rng, 640, 512, 3);
  const Bytes encoded = io::encode_frame(f);
  const Frame back = io::decode_frame(encoded);
  CHECK(back.width == 640);
  CHECK(back.height == 512);
  CHECK(back.channels == 3);
  CHECK(back.same_pixels(f));

  const auto dir = testing::temp_dir("io_frame");
  io::write_frame(f, dir / "a.ppm");
  CHECK(io::read_frame(dir / "a.ppm", 4).same_pixels(f));
  CHECK(io::read_frame(dir / "a.ppm", 4).index == 4);
}

TEST_CASE("malformed images are rejected") {
  CHECK_THROWS_AS(io::decode_frame(bytes_of("P6 0 0 255\n")), FormatError);
  CHECK_THROWS_AS(io::decode_frame(bytes_of("P3\n2 2\n255\n")), FormatError);
  CHECK_THROWS_AS(io::decode_frame(bytes_of("P5\n2 2\n")), FormatError);
  Bytes wide = bytes_of("P5\n2 2\n65535\n");
  wide.resize(wide.size() + 8);
  CHECK_THROWS_AS(io::decode_frame(wide), FormatError);
  Bytes short_payload = bytes_of("P5\n2 2\n255\n");
  short_payload.resize(short_payload.size() + 3);
  CHECK_THROWS_AS(io::decode_frame(short_payload), FormatError);
  CHECK_THROWS(io::read_frame("/nonexistent/frame.ppm"));
}

TEST_CASE("masks are stored as PGM label values") {
  SegmentationMask m(2, 3);
  m.at(2, 1) = 5;
  const auto dir = testing::temp_dir("io_mask");
  io::write_mask(m, dir / "m.pgm");
  CHECK(io::read_mask(dir / "m.pgm") == m);
}

TEST_CASE("MCFL bytes for a 1x1 field") {
  FlowField flow(1, 1, 1.5f, -2.0f);
  const Bytes expected = cat({bytes_of("MCFL"), le32(1), le32(1), lef32(1.5f), lef32(-2.0f)});
  const Bytes encoded = io::encode_flow(flow);
  CHECK(encoded == expected);
  CHECK(encoded.size() == 20);  // 12-byte header + one (u, v) record
  CHECK(io::decode_flow(encoded) == flow);
}

TEST_CASE("MCFL size and error handling") {
  CHECK(io::encode_flow(FlowField(4, 4)).size() == 12 + 4 * 4 * 8);

  FlowField flow(2, 3);
  flow.u_at(2, 0) = 1.0f;  // record order is row-major: x fastest
  const Bytes enc = io::encode_flow(flow);
  CHECK(std::memcmp(enc.data() + 12 + 2 * 8, lef32(1.0f).data(), 4) == 0);
  CHECK(enc[4] == 3);  // width first
  CHECK(enc[8] == 2);

  Bytes bad = enc;
  std::memcpy(bad.data(), "XXXX", 4);
  CHECK_THROWS_AS(io::decode_flow(bad), FormatError);
  Bytes truncated(enc.begin(), enc.end() - 1);
  CHECK_THROWS_AS(io::decode_flow(truncated), FormatError);
  Bytes padded = enc;
  padded.push_back(0);
  CHECK_THROWS_AS(io::decode_flow(padded), FormatError);
}

TEST_CASE("MCFE bytes and sizes") {
  const FeatureMap one(1, 1, 1, std::vector<float>{0.5f});
  const Bytes enc = io::encode_features(one);
  CHECK(enc == cat({bytes_of("MCFE"), le32(1), le32(1), le32(1), lef32(0.5f)}));
  CHECK(io::decode_features(enc) == one);

  std::vector<float> values(12);
  for (int i = 0; i < 12; ++i) values[i] = 0.25f * i;
  const FeatureMap f(3, 2, 2, values);
  const Bytes e2 = io::encode_features(f);
  CHECK(e2.size() == 16 + 48);
  CHECK(Bytes(e2.begin() + 4, e2.begin() + 16) == cat({le32(3), le32(2), le32(2)}));
  CHECK(std::memcmp(e2.data() + 16 + 4 * 4, lef32(1.0f).data(), 4) == 0);  // channel-major

  Bytes truncated(e2.begin(), e2.end() - 4);
  CHECK_THROWS_AS(io::decode_features(truncated), FormatError);
  Bytes bad = e2;
  bad[0] = 'X';
  CHECK_THROWS_AS(io::decode_features(bad), FormatError);
  Bytes nan = e2;
  const Bytes nan_bits = lef32(std::nanf(""));
  std::copy(nan_bits.begin(), nan_bits.end(), nan.begin() + 20);
  CHECK_THROWS_AS(io::decode_features(nan), FormatError);
}

TEST_CASE("serialization round trips bit-exactly") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> dim(1, 9);
  const auto dir = testing::temp_dir("io_roundtrip");
  for (int trial = 0; trial < 200; ++trial) {
    const FlowField flow = testing::random_flow(rng, dim(rng), dim(rng), 1e3f);
    CHECK(io::decode_flow(io::encode_flow(flow)) == flow);
    const FeatureMap f = testing::random_features(rng, dim(rng), dim(rng), dim(rng), -1e6f, 1e6f);
    CHECK(io::decode_features(io::encode_features(f)) == f);
  }
  const FlowField flow = testing::random_flow(rng, 5, 7, 3.0f);
  io::write_flow(flow, dir / "sub" / "f.mcfl");
  CHECK(io::read_flow(dir / "sub" / "f.mcfl") == flow);
  const FeatureMap f = testing::random_features(rng, 2, 3, 4);
  io::write_features(f, dir / "f.mcfe");
  CHECK(io::read_features(dir / "f.mcfe") == f);
}

TEST_CASE("directory helpers") {
  CHECK(io::frame_stem(42) == "000042");
  CHECK(io::frame_stem(1234567) == "1234567");
  const auto dir = testing::temp_dir("io_list");
  for (const char* name : {"000002.ppm", "000001.ppm", "notes.txt"}) {
    io::write_file(dir / name, Bytes{1});
  }
  const auto files = io::list_files(dir, ".ppm");
  REQUIRE(files.size() == 2);
  CHECK(files[0].filename() == "000001.ppm");
}
