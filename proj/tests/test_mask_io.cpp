#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "epiline/error.hpp"
#include "epiline/mask_io.hpp"
#include "support.hpp"

using namespace epiline;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("epiline_mask_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_raw_pbm(const fs::path& path, int w, int h, bool ones) {
  std::ofstream out(path, std::ios::binary);
  out << "P4\n# test frame\n" << w << " " << h << "\n";
  const int row_bytes = (w + 7) / 8;
  for (int y = 0; y < h; ++y)
    for (int b = 0; b < row_bytes; ++b) {
      const int bits_here = std::min(8, w - 8 * b);
      const unsigned char mask = static_cast<unsigned char>(0xFF << (8 - bits_here));
      out.put(static_cast<char>(ones ? mask : 0));
    }
}

}  // namespace

TEST_CASE("three all-zero 4x2 frames load as an empty video") {
  const auto dir = scratch_dir("zeros");
  for (int i = 0; i < 3; ++i) write_raw_pbm(dir / format_frame_path("f%02d.pbm", i), 4, 2, false);
  const auto v = load_mask_sequence((dir / "f%02d.pbm").string(), {0, 3});
  CHECK(v == SilhouetteVideo(4, 2, 3));
}

TEST_CASE("one all-ones 2x2 frame") {
  const auto dir = scratch_dir("ones");
  write_raw_pbm(dir / "m7.pbm", 2, 2, true);
  const auto v = load_mask_sequence((dir / "m%d.pbm").string(), {7, 8});
  REQUIRE(v.num_frames() == 1);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) CHECK(v.get(0, x, y));
  CHECK(v.count_foreground(0) == 4);
}

TEST_CASE("dimension change is a format error naming frame 1") {
  const auto dir = scratch_dir("mismatch");
  write_raw_pbm(dir / "f0.pbm", 4, 2, false);
  write_raw_pbm(dir / "f1.pbm", 2, 4, false);
  try {
    load_mask_sequence((dir / "f%d.pbm").string(), {0, 2});
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
  }
}

TEST_CASE("missing frame is an I/O error naming its index") {
  const auto dir = scratch_dir("missing");
  write_raw_pbm(dir / "f0.pbm", 4, 2, false);
  try {
    load_mask_sequence((dir / "f%d.pbm").string(), {0, 3});
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
  }
}

TEST_CASE("PBM sequence round trip through save_mask_sequence") {
  Rng rng(3);
  const auto v = testing::random_video(13, 7, 4, 0.4, rng);
  const auto dir = scratch_dir("pbm_roundtrip");
  save_mask_sequence(v, (dir / "c%03d.pbm").string(), 10);
  CHECK(load_mask_sequence((dir / "c%03d.pbm").string(), {10, 14}) == v);
}

TEST_CASE("packed round trip is the identity on random videos") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 1 + static_cast<int>(uniform_index(rng, 130));
    const int h = 1 + static_cast<int>(uniform_index(rng, 20));
    const int n = 1 + static_cast<int>(uniform_index(rng, 6));
    const auto v = testing::random_video(w, h, n, uniform01(rng), rng);
    CHECK(decode_packed(encode_packed(v)) == v);
  }
}

TEST_CASE("800-frame 640x480 random video round-trips through a file") {
  Rng rng(5);
  SilhouetteVideo v(640, 480, 800);
  for (int f = 0; f < 800; ++f)
    for (int y = 0; y < 480; ++y)
      for (auto& w : v.row(f, y)) w = rng();
  // 640 is a multiple of 64, so every word is fully inside the image.
  const auto dir = scratch_dir("big");
  save_packed(v, dir / "v.pack");
  CHECK(load_packed(dir / "v.pack") == v);
}

TEST_CASE("packed header is little-endian magic, width, height, frames") {
  const auto bytes = encode_packed(SilhouetteVideo(9, 2, 3));
  REQUIRE(bytes.size() == 16 + 3 * 2 * 2);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "EPMV");
  CHECK(bytes[4] == 9);
  CHECK(bytes[8] == 2);
  CHECK(bytes[12] == 3);
}

TEST_CASE("corrupt magic and truncation are format errors") {
  Rng rng(2);
  auto bytes = encode_packed(testing::random_video(10, 10, 3, 0.5, rng));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_packed(bad), FormatError);
  bytes.resize(bytes.size() - 5);
  try {
    decode_packed(bytes);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_packed(std::vector<std::uint8_t>(7, 0)), FormatError);
}

TEST_CASE("heat map of constant videos") {
  SilhouetteVideo zeros(5, 4, 6);
  for (auto exec : {Exec::serial, Exec::parallel}) {
    const auto h = compute_heat_map(zeros, exec);
    CHECK(std::all_of(h.counts.begin(), h.counts.end(), [](auto c) { return c == 0; }));
  }
  SilhouetteVideo ones(5, 4, 6);
  for (int f = 0; f < 6; ++f)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) ones.set(f, x, y, true);
  for (auto exec : {Exec::serial, Exec::parallel}) {
    const auto h = compute_heat_map(ones, exec);
    CHECK(std::all_of(h.counts.begin(), h.counts.end(), [](auto c) { return c == 6; }));
  }
}

TEST_CASE("heat map counts a pixel set in one frame once") {
  SilhouetteVideo v(3, 3, 2);
  v.set(0, 1, 2, true);
  const auto h = compute_heat_map(v);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) CHECK(h.at(x, y) == (x == 1 && y == 2 ? 1u : 0u));
}

TEST_CASE("heat map total equals per-frame foreground accumulation") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto v = testing::random_video(70 + trial, 9, 12, uniform01(rng), rng);
    std::uint64_t expected = 0;
    for (int f = 0; f < v.num_frames(); ++f) expected += v.count_foreground(f);
    for (auto exec : {Exec::serial, Exec::parallel}) {
      const auto h = compute_heat_map(v, exec);
      std::uint64_t total = 0;
      for (auto c : h.counts) {
        total += c;
        CHECK(c <= static_cast<std::uint32_t>(v.num_frames()));
      }
      CHECK(total == expected);
    }
    std::vector<std::uint32_t> oracle(static_cast<std::size_t>(v.width()) * v.height(), 0);
    for (int f = 0; f < v.num_frames(); ++f)
      for (int y = 0; y < v.height(); ++y)
        for (int x = 0; x < v.width(); ++x) oracle[static_cast<std::size_t>(y) * v.width() + x] += v.get(f, x, y);
    CHECK(compute_heat_map(v, Exec::serial).counts == oracle);
    CHECK(compute_heat_map(v, Exec::parallel).counts == oracle);
  }
}

TEST_CASE("invalid video dimensions are rejected") {
  CHECK_THROWS_AS(SilhouetteVideo(0, 4, 1), FormatError);
  CHECK_THROWS_AS(SilhouetteVideo(4, 4, 0), FormatError);
}
