#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "epiline/parallel.hpp"

namespace epiline {

/// A synchronized sequence of binary foreground masks (1 = moving object).
///
/// Pixel (x, y): x is the column in [0, width), y the row in [0, height), origin
/// top-left. Bits are stored row-padded to 64-bit words, one plane per frame.
class SilhouetteVideo {
 public:
  SilhouetteVideo() = default;
  /// All-zero video. Throws FormatError unless width, height, num_frames are positive.
  SilhouetteVideo(int width, int height, int num_frames);

  int width() const { return width_; }
  int height() const { return height_; }
  int num_frames() const { return num_frames_; }
  std::size_t words_per_row() const { return words_per_row_; }

  bool get(int frame, int x, int y) const {
    return (bits_[word_index(frame, x, y)] >> (x & 63)) & 1ULL;
  }
  void set(int frame, int x, int y, bool value) {
    auto& w = bits_[word_index(frame, x, y)];
    const std::uint64_t mask = 1ULL << (x & 63);
    w = value ? (w | mask) : (w & ~mask);
  }

  /// Packed words of one row; bit (x & 63) of word (x >> 6) is pixel x.
  std::span<const std::uint64_t> row(int frame, int y) const {
    return {bits_.data() + row_offset(frame, y), words_per_row_};
  }
  std::span<std::uint64_t> row(int frame, int y) {
    return {bits_.data() + row_offset(frame, y), words_per_row_};
  }

  std::size_t count_foreground(int frame) const;

  bool operator==(const SilhouetteVideo& other) const = default;

 private:
  std::size_t row_offset(int frame, int y) const {
    return (static_cast<std::size_t>(frame) * height_ + y) * words_per_row_;
  }
  std::size_t word_index(int frame, int x, int y) const { return row_offset(frame, y) + (x >> 6); }

  int width_ = 0;
  int height_ = 0;
  int num_frames_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// counts(x, y) = number of frames in which pixel (x, y) is foreground.
struct HeatMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;  // row-major

  std::uint32_t at(int x, int y) const { return counts[static_cast<std::size_t>(y) * width + x]; }
};

/// Inclusive-exclusive frame index range [first, last).
struct FrameRange {
  int first = 0;
  int last = 0;
};

/// Expands a printf-style template containing one integer conversion (e.g. "cam0_%04d.pbm").
std::string format_frame_path(const std::string& pattern, int index);

/// Reads one PBM P4 frame. Returns (width, height, row-major 0/1 bytes).
struct PbmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};
PbmImage read_pbm(const std::filesystem::path& path);
void write_pbm(const std::filesystem::path& path, const SilhouetteVideo& video, int frame);

/// Loads PBM P4 frames pattern(first) .. pattern(last - 1).
SilhouetteVideo load_mask_sequence(const std::string& path_pattern, FrameRange range);
/// Writes every frame as PBM P4 using the same template convention.
void save_mask_sequence(const SilhouetteVideo& video, const std::string& path_pattern,
                        int first_index = 0);

/// Packed container: "EPMV" magic, little-endian u32 width, height, num_frames,
/// then each frame's rows MSB-first, padded to whole bytes (the PBM P4 row layout).
void save_packed(const SilhouetteVideo& video, const std::filesystem::path& path);
SilhouetteVideo load_packed(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_packed(const SilhouetteVideo& video);
SilhouetteVideo decode_packed(std::span<const std::uint8_t> bytes);

HeatMap compute_heat_map(const SilhouetteVideo& video, Exec exec = Exec::parallel);

}  // namespace epiline
