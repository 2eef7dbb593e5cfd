#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epiline/geometry.hpp"
#include "epiline/mask_io.hpp"
#include "epiline/parallel.hpp"
#include "epiline/random.hpp"

namespace epiline {

/// A candidate image line defined by two points on the image border.
struct BorderLine {
  Eigen::Vector2d p;
  Eigen::Vector2d q;
  HomLine2 line;
  int id = 0;

  Segment segment() const { return {p, q}; }
};

struct PixelCoord {
  int x = 0;
  int y = 0;

  auto operator<=>(const PixelCoord&) const = default;
};

/// Per-frame incidence of foreground with one line, packed 64 frames per word.
class MotionBarcode {
 public:
  MotionBarcode() = default;
  explicit MotionBarcode(int length);
  /// From a string of '0'/'1' characters.
  static MotionBarcode from_string(const std::string& bits);

  int length() const { return length_; }
  int ones_count() const { return ones_count_; }
  bool get(int frame) const { return (words_[frame >> 6] >> (frame & 63)) & 1ULL; }
  void set(int frame);
  std::span<const std::uint64_t> words() const { return words_; }
  std::string to_string() const;

  /// Builds from packed words; bits past `length` must be zero.
  static MotionBarcode from_words(std::vector<std::uint64_t> words, int length);

  bool operator==(const MotionBarcode&) const = default;

 private:
  std::vector<std::uint64_t> words_;
  int length_ = 0;
  int ones_count_ = 0;
};

/// `count` lines whose endpoints are uniform in arc length along the image border.
std::vector<BorderLine> sample_border_lines(const ImageRect& rect, int count, Rng& rng);

/// Border point at arc-length position s in [0, 2(W+H)), clockwise from the top-left corner.
Eigen::Vector2d border_point(const ImageRect& rect, double s);

/// Pixels incident to the segment, sorted by (y, x).
///
/// Thickness 1 gives the supercover under half-open pixel cells [x, x+1) x [y, y+1)
/// (the last row and column are closed on the far side). Larger thickness adds every
/// pixel whose center lies within thickness / 2 of the segment.
std::vector<PixelCoord> raster_segment(const Segment& segment, const ImageRect& rect, double thickness = 1.0);
std::vector<PixelCoord> raster_line_pixels(const BorderLine& line, const ImageRect& rect, double thickness = 1.0);

/// Serial reference: scans every listed pixel of every frame.
MotionBarcode compute_barcode(const SilhouetteVideo& video, std::span<const PixelCoord> pixels);

/// Temporal bitset of every pixel (the video transposed to pixel-major order).
class PixelHistory {
 public:
  explicit PixelHistory(const SilhouetteVideo& video);

  int width() const { return width_; }
  int height() const { return height_; }
  int num_frames() const { return num_frames_; }
  std::span<const std::uint64_t> at(int x, int y) const {
    return {words_.data() + (static_cast<std::size_t>(y) * width_ + x) * words_per_pixel_, words_per_pixel_};
  }

 private:
  int width_, height_, num_frames_;
  std::size_t words_per_pixel_;
  std::vector<std::uint64_t> words_;
};

/// Barcode of one raster by OR-ing pixel histories.
MotionBarcode compute_barcode(const PixelHistory& history, std::span<const PixelCoord> pixels);

/// Barcodes for many rasters. Exec::serial runs the frame-scanning reference per line;
/// Exec::parallel builds a PixelHistory and distributes lines over OpenMP threads.
std::vector<MotionBarcode> compute_barcodes(const SilhouetteVideo& video,
                                            const std::vector<std::vector<PixelCoord>>& rasters,
                                            Exec exec = Exec::parallel);

bool is_informative(const MotionBarcode& b, double q_min, double q_max);

/// Normalized cross correlation of two binary barcodes, via
/// (N n11 - n1 n2) / sqrt(n1 (N - n1) n2 (N - n2)).
double ncc(const MotionBarcode& b, const MotionBarcode& b_prime);

/// sqrt(n1 (N - n1)) for one barcode; ncc = (N n11 - n1 n2) / (spread(b) * spread(b')).
inline double barcode_spread(double n, double n1) { return std::sqrt(n1 * (n - n1)); }

/// The single closed form behind every ncc evaluation, so all callers agree bit for bit.
inline double ncc_from_counts(double n, double n1, double n2, double spread1, double spread2, std::int64_t n11) {
  const double r = (n * static_cast<double>(n11) - n1 * n2) / (spread1 * spread2);
  return r < -1.0 ? -1.0 : (r > 1.0 ? 1.0 : r);
}

/// Debug dump: one "id bits" line per barcode.
void write_barcodes(std::ostream& out, std::span<const int> ids, std::span<const MotionBarcode> barcodes);
std::vector<std::pair<int, MotionBarcode>> read_barcodes(std::istream& in);

}  // namespace epiline
