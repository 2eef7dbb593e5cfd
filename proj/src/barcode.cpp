#include "epiline/barcode.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "epiline/error.hpp"

namespace epiline {

namespace {

double snap_integer(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

MotionBarcode::MotionBarcode(int length) : words_((static_cast<std::size_t>(length) + 63) / 64, 0), length_(length) {}

MotionBarcode MotionBarcode::from_string(const std::string& bits) {
  MotionBarcode b(static_cast<int>(bits.size()));
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == '1')
      b.set(static_cast<int>(i));
    else if (bits[i] != '0')
      throw FormatError("barcode string may contain only 0 and 1");
  }
  return b;
}

MotionBarcode MotionBarcode::from_words(std::vector<std::uint64_t> words, int length) {
  MotionBarcode b;
  b.length_ = length;
  b.words_ = std::move(words);
  if (length < 0 || b.words_.size() != (static_cast<std::size_t>(length) + 63) / 64)
    throw InvariantViolationError("barcode word count does not match length " + std::to_string(length));
  if (length % 64 && (b.words_.back() & ~((1ULL << (length % 64)) - 1)))
    throw InvariantViolationError("barcode has bits set past length " + std::to_string(length));
  for (auto w : b.words_) b.ones_count_ += std::popcount(w);
  return b;
}

void MotionBarcode::set(int frame) {
  auto& w = words_[frame >> 6];
  const std::uint64_t mask = 1ULL << (frame & 63);
  if (!(w & mask)) {
    w |= mask;
    ++ones_count_;
  }
}

std::string MotionBarcode::to_string() const {
  std::string s(length_, '0');
  for (int i = 0; i < length_; ++i)
    if (get(i)) s[i] = '1';
  return s;
}

Eigen::Vector2d border_point(const ImageRect& rect, double s) {
  const double w = rect.width, h = rect.height;
  if (s < w) return {s, 0.0};
  s -= w;
  if (s < h) return {w, s};
  s -= h;
  if (s < w) return {w - s, h};
  s -= w;
  return {0.0, h - s};
}

std::vector<BorderLine> sample_border_lines(const ImageRect& rect, int count, Rng& rng) {
  std::vector<BorderLine> lines;
  if (count <= 0) return lines;
  lines.reserve(count);
  const double perimeter = 2.0 * (rect.width + rect.height);
  while (static_cast<int>(lines.size()) < count) {
    const Eigen::Vector2d p = border_point(rect, perimeter * uniform01(rng));
    const Eigen::Vector2d q = border_point(rect, perimeter * uniform01(rng));
    if ((p - q).norm() < 1.0) continue;
    BorderLine l;
    l.p = p;
    l.q = q;
    l.line = line_through(HomPoint2::from_pixel(p), HomPoint2::from_pixel(q)).normalized();
    l.id = static_cast<int>(lines.size());
    lines.push_back(l);
  }
  return lines;
}

std::vector<PixelCoord> raster_segment(const Segment& segment, const ImageRect& rect, double thickness) {
  std::vector<PixelCoord> pixels;
  const int w = rect.width, h = rect.height;
  const auto col_of = [&](double x) { return std::clamp(static_cast<int>(std::floor(x)), 0, w - 1); };
  const auto row_of = [&](double y) { return std::clamp(static_cast<int>(std::floor(y)), 0, h - 1); };
  const auto inside = [&](const Eigen::Vector2d& p) {
    return p.x() >= -1e-9 && p.x() <= w + 1e-9 && p.y() >= -1e-9 && p.y() <= h + 1e-9;
  };

  Eigen::Vector2d a(snap_integer(segment.p.x()), snap_integer(segment.p.y()));
  Eigen::Vector2d b(snap_integer(segment.q.x()), snap_integer(segment.q.y()));
  if (!inside(a) || !inside(b)) {
    // Clip to the rectangle first; a segment with no part inside yields nothing.
    const auto clipped = clip_line_to_rect(line_through(HomPoint2::from_pixel(a), HomPoint2::from_pixel(b)), rect);
    if (!clipped) return pixels;
    const Eigen::Vector2d d = b - a;
    const double len2 = d.squaredNorm();
    double t0 = std::clamp((clipped->p - a).dot(d) / len2, 0.0, 1.0);
    double t1 = std::clamp((clipped->q - a).dot(d) / len2, 0.0, 1.0);
    if (t0 > t1) std::swap(t0, t1);
    if (t1 - t0 <= 0.0) return pixels;
    const Eigen::Vector2d na = a + t0 * d, nb = a + t1 * d;
    a = {snap_integer(na.x()), snap_integer(na.y())};
    b = {snap_integer(nb.x()), snap_integer(nb.y())};
  }
  if (a.x() > b.x()) std::swap(a, b);

  if (b.x() - a.x() < 1e-12) {
    const int c = col_of(a.x());
    for (int r = row_of(std::min(a.y(), b.y())); r <= row_of(std::max(a.y(), b.y())); ++r) pixels.push_back({c, r});
  } else {
    const double slope = (b.y() - a.y()) / (b.x() - a.x());
    const auto y_at = [&](double x) { return snap_integer(a.y() + (x - a.x()) * slope); };
    for (int c = col_of(a.x()); c <= col_of(b.x()); ++c) {
      const double xa = std::max<double>(c, a.x());
      const double xb = std::min<double>(c + 1, b.x());
      // The point at x = c + 1 belongs to the next column unless this is the last one.
      const bool right_open = (c + 1 <= b.x()) && (c + 1 < w);
      const double ya = y_at(xa), yb = y_at(xb);
      const int r_lo = row_of(std::min(ya, yb));
      int r_hi = row_of(std::max(ya, yb));
      // Rising into an excluded integer y: the points actually present are just below it.
      if (right_open && slope > 0 && yb == std::floor(yb) && yb < h) r_hi = std::max(r_lo, row_of(yb) - 1);
      for (int r = r_lo; r <= r_hi; ++r) pixels.push_back({c, r});
    }
  }

  if (thickness > 1.0) {
    const double radius = 0.5 * thickness;
    const Eigen::Vector2d d = b - a;
    const double len2 = std::max(d.squaredNorm(), 1e-300);
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - radius)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - radius)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Eigen::Vector2d c(x + 0.5, y + 0.5);
        const double t = std::clamp((c - a).dot(d) / len2, 0.0, 1.0);
        if ((a + t * d - c).norm() <= radius) pixels.push_back({x, y});
      }
  }

  std::sort(pixels.begin(), pixels.end(), [](const PixelCoord& l, const PixelCoord& r) {
    return l.y != r.y ? l.y < r.y : l.x < r.x;
  });
  pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());
  return pixels;
}

std::vector<PixelCoord> raster_line_pixels(const BorderLine& line, const ImageRect& rect, double thickness) {
  if (thickness < 1.0) throw DomainError("raster thickness must be at least 1 pixel");
  const auto clipped = clip_line_to_rect(line.line, rect);
  if (!clipped) return {};
  return raster_segment(line.segment(), rect, thickness);
}

MotionBarcode compute_barcode(const SilhouetteVideo& video, std::span<const PixelCoord> pixels) {
  for (const auto& px : pixels)
    if (px.x < 0 || px.y < 0 || px.x >= video.width() || px.y >= video.height())
      throw DomainError("barcode pixel (" + std::to_string(px.x) + "," + std::to_string(px.y) +
                        ") outside the video");
  MotionBarcode b(video.num_frames());
  for (int f = 0; f < video.num_frames(); ++f)
    for (const auto& px : pixels)
      if (video.get(f, px.x, px.y)) {
        b.set(f);
        break;
      }
  return b;
}

PixelHistory::PixelHistory(const SilhouetteVideo& video)
    : width_(video.width()),
      height_(video.height()),
      num_frames_(video.num_frames()),
      words_per_pixel_((static_cast<std::size_t>(video.num_frames()) + 63) / 64),
      words_(static_cast<std::size_t>(video.width()) * video.height() * words_per_pixel_, 0) {
  // Rows are independent, so the transpose parallelizes over y without write conflicts.
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height_; ++y)
    for (int f = 0; f < num_frames_; ++f) {
      const auto row = video.row(f, y);
      const std::uint64_t mask = 1ULL << (f & 63);
      const std::size_t word = static_cast<std::size_t>(f) >> 6;
      for (std::size_t w = 0; w < row.size(); ++w) {
        std::uint64_t bits = row[w];
        while (bits) {
          const int x = static_cast<int>(w * 64) + std::countr_zero(bits);
          words_[(static_cast<std::size_t>(y) * width_ + x) * words_per_pixel_ + word] |= mask;
          bits &= bits - 1;
        }
      }
    }
}

MotionBarcode compute_barcode(const PixelHistory& history, std::span<const PixelCoord> pixels) {
  std::vector<std::uint64_t> acc((static_cast<std::size_t>(history.num_frames()) + 63) / 64, 0);
  for (const auto& px : pixels) {
    if (px.x < 0 || px.y < 0 || px.x >= history.width() || px.y >= history.height())
      throw DomainError("barcode pixel (" + std::to_string(px.x) + "," + std::to_string(px.y) +
                        ") outside the video");
    const auto bits = history.at(px.x, px.y);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] |= bits[i];
  }
  return MotionBarcode::from_words(std::move(acc), history.num_frames());
}

std::vector<MotionBarcode> compute_barcodes(const SilhouetteVideo& video,
                                            const std::vector<std::vector<PixelCoord>>& rasters, Exec exec) {
  std::vector<MotionBarcode> out(rasters.size());
  const PixelHistory history(video);
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < rasters.size(); ++i) out[i] = compute_barcode(history, rasters[i]);
    return out;
  }
  const auto n = static_cast<std::ptrdiff_t>(rasters.size());
  std::string error;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = compute_barcode(history, rasters[i]);
    } catch (const DomainError& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw DomainError(error);
  return out;
}

bool is_informative(const MotionBarcode& b, double q_min, double q_max) {
  if (b.length() == 0) return false;
  const double fraction = static_cast<double>(b.ones_count()) / b.length();
  return fraction >= q_min && fraction <= q_max;
}

double ncc(const MotionBarcode& b, const MotionBarcode& b_prime) {
  if (b.length() != b_prime.length()) throw DomainError("ncc: barcodes differ in length");
  const double n = b.length();
  const double n1 = b.ones_count(), n2 = b_prime.ones_count();
  if (n1 == 0 || n1 == n || n2 == 0 || n2 == n) throw UndefinedCorrelationError("ncc: constant barcode");
  std::int64_t n11 = 0;
  const auto wa = b.words(), wb = b_prime.words();
  for (std::size_t i = 0; i < wa.size(); ++i) n11 += std::popcount(wa[i] & wb[i]);
  return ncc_from_counts(n, n1, n2, barcode_spread(n, n1), barcode_spread(n, n2), n11);
}

void write_barcodes(std::ostream& out, std::span<const int> ids, std::span<const MotionBarcode> barcodes) {
  if (ids.size() != barcodes.size()) throw DomainError("write_barcodes: id and barcode counts differ");
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ' ' << barcodes[i].to_string() << '\n';
}

std::vector<std::pair<int, MotionBarcode>> read_barcodes(std::istream& in) {
  std::vector<std::pair<int, MotionBarcode>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    int id = 0;
    std::string bits;
    if (!(fields >> id >> bits)) throw FormatError("barcode dump line " + std::to_string(line_no) + " malformed");
    out.emplace_back(id, MotionBarcode::from_string(bits));
  }
  return out;
}

}  // namespace epiline
