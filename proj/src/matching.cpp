#include "epiline/matching.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "epiline/error.hpp"

namespace epiline {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBandWindowPx = 10.0;  // initial half-width searched around a Hough peak

// Ranking order shared by rows and columns: larger value first, then lower index.
bool ranks_before(double va, int ia, double vb, int ib) { return va != vb ? va > vb : ia < ib; }

std::vector<char> topk_mask(int count, int k, const auto& value_of) {
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  const int keep = std::min(k, count);
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](int l, int r) { return ranks_before(value_of(l), l, value_of(r), r); });
  std::vector<char> mask(count, 0);
  for (int i = 0; i < keep; ++i) mask[order[i]] = 1;
  return mask;
}

// (theta in [0, pi), rho) of a line, rho measured from `center`.
std::pair<double, double> rho_theta(const HomLine2& l, const Eigen::Vector2d& center) {
  const Eigen::Vector3d n = l.normalized().h;
  double theta = std::atan2(n.y(), n.x());
  double rho = -(n.z() + n.x() * center.x() + n.y() * center.y());
  if (theta < 0) {
    theta += kPi;
    rho = -rho;
  }
  if (theta >= kPi) {
    theta -= kPi;
    rho = -rho;
  }
  return {theta, rho};
}

/// Mean heat along the line's raster between its first and last hot pixel, i.e. over the
/// stretch of the line that carries traffic rather than the whole image chord.
double mean_heat_along(const HomLine2& line, const HeatMap& heat, std::uint32_t hot_level) {
  const ImageRect rect{heat.width, heat.height};
  const auto seg = clip_line_to_rect(line, rect);
  if (!seg) return 0.0;
  const auto pixels = raster_segment(*seg, rect);
  const Eigen::Vector2d dir = (seg->q - seg->p).normalized();
  const auto along = [&](const PixelCoord& px) { return (Eigen::Vector2d(px.x + 0.5, px.y + 0.5) - seg->p).dot(dir); };
  double t0 = INFINITY, t1 = -INFINITY;
  for (const auto& px : pixels)
    if (heat.at(px.x, px.y) >= hot_level) {
      t0 = std::min(t0, along(px));
      t1 = std::max(t1, along(px));
    }
  double sum = 0.0;
  int n = 0;
  for (const auto& px : pixels)
    if (const double t = along(px); t >= t0 && t <= t1) {
      sum += heat.at(px.x, px.y);
      ++n;
    }
  return n > 0 ? sum / n : 0.0;
}

/// Heat-weighted total-least-squares axis of the hot pixels near `line`, iterated so the
/// window shrinks onto the band around the line. Returns the axis and the band's RMS half-width.
std::pair<HomLine2, double> refine_band_axis(HomLine2 line, const std::vector<Eigen::Vector2d>& hot,
                                             const std::vector<char>& removed, const HeatMap& heat,
                                             double window) {
  double sigma = 0.0;
  for (int iter = 0; iter < 8; ++iter) {
    const Eigen::Vector3d n = line.normalized().h;
    double w_sum = 0.0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < hot.size(); ++i) {
      if (removed[i] || std::abs(n.x() * hot[i].x() + n.y() * hot[i].y() + n.z()) > window) continue;
      const double w = heat.at(static_cast<int>(hot[i].x()), static_cast<int>(hot[i].y()));
      w_sum += w;
      mean += w * hot[i];
    }
    if (w_sum <= 0.0) break;
    mean /= w_sum;
    for (std::size_t i = 0; i < hot.size(); ++i) {
      if (removed[i] || std::abs(n.x() * hot[i].x() + n.y() * hot[i].y() + n.z()) > window) continue;
      const double w = heat.at(static_cast<int>(hot[i].x()), static_cast<int>(hot[i].y()));
      const Eigen::Vector2d d = hot[i] - mean;
      scatter += w * d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter / w_sum);
    const Eigen::Vector2d normal = eig.eigenvectors().col(0);  // smallest spread
    // Keep the axis within the window's orientation; a window holding only a blob is not a band.
    if (std::abs(normal.dot(n.head<2>().normalized())) < std::cos(0.1)) break;
    line = HomLine2{Eigen::Vector3d(normal.x(), normal.y(), -normal.dot(mean))};
    sigma = std::sqrt(std::max(eig.eigenvalues()(0), 0.0));
    window = std::max(1.0, 2.5 * sigma);
  }
  return {line.normalized(), sigma};
}

}  // namespace

namespace {

// Barcodes validated and packed contiguously for the popcount kernels.
struct PackedBarcodes {
  std::size_t words = 0;
  std::vector<std::uint64_t> bits;
  std::vector<double> ones;
  std::vector<double> spread;

  const std::uint64_t* row(std::size_t i) const { return bits.data() + i * words; }
};

PackedBarcodes pack_barcodes(std::span<const MotionBarcode> barcodes, int length) {
  PackedBarcodes p;
  p.words = barcodes.empty() ? 0 : barcodes[0].words().size();
  p.bits.resize(p.words * barcodes.size());
  for (std::size_t i = 0; i < barcodes.size(); ++i) {
    const auto& b = barcodes[i];
    if (b.length() != length) throw DomainError("ncc: barcodes differ in length");
    if (b.ones_count() == 0 || b.ones_count() == length) throw UndefinedCorrelationError("ncc: constant barcode");
    std::copy_n(b.words().begin(), p.words, p.bits.begin() + i * p.words);
    p.ones.push_back(b.ones_count());
    p.spread.push_back(barcode_spread(length, b.ones_count()));
  }
  return p;
}

inline std::int64_t and_popcount(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
  std::int64_t n11 = 0;
  for (std::size_t w = 0; w < words; ++w) n11 += std::popcount(a[w] & b[w]);
  return n11;
}

// Best k (index, value) entries under ranks_before, kept sorted; slots start empty (index -1).
struct TopK {
  int k;
  std::vector<double> value;
  std::vector<int> index;

  TopK(std::size_t slots, int k) : k(k), value(slots * k, 0.0), index(slots * k, -1) {}

  void offer(std::size_t slot, double v, int i) {
    double* vs = value.data() + slot * k;
    int* is = index.data() + slot * k;
    if (is[k - 1] >= 0 && !ranks_before(v, i, vs[k - 1], is[k - 1])) return;
    int pos = k - 1;
    while (pos > 0 && (is[pos - 1] < 0 || ranks_before(v, i, vs[pos - 1], is[pos - 1]))) {
      vs[pos] = vs[pos - 1];
      is[pos] = is[pos - 1];
      --pos;
    }
    vs[pos] = v;
    is[pos] = i;
  }

  bool contains(std::size_t slot, int i) const {
    const int* is = index.data() + slot * k;
    return std::find(is, is + k, i) != is + k;
  }
};

}  // namespace

CorrelationMatrix correlation_matrix(std::span<const MotionBarcode> barcodes_a,
                                     std::span<const MotionBarcode> barcodes_b, Exec exec) {
  CorrelationMatrix m;
  m.rows = static_cast<int>(barcodes_a.size());
  m.cols = static_cast<int>(barcodes_b.size());
  m.values.assign(static_cast<std::size_t>(m.rows) * m.cols, 0.0);
  if (exec == Exec::serial) {
    for (int i = 0; i < m.rows; ++i)
      for (int j = 0; j < m.cols; ++j) m.values[static_cast<std::size_t>(i) * m.cols + j] = ncc(barcodes_a[i], barcodes_b[j]);
    return m;
  }
  if (m.rows == 0 || m.cols == 0) return m;

  const int length = barcodes_a[0].length();
  const PackedBarcodes pa = pack_barcodes(barcodes_a, length);
  const PackedBarcodes pb = pack_barcodes(barcodes_b, length);
  const double n = length;
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < m.rows; ++i) {
    double* row = m.values.data() + static_cast<std::size_t>(i) * m.cols;
    for (int j = 0; j < m.cols; ++j)
      row[j] = ncc_from_counts(n, pa.ones[i], pb.ones[j], pa.spread[i], pb.spread[j],
                               and_popcount(pa.row(i), pb.row(j), pa.words));
  }
  return m;
}

std::vector<IndexedPair> mutual_topk_streaming(std::span<const MotionBarcode> barcodes_a,
                                               std::span<const MotionBarcode> barcodes_b, int k, Exec exec) {
  if (k < 1) throw DomainError("mutual_topk_candidates: k must be >= 1");
  const int rows = static_cast<int>(barcodes_a.size());
  const int cols = static_cast<int>(barcodes_b.size());
  if (rows == 0 || cols == 0) return {};
  const int length = barcodes_a[0].length();
  const PackedBarcodes pa = pack_barcodes(barcodes_a, length);
  const PackedBarcodes pb = pack_barcodes(barcodes_b, length);
  const double n = length;

  TopK row_top(rows, k);
  TopK col_top(cols, k);
  const auto scan_rows = [&](int begin, int end, TopK& cols_local) {
    for (int i = begin; i < end; ++i)
      for (int j = 0; j < cols; ++j) {
        const double v = ncc_from_counts(n, pa.ones[i], pb.ones[j], pa.spread[i], pb.spread[j],
                                         and_popcount(pa.row(i), pb.row(j), pa.words));
        row_top.offer(i, v, j);
        cols_local.offer(j, v, i);
      }
  };
  if (exec == Exec::serial) {
    scan_rows(0, rows, col_top);
  } else {
#pragma omp parallel
    {
      TopK local(cols, k);
#pragma omp for schedule(dynamic, 16) nowait
      for (int i = 0; i < rows; ++i) scan_rows(i, i + 1, local);
#pragma omp critical
      for (int j = 0; j < cols; ++j)
        for (int s = 0; s < k; ++s)
          if (local.index[j * k + s] >= 0) col_top.offer(j, local.value[j * k + s], local.index[j * k + s]);
    }
  }

  std::vector<IndexedPair> out;
  for (int i = 0; i < rows; ++i) {
    std::vector<IndexedPair> row_pairs;
    for (int s = 0; s < k; ++s) {
      const int j = row_top.index[static_cast<std::size_t>(i) * k + s];
      if (j >= 0 && col_top.contains(j, i)) row_pairs.push_back({i, j, row_top.value[static_cast<std::size_t>(i) * k + s]});
    }
    std::sort(row_pairs.begin(), row_pairs.end(), [](const IndexedPair& l, const IndexedPair& r) { return l.b < r.b; });
    out.insert(out.end(), row_pairs.begin(), row_pairs.end());
  }
  return out;
}

std::vector<IndexedPair> mutual_topk_candidates(const CorrelationMatrix& m, int k) {
  if (k < 1) throw DomainError("mutual_topk_candidates: k must be >= 1");
  std::vector<std::vector<char>> row_top(m.rows);
  for (int i = 0; i < m.rows; ++i) row_top[i] = topk_mask(m.cols, k, [&](int j) { return m.at(i, j); });
  std::vector<std::vector<char>> col_top(m.cols);
  for (int j = 0; j < m.cols; ++j) col_top[j] = topk_mask(m.rows, k, [&](int i) { return m.at(i, j); });
  std::vector<IndexedPair> out;
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      if (row_top[i][j] && col_top[j][i]) out.push_back({i, j, m.at(i, j)});
  return out;
}

std::vector<CandidatePair> select_top_candidates(std::vector<CandidatePair> pairs, int limit) {
  if (limit < 1) throw DomainError("select_top_candidates: limit must be >= 1");
  std::stable_sort(pairs.begin(), pairs.end(), [](const CandidatePair& l, const CandidatePair& r) {
    if (l.score != r.score) return l.score > r.score;
    if (l.line_a.id != r.line_a.id) return l.line_a.id < r.line_a.id;
    return l.line_b.id < r.line_b.id;
  });
  if (static_cast<int>(pairs.size()) > limit) pairs.resize(limit);
  return pairs;
}

std::vector<TrafficLine> detect_traffic_lines(const HeatMap& heat, const HoughParams& params) {
  std::vector<TrafficLine> lines;
  std::vector<std::uint32_t> nonzero;
  for (auto c : heat.counts)
    if (c > 0) nonzero.push_back(c);
  if (nonzero.empty()) return lines;
  std::sort(nonzero.begin(), nonzero.end());
  const auto q_index = static_cast<std::size_t>(std::floor(params.hot_fraction * (nonzero.size() - 1)));
  const std::uint32_t hot_level = nonzero[std::min(q_index, nonzero.size() - 1)];

  std::vector<Eigen::Vector2d> hot;
  for (int y = 0; y < heat.height; ++y)
    for (int x = 0; x < heat.width; ++x)
      if (heat.at(x, y) >= hot_level) hot.emplace_back(x + 0.5, y + 0.5);

  const int n_theta = std::max(1, static_cast<int>(std::lround(kPi / params.theta_step)));
  const double diag = std::hypot(heat.width, heat.height);
  const int n_rho = static_cast<int>(std::ceil(2.0 * diag / params.rho_step)) + 1;
  std::vector<double> cos_t(n_theta), sin_t(n_theta);
  for (int t = 0; t < n_theta; ++t) {
    cos_t[t] = std::cos(t * params.theta_step);
    sin_t[t] = std::sin(t * params.theta_step);
  }
  std::vector<int> acc(static_cast<std::size_t>(n_theta) * n_rho, 0);
  const auto rho_bin = [&](const Eigen::Vector2d& p, int t) {
    return static_cast<int>(std::lround((p.x() * cos_t[t] + p.y() * sin_t[t] + diag) / params.rho_step));
  };
  const auto vote = [&](const Eigen::Vector2d& p, int delta) {
    for (int t = 0; t < n_theta; ++t) acc[static_cast<std::size_t>(t) * n_rho + rho_bin(p, t)] += delta;
  };
  for (const auto& p : hot) vote(p, 1);

  const int strongest = *std::max_element(acc.begin(), acc.end());
  const double min_votes = std::max(2.0, params.peak_min_support * strongest);
  std::vector<char> removed(hot.size(), 0);
  // Greedy peak extraction: take the global maximum (a 3x3 local maximum by construction),
  // then withdraw the votes of the hot pixels it explains so its Hough butterfly does not
  // produce secondary peaks.
  while (static_cast<int>(lines.size()) < params.max_lines) {
    const auto best = std::max_element(acc.begin(), acc.end());
    if (*best < min_votes) break;
    const auto index = static_cast<std::size_t>(best - acc.begin());
    const int t = static_cast<int>(index / n_rho), r = static_cast<int>(index % n_rho);
    const double theta = t * params.theta_step;
    const double rho = r * params.rho_step - diag;
    const HomLine2 peak{Eigen::Vector3d(std::cos(theta), std::sin(theta), -rho)};
    // A path of finite-size objects leaves a band in which many lines tie on votes; the
    // band's axis is the path, and its width sets how many hot pixels the line explains.
    const auto [line, sigma] = refine_band_axis(peak, hot, removed, heat, kBandWindowPx);
    const double band = std::max(2.0 * params.rho_step, 2.5 * sigma);
    for (std::size_t i = 0; i < hot.size(); ++i)
      if (!removed[i] && std::abs(line.h.x() * hot[i].x() + line.h.y() * hot[i].y() + line.h.z()) <= band) {
        removed[i] = 1;
        vote(hot[i], -1);
      }
    acc[index] = 0;
    const double support = mean_heat_along(line, heat, hot_level);
    if (support > 0) lines.push_back({line.normalized(), support});
  }
  return lines;
}

bool lines_overlap(const HomLine2& l1, const HomLine2& l2, const ImageRect& rect, const OverlapParams& params) {
  const Eigen::Vector2d center(0.5 * rect.width, 0.5 * rect.height);
  auto [t1, r1] = rho_theta(l1, center);
  auto [t2, r2] = rho_theta(l2, center);
  double dt = std::abs(t1 - t2);
  if (dt > 0.5 * kPi) {
    dt = kPi - dt;
    r2 = -r2;
  }
  return dt <= params.theta_tol_rad && std::abs(r1 - r2) <= params.rho_tol_px;
}

std::vector<CandidatePair> filter_traffic_candidates(const std::vector<CandidatePair>& cands,
                                                     std::span<const TrafficLine> traffic_a,
                                                     std::span<const TrafficLine> traffic_b,
                                                     const ImageRect& rect_a, const ImageRect& rect_b,
                                                     const OverlapParams& params) {
  const auto near_any = [&](const HomLine2& l, std::span<const TrafficLine> traffic, const ImageRect& rect) {
    return std::any_of(traffic.begin(), traffic.end(),
                       [&](const TrafficLine& t) { return lines_overlap(l, t.line, rect, params); });
  };
  std::vector<CandidatePair> out;
  for (const auto& c : cands)
    if (!(near_any(c.line_a.line, traffic_a, rect_a) && near_any(c.line_b.line, traffic_b, rect_b)))
      out.push_back(c);
  return out;
}

void write_candidates_csv(std::ostream& out, std::span<const CandidatePair> cands) {
  out << "a_id,b_id,score,a_px,a_py,a_qx,a_qy,b_px,b_py,b_qx,b_qy\n" << std::setprecision(17);
  for (const auto& c : cands)
    out << c.line_a.id << ',' << c.line_b.id << ',' << c.score << ',' << c.line_a.p.x() << ',' << c.line_a.p.y()
        << ',' << c.line_a.q.x() << ',' << c.line_a.q.y() << ',' << c.line_b.p.x() << ',' << c.line_b.p.y() << ','
        << c.line_b.q.x() << ',' << c.line_b.q.y() << '\n';
}

std::vector<CandidatePair> read_candidates_csv(std::istream& in) {
  std::vector<CandidatePair> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("a_id", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    CandidatePair c;
    if (!(fields >> c.line_a.id >> c.line_b.id >> c.score >> c.line_a.p.x() >> c.line_a.p.y() >> c.line_a.q.x() >>
          c.line_a.q.y() >> c.line_b.p.x() >> c.line_b.p.y() >> c.line_b.q.x() >> c.line_b.q.y()))
      throw FormatError("candidate CSV line " + std::to_string(line_no) + " malformed");
    c.line_a.line = line_through(HomPoint2::from_pixel(c.line_a.p), HomPoint2::from_pixel(c.line_a.q)).normalized();
    c.line_b.line = line_through(HomPoint2::from_pixel(c.line_b.p), HomPoint2::from_pixel(c.line_b.q)).normalized();
    out.push_back(c);
  }
  return out;
}

}  // namespace epiline
