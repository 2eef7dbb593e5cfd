#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "epiline/barcode.hpp"
#include "epiline/geometry.hpp"
#include "epiline/mask_io.hpp"
#include "epiline/parallel.hpp"

namespace epiline {

/// rows x cols ncc scores between camera-A and camera-B barcodes, row-major.
struct CorrelationMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * cols + j]; }
};

/// A correlation-matrix entry (row i of camera A, column j of camera B).
struct IndexedPair {
  int a = 0;
  int b = 0;
  double score = 0.0;

  bool operator==(const IndexedPair&) const = default;
};

/// A putative pair of corresponding epipolar lines.
struct CandidatePair {
  BorderLine line_a;
  BorderLine line_b;
  double score = 0.0;
};

struct TrafficLine {
  HomLine2 line;
  double support = 0.0;  // mean heat along the raster between the first and last hot pixel
};

struct HoughParams {
  double hot_fraction = 0.90;        // quantile of nonzero heat counts marking a pixel hot
  double rho_step = 1.0;             // pixels
  double theta_step = 0.5 * 3.14159265358979323846 / 180.0;  // radians
  double peak_min_support = 0.3;     // fraction of the strongest accumulator peak
  int max_lines = 10;
};

struct OverlapParams {
  double rho_tol_px = 5.0;
  double theta_tol_rad = 0.02;
};

/// values[i][j] = ncc(a_i, b_j). Exec::serial evaluates ncc() entry by entry;
/// Exec::parallel runs a row-parallel popcount kernel with the same closed form.
CorrelationMatrix correlation_matrix(std::span<const MotionBarcode> barcodes_a,
                                     std::span<const MotionBarcode> barcodes_b, Exec exec = Exec::parallel);

/// Entries ranked within the top k of both their row and their column (ties: lower index first).
std::vector<IndexedPair> mutual_topk_candidates(const CorrelationMatrix& m, int k);

/// Same result as mutual_topk_candidates(correlation_matrix(a, b), k) in O(rows + cols) memory.
std::vector<IndexedPair> mutual_topk_streaming(std::span<const MotionBarcode> barcodes_a,
                                               std::span<const MotionBarcode> barcodes_b, int k,
                                               Exec exec = Exec::parallel);

/// Highest scores first (ties: lower A id, then lower B id), truncated to `limit`.
std::vector<CandidatePair> select_top_candidates(std::vector<CandidatePair> pairs, int limit);

/// Dominant straight motion paths in a heat map (binarize, Hough vote, peak extraction).
std::vector<TrafficLine> detect_traffic_lines(const HeatMap& heat, const HoughParams& params = {});

/// (rho, theta) proximity of two lines with rho measured from the image center.
bool lines_overlap(const HomLine2& l1, const HomLine2& l2, const ImageRect& rect, const OverlapParams& params);

/// Drops candidates whose A-line overlaps an A traffic line and whose B-line overlaps a B traffic line.
std::vector<CandidatePair> filter_traffic_candidates(const std::vector<CandidatePair>& cands,
                                                     std::span<const TrafficLine> traffic_a,
                                                     std::span<const TrafficLine> traffic_b,
                                                     const ImageRect& rect_a, const ImageRect& rect_b,
                                                     const OverlapParams& params = {});

/// CSV: a_id,b_id,score,a_px,a_py,a_qx,a_qy,b_px,b_py,b_qx,b_qy
void write_candidates_csv(std::ostream& out, std::span<const CandidatePair> cands);
std::vector<CandidatePair> read_candidates_csv(std::istream& in);

}  // namespace epiline
