#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "epiline/geometry.hpp"
#include "epiline/matching.hpp"
#include "epiline/parallel.hpp"
#include "epiline/random.hpp"

namespace epiline {

struct RansacConfig {
  int max_iterations = 10000;
  double inlier_area_threshold_px = 3.0;  // inlier iff enclosed area < threshold * image width
  std::uint64_t seed = 0;
  double min_pair_separation_deg = 2.0;
  double early_exit_confidence = 0.0;     // in (0, 1) enables adaptive stopping
  int max_sample_retries = 100;
  int block_size = 64;                    // trials between early-exit checks
};

struct EstimationResult {
  FundamentalMatrix f;
  PencilHomography h;
  std::vector<int> inlier_indices;  // into the candidate list
  std::vector<CandidatePair> inlier_pairs;
  int iterations_run = 0;
  int degenerate_trials = 0;
  int candidate_count = 0;
  bool degenerate = false;
  std::string reason;
};

/// Draws two distinct candidates with probability proportional to max(score, 0),
/// rejecting draws whose two lines are closer than the minimum separation in either camera.
/// Separation is the angle between the line vectors in the camera's conditioned frame: the
/// planar angle for lines through the image center, and large for distant parallel lines,
/// which still fix a well-conditioned epipole at infinity.
class PairSampler {
 public:
  PairSampler(std::span<const CandidatePair> cands, const ImageRect& rect_a, const ImageRect& rect_b,
              double min_separation_deg, int max_retries);
  std::pair<int, int> sample(Rng& rng) const;

 private:
  int draw(Rng& rng) const;

  std::span<const CandidatePair> cands_;
  std::vector<double> cumulative_;
  std::vector<Eigen::Vector3d> cond_a_, cond_b_;  // conditioned unit line vectors
  double min_separation_rad_;
  int max_retries_;
};

std::pair<int, int> sample_two_pairs(std::span<const CandidatePair> cands, const ImageRect& rect_a,
                                     const ImageRect& rect_b, Rng& rng, const RansacConfig& cfg = {});

/// e = l1 x l2 in camera A, e' = l1' x l2' in camera B.
std::pair<HomPoint2, HomPoint2> propose_epipoles(const CandidatePair& p1, const CandidatePair& p2);

/// Distance-like criterion of a line from an epipole: point-line distance, or for an
/// epipole at infinity the angle between the line and the epipole direction times `width`.
double epipole_line_criterion(const HomLine2& l, const HomPoint2& e, double width);

struct ThirdPairChoice {
  int index = -1;
  double criterion = 0.0;
};

/// The unused candidate minimizing d(l, e) + d(l', e').
ThirdPairChoice third_pair(std::span<const CandidatePair> cands, std::pair<int, int> used, const HomPoint2& e,
                           const HomPoint2& e_prime, double width_a, double width_b);

struct HomographyScore {
  int count = 0;
  std::vector<int> inliers;
};

/// A pair is an inlier iff area(h(l), l', rect_b) < threshold * rect_b.width.
HomographyScore score_homography(const PencilHomography& h, std::span<const CandidatePair> cands,
                                 const ImageRect& rect_b, double threshold);
/// Count only; the hot loop of the estimator.
int count_inliers(const PencilHomography& h, std::span<const CandidatePair> cands, const ImageRect& rect_b,
                  double threshold);

/// RANSAC over candidate epipolar line pairs. Trials draw from per-trial substreams of
/// cfg.seed and are reduced by (inlier count, lowest trial index), so serial and parallel
/// execution choose the same model.
EstimationResult estimate_fundamental(std::span<const CandidatePair> cands, const ImageRect& rect_a,
                                      const ImageRect& rect_b, const RansacConfig& cfg = {},
                                      Exec exec = Exec::parallel);

/// Angular span of the inlier A-lines within the epipolar pencil, measured in the
/// conditioned frame of camera A so that far and infinite epipoles stay comparable.
double inlier_pencil_span(const EstimationResult& result, const ImageRect& rect_a);

/// Flags the result degenerate when the inlier pencil span is below `angle_span_min_rad`,
/// or when the inliers are fewer than `min_inlier_fraction` of the candidates (motion that
/// never crosses the true pencil leaves every model equally weak).
EstimationResult detect_degeneracy(EstimationResult result, const ImageRect& rect_a,
                                   double angle_span_min_rad = 0.1, double min_inlier_fraction = 0.15);

}  // namespace epiline
