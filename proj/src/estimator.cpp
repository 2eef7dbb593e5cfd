#include "epiline/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "epiline/error.hpp"

namespace epiline {

namespace {

struct TrialOutcome {
  int count = -1;  // -1: degenerate trial
  PencilHomography h;
};

TrialOutcome run_trial(std::span<const CandidatePair> cands, const PairSampler& sampler, const ImageRect& rect_a,
                       const ImageRect& rect_b, const RansacConfig& cfg, int trial,
                       const Eigen::Matrix3d& cond_a, const Eigen::Matrix3d& cond_b) {
  TrialOutcome out;
  Rng rng(substream_seed(cfg.seed, static_cast<std::uint64_t>(trial)));
  try {
    const auto used = sampler.sample(rng);
    const auto [e, e_prime] = propose_epipoles(cands[used.first], cands[used.second]);
    const auto third = third_pair(cands, used, e, e_prime, rect_a.width, rect_b.width);
    const CandidatePair& c3 = cands[third.index];
    const std::array<LinePair, 3> pairs{
        LinePair{cands[used.first].line_a.line, cands[used.first].line_b.line},
        LinePair{cands[used.second].line_a.line, cands[used.second].line_b.line},
        LinePair{project_onto_pencil(c3.line_a.line, e, cond_a), project_onto_pencil(c3.line_b.line, e_prime, cond_b)}};
    out.h = build_pencil_homography(pairs, e, e_prime, rect_a, rect_b);
    out.count = count_inliers(out.h, cands, rect_b, cfg.inlier_area_threshold_px);
  } catch (const Error&) {
    out.count = -1;
  }
  return out;
}

bool is_inlier(const PencilHomography& h, const CandidatePair& c, const ImageRect& rect_b, double limit) {
  try {
    const HomLine2 mapped = apply_pencil_homography(h, c.line_a.line);
    return area_between_lines(mapped, c.line_b.line, rect_b) < limit;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

PairSampler::PairSampler(std::span<const CandidatePair> cands, const ImageRect& rect_a, const ImageRect& rect_b,
                         double min_separation_deg, int max_retries)
    : cands_(cands), min_separation_rad_(min_separation_deg * std::numbers::pi / 180.0), max_retries_(max_retries) {
  cumulative_.reserve(cands.size());
  const Eigen::Matrix3d line_cond_a = conditioning_transform(rect_a).inverse().transpose();
  const Eigen::Matrix3d line_cond_b = conditioning_transform(rect_b).inverse().transpose();
  for (const auto& c : cands) {
    cond_a_.push_back((line_cond_a * c.line_a.line.h).normalized());
    cond_b_.push_back((line_cond_b * c.line_b.line.h).normalized());
  }
  double total = 0.0;
  int positive = 0;
  for (const auto& c : cands) {
    const double w = std::max(c.score, 0.0);
    positive += w > 0;
    total += w;
    cumulative_.push_back(total);
  }
  if (positive < 2) throw InsufficientCandidatesError("need at least two candidates with positive correlation");
}

int PairSampler::draw(Rng& rng) const {
  const double target = uniform01(rng) * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  if (it == cumulative_.end()) --it;
  return static_cast<int>(it - cumulative_.begin());
}

std::pair<int, int> PairSampler::sample(Rng& rng) const {
  for (int attempt = 0; attempt < max_retries_; ++attempt) {
    const int first = draw(rng);
    int second = draw(rng);
    while (second == first) second = draw(rng);
    if (projective_angle(cond_a_[first], cond_a_[second]) < min_separation_rad_ ||
        projective_angle(cond_b_[first], cond_b_[second]) < min_separation_rad_)
      continue;
    return {first, second};
  }
  throw DegenerateSampleError("no well-separated candidate pair found within the retry budget");
}

std::pair<int, int> sample_two_pairs(std::span<const CandidatePair> cands, const ImageRect& rect_a,
                                     const ImageRect& rect_b, Rng& rng, const RansacConfig& cfg) {
  if (cands.size() < 2) throw InsufficientCandidatesError("need at least two candidates");
  return PairSampler(cands, rect_a, rect_b, cfg.min_pair_separation_deg, cfg.max_sample_retries).sample(rng);
}

std::pair<HomPoint2, HomPoint2> propose_epipoles(const CandidatePair& p1, const CandidatePair& p2) {
  try {
    return {intersect(p1.line_a.line, p2.line_a.line), intersect(p1.line_b.line, p2.line_b.line)};
  } catch (const DegenerateInputError& e) {
    throw DegenerateSampleError(std::string("epipole proposal: ") + e.what());
  }
}

double epipole_line_criterion(const HomLine2& l, const HomPoint2& e, double width) {
  if (e.is_finite()) return point_line_distance(e, l);
  const Eigen::Vector2d dir = e.h.head<2>().normalized();
  const Eigen::Vector2d line_dir = l.direction();
  const double cross = std::abs(dir.x() * line_dir.y() - dir.y() * line_dir.x());
  return width * std::atan2(cross, std::abs(dir.dot(line_dir)));
}

ThirdPairChoice third_pair(std::span<const CandidatePair> cands, std::pair<int, int> used, const HomPoint2& e,
                           const HomPoint2& e_prime, double width_a, double width_b) {
  ThirdPairChoice best;
  best.criterion = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(cands.size()); ++i) {
    if (i == used.first || i == used.second) continue;
    const double c = epipole_line_criterion(cands[i].line_a.line, e, width_a) +
                     epipole_line_criterion(cands[i].line_b.line, e_prime, width_b);
    if (c < best.criterion) best = {i, c};
  }
  if (best.index < 0) throw InsufficientCandidatesError("no candidate left for the third pair");
  return best;
}

HomographyScore score_homography(const PencilHomography& h, std::span<const CandidatePair> cands,
                                 const ImageRect& rect_b, double threshold) {
  HomographyScore score;
  const double limit = threshold * rect_b.width;
  for (int i = 0; i < static_cast<int>(cands.size()); ++i)
    if (is_inlier(h, cands[i], rect_b, limit)) score.inliers.push_back(i);
  score.count = static_cast<int>(score.inliers.size());
  return score;
}

int count_inliers(const PencilHomography& h, std::span<const CandidatePair> cands, const ImageRect& rect_b,
                  double threshold) {
  const double limit = threshold * rect_b.width;
  int count = 0;
  for (const auto& c : cands) count += is_inlier(h, c, rect_b, limit);
  return count;
}

EstimationResult estimate_fundamental(std::span<const CandidatePair> cands, const ImageRect& rect_a,
                                      const ImageRect& rect_b, const RansacConfig& cfg, Exec exec) {
  if (cands.size() < 3) throw InsufficientCandidatesError("RANSAC needs at least three candidate pairs");
  if (cfg.max_iterations < 1 || cfg.inlier_area_threshold_px <= 0 || cfg.block_size < 1)
    throw ConfigError("invalid RANSAC configuration");
  const PairSampler sampler(cands, rect_a, rect_b, cfg.min_pair_separation_deg, cfg.max_sample_retries);
  const Eigen::Matrix3d cond_a = conditioning_transform(rect_a);
  const Eigen::Matrix3d cond_b = conditioning_transform(rect_b);
  const double total = static_cast<double>(cands.size());

  std::optional<TrialOutcome> best;
  int executed = 0, degenerate = 0;
  std::vector<TrialOutcome> block;
  while (executed < cfg.max_iterations) {
    const int n = std::min(cfg.block_size, cfg.max_iterations - executed);
    block.assign(n, TrialOutcome{});
    if (exec == Exec::serial) {
      for (int t = 0; t < n; ++t) block[t] = run_trial(cands, sampler, rect_a, rect_b, cfg, executed + t, cond_a, cond_b);
    } else {
#pragma omp parallel for schedule(dynamic, 1)
      for (int t = 0; t < n; ++t) block[t] = run_trial(cands, sampler, rect_a, rect_b, cfg, executed + t, cond_a, cond_b);
    }
    for (auto& outcome : block) {
      if (outcome.count < 0) {
        ++degenerate;
        continue;
      }
      if (!best || outcome.count > best->count) best = std::move(outcome);
    }
    executed += n;

    if (cfg.early_exit_confidence > 0 && best && best->count > 0) {
      const double w3 = std::pow(best->count / total, 3);
      const double needed = w3 >= 1.0 ? 1.0
                                      : std::log(1.0 - cfg.early_exit_confidence) / std::log(1.0 - w3);
      if (executed >= needed) break;
    }
  }

  if (!best)
    throw EstimationFailureError("all " + std::to_string(executed) + " RANSAC trials were degenerate (" +
                                 std::to_string(cands.size()) + " candidates)");
  EstimationResult result;
  result.h = best->h;
  result.f = f_from_pencil(result.h);
  result.inlier_indices = score_homography(result.h, cands, rect_b, cfg.inlier_area_threshold_px).inliers;
  for (int i : result.inlier_indices) result.inlier_pairs.push_back(cands[i]);
  result.iterations_run = executed;
  result.degenerate_trials = degenerate;
  result.candidate_count = static_cast<int>(cands.size());
  return result;
}

double inlier_pencil_span(const EstimationResult& result, const ImageRect& rect_a) {
  if (result.inlier_pairs.empty()) return 0.0;
  const Eigen::Matrix3d cond = conditioning_transform(rect_a);
  const Eigen::Matrix3d line_cond = cond.inverse().transpose();
  const Eigen::Vector3d ec = (cond * result.h.e.h).normalized();
  // Orthonormal basis of the lines through e (vectors orthogonal to ec).
  Eigen::Vector3d u1 = ec.unitOrthogonal();
  Eigen::Vector3d u2 = ec.cross(u1).normalized();
  std::vector<double> angles;
  for (const auto& c : result.inlier_pairs) {
    Eigen::Vector3d l = (line_cond * c.line_a.line.h).normalized();
    l -= l.dot(ec) * ec;
    if (l.norm() < 1e-12) continue;
    double phi = std::atan2(l.dot(u2), l.dot(u1));
    if (phi < 0) phi += std::numbers::pi;
    if (phi >= std::numbers::pi) phi -= std::numbers::pi;
    angles.push_back(phi);
  }
  if (angles.size() < 2) return 0.0;
  std::sort(angles.begin(), angles.end());
  double max_gap = angles.front() + std::numbers::pi - angles.back();
  for (std::size_t i = 1; i < angles.size(); ++i) max_gap = std::max(max_gap, angles[i] - angles[i - 1]);
  return std::numbers::pi - max_gap;
}

EstimationResult detect_degeneracy(EstimationResult result, const ImageRect& rect_a, double angle_span_min_rad,
                                   double min_inlier_fraction) {
  const double span = inlier_pencil_span(result, rect_a);
  if (span < angle_span_min_rad) {
    result.degenerate = true;
    result.reason = "inlier pencil spans a single epipolar line";
  } else if (result.candidate_count > 0 &&
             static_cast<double>(result.inlier_indices.size()) < min_inlier_fraction * result.candidate_count) {
    result.degenerate = true;
    result.reason = "no pencil homography is supported by the candidates";
  }
  return result;
}

}  // namespace epiline
