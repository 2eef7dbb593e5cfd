#include <sstream>

#include <Eigen/Dense>

#include "doctest.h"
#include "epiline/error.hpp"
#include "epiline/geometry.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace epiline;
using doctest::Approx;

namespace {

HomPoint2 pt(double x, double y, double w = 1.0) { return {Eigen::Vector3d(x, y, w)}; }
HomLine2 ln(double a, double b, double c) { return {Eigen::Vector3d(a, b, c)}; }

bool same_up_to_scale(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double tol) {
  return projective_angle(a, b) < tol;
}

std::array<LinePair, 3> first_three(const std::vector<CandidatePair>& pairs) {
  return {LinePair{pairs[0].line_a.line, pairs[0].line_b.line}, LinePair{pairs[1].line_a.line, pairs[1].line_b.line},
          LinePair{pairs[2].line_a.line, pairs[2].line_b.line}};
}

}  // namespace

TEST_CASE("line_through examples") {
  CHECK(same_up_to_scale(line_through(pt(0, 0), pt(1, 0)).h, {0, 1, 0}, 1e-15));
  CHECK(same_up_to_scale(line_through(pt(0, 0), pt(0, 1)).h, {1, 0, 0}, 1e-15));
  CHECK_THROWS_AS(line_through(pt(1, 2), pt(2, 4, 2)), DegenerateInputError);
}

TEST_CASE("line_through incidence on random points") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d p = Eigen::Vector3d(uniform(rng, -1e3, 1e3), uniform(rng, -1e3, 1e3), uniform(rng, 0.1, 2)).normalized();
    const Eigen::Vector3d q = Eigen::Vector3d(uniform(rng, -1e3, 1e3), uniform(rng, -1e3, 1e3), uniform(rng, 0.1, 2)).normalized();
    const Eigen::Vector3d l = line_through({p}, {q}).h.normalized();
    CHECK(std::abs(l.dot(p)) < 1e-12);
    CHECK(std::abs(l.dot(q)) < 1e-12);
  }
}

TEST_CASE("intersect examples") {
  CHECK(same_up_to_scale(intersect(ln(1, 0, 0), ln(0, 1, 0)).h, {0, 0, 1}, 1e-15));
  const auto at_infinity = intersect(ln(0, 1, 0), ln(0, 1, -5));
  CHECK(same_up_to_scale(at_infinity.h, {1, 0, 0}, 1e-15));
  CHECK_FALSE(at_infinity.is_finite());
  CHECK_THROWS_AS(intersect(ln(0, 1, -5), ln(0, 2, -10)), DegenerateInputError);
}

TEST_CASE("intersection of two epipolar lines is the null vector of F") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto rig = testing::random_rig(rng);
    const auto pairs = testing::exact_epipolar_pairs(rig, 2, rng);
    REQUIRE(pairs.size() == 2);
    if (line_angle(pairs[0].line_a.line, pairs[1].line_a.line) < 1e-3) continue;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(rig.f.f, Eigen::ComputeFullV);
    CHECK(projective_angle(intersect(pairs[0].line_a.line, pairs[1].line_a.line).h, svd.matrixV().col(2)) < 1e-9);
  }
}

TEST_CASE("point_line_distance examples and oracle") {
  CHECK(point_line_distance(pt(0, 0), ln(0, 1, -3)) == Approx(3.0));
  CHECK(point_line_distance(pt(2, 3), ln(0, 1, -3)) == Approx(0.0));
  CHECK(point_line_distance(pt(4, 6, 2), ln(0, 2, -6)) == Approx(0.0));
  CHECK_THROWS_AS(point_line_distance(pt(1, 0, 0), ln(0, 1, 0)), DomainError);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d p(uniform(rng, -50, 50), uniform(rng, -50, 50));
    const HomLine2 l = ln(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -30, 30));
    const double scale = uniform(rng, 0.2, 5.0);
    const double d = point_line_distance(pt(scale * p.x(), scale * p.y(), scale), l);
    CHECK(std::abs(d - testing::point_line_distance_sampled(p, l)) < 1e-6);
  }
}

TEST_CASE("clip_line_to_rect examples") {
  const ImageRect r{10, 10};
  const auto s = clip_line_to_rect(ln(0, 1, -2), r);
  REQUIRE(s);
  CHECK(std::min(s->p.x(), s->q.x()) == Approx(0));
  CHECK(std::max(s->p.x(), s->q.x()) == Approx(10));
  CHECK(s->p.y() == Approx(2));
  CHECK(s->q.y() == Approx(2));
  CHECK_FALSE(clip_line_to_rect(ln(0, 1, 5), r));
}

TEST_CASE("clipped endpoints lie on the line and on the boundary") {
  Rng rng(4);
  const ImageRect r{640, 480};
  int hits = 0;
  for (int i = 0; i < 2000; ++i) {
    const HomLine2 l = ln(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -800, 800)).normalized();
    const auto s = clip_line_to_rect(l, r);
    if (!s) continue;
    ++hits;
    for (const auto& p : {s->p, s->q}) {
      CHECK(std::abs(l.h.dot(Eigen::Vector3d(p.x(), p.y(), 1.0))) <= 1e-9 * std::max(1.0, p.norm()));
      const bool on_boundary = std::abs(p.x()) < 1e-9 || std::abs(p.x() - 640) < 1e-9 || std::abs(p.y()) < 1e-9 ||
                               std::abs(p.y() - 480) < 1e-9;
      CHECK(on_boundary);
      CHECK(p.x() >= -1e-9);
      CHECK(p.x() <= 640 + 1e-9);
      CHECK(p.y() >= -1e-9);
      CHECK(p.y() <= 480 + 1e-9);
    }
  }
  CHECK(hits > 100);
}

TEST_CASE("area_between_lines examples") {
  const ImageRect r{7, 5};
  CHECK(area_between_lines(ln(0, 1, 0), ln(0, 1, -5), r) == Approx(35.0));
  CHECK(area_between_lines(ln(1, 2, -3), ln(1, 2, -3), r) == 0.0);
  CHECK(area_between_lines(ln(1, 2, -3), ln(-2, -4, 6), r) == 0.0);
}

TEST_CASE("area_between_lines agrees with a sampling oracle") {
  Rng rng(5);
  const ImageRect r{640, 480};
  int checked = 0;
  while (checked < 20) {
    const HomLine2 l1 = testing::random_line_through_rect(r, rng);
    const HomLine2 l2 = testing::random_line_through_rect(r, rng);
    const double oracle = testing::area_between_lines_sampled(l1, l2, r, 1000, 1000, rng);
    if (oracle < 0.02 * 640 * 480) continue;
    ++checked;
    CHECK(std::abs(area_between_lines(l1, l2, r) - oracle) < 0.01 * oracle);
  }
}

TEST_CASE("area_between_lines is symmetric and scale invariant") {
  Rng rng(6);
  const ImageRect r{320, 200};
  for (int i = 0; i < 1000; ++i) {
    const HomLine2 l1 = testing::random_line_through_rect(r, rng);
    const HomLine2 l2 = testing::random_line_through_rect(r, rng);
    const double a = area_between_lines(l1, l2, r);
    CHECK(a >= 0.0);
    CHECK(a <= 320.0 * 200.0 + 1e-6);
    CHECK(area_between_lines(l2, l1, r) == Approx(a).epsilon(1e-12));
    const HomLine2 scaled{l1.h * uniform(rng, -5.0, 5.0)};
    if (scaled.h.norm() > 1e-3) CHECK(area_between_lines(scaled, l2, r) == Approx(a).epsilon(1e-12));
  }
}

TEST_CASE("pencil_coordinates examples") {
  const std::array<HomLine2, 2> basis{ln(1, 0, -3), ln(0, 1, -4)};
  const auto c0 = pencil_coordinates(basis[0], basis);
  CHECK(std::abs(c0.y()) < 1e-12 * std::abs(c0.x()));
  const Eigen::Vector3d sum = basis[0].normalized().h + basis[1].normalized().h;
  const auto c1 = pencil_coordinates({sum}, basis);
  CHECK(c1.x() == Approx(c1.y()));
  CHECK_THROWS_AS(pencil_coordinates(basis[0], {basis[0], HomLine2{basis[0].h * 2.0}}), DegenerateInputError);
}

TEST_CASE("pencil_coordinates recovers constructed coefficients") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    // Conditioned-frame scale: the image spans [-1, 1]^2.
    const HomPoint2 e = pt(uniform(rng, -3, 3), uniform(rng, -3, 3));
    const HomLine2 b1 = line_through(e, pt(uniform(rng, -1, 1), uniform(rng, -1, 1))).normalized();
    const HomLine2 b2 = line_through(e, pt(uniform(rng, -1, 1), uniform(rng, -1, 1))).normalized();
    if (line_angle(b1, b2) < 0.01) continue;
    const Eigen::Vector2d truth(uniform(rng, -1, 1), uniform(rng, -1, 1));
    if (truth.norm() < 0.05) continue;
    const HomLine2 l{truth.x() * b1.h + truth.y() * b2.h};
    const Eigen::Vector2d got = pencil_coordinates(l, {b1, b2});
    CHECK(std::abs(got.x() * truth.y() - got.y() * truth.x()) < 1e-9 * got.norm() * truth.norm());
  }
}

TEST_CASE("pencil homography maps exact epipolar lines to their mates") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto rig = testing::random_rig(rng);
    const auto [e, ep] = epipoles_of(rig.f);
    const auto pairs = testing::exact_epipolar_pairs(rig, 20, rng);
    REQUIRE(pairs.size() == 20);
    PencilHomography h;
    try {
      h = build_pencil_homography(first_three(pairs), e, ep, rig.a.image, rig.b.image);
    } catch (const DegenerateInputError&) {
      continue;  // two of the sampled lines coincide
    }
    for (int i = 0; i < 3; ++i)
      CHECK(projective_angle(apply_pencil_homography(h, pairs[i].line_a.line).h, pairs[i].line_b.line.h) < 1e-9);
    for (const auto& p : pairs) {
      const HomLine2 mapped = apply_pencil_homography(h, p.line_a.line);
      CHECK(projective_angle(mapped.h, p.line_b.line.h) < 1e-9);
      CHECK(std::abs(mapped.h.normalized().dot(ep.h.normalized())) < 1e-9);
    }
    CHECK(projective_angle(apply_pencil_homography(h, h.basis_a[0]).h, h.basis_b[0].h) < 1e-12);
    CHECK(projective_angle(apply_pencil_homography(h, h.basis_a[1]).h, h.basis_b[1].h) < 1e-12);
    for (const auto& basis : {h.basis_a, h.basis_b}) CHECK(line_angle(basis[0], basis[1]) > 0);
    CHECK(std::abs(h.m.determinant()) > 0);

    const FundamentalMatrix f = f_from_pencil(h);
    CHECK(normalized_frobenius_distance(f, rig.f) < 1e-6);
    CHECK((f.f * e.h.normalized()).norm() < 1e-9);
    CHECK((ep.h.normalized().transpose() * f.f).norm() < 1e-9);
    const auto [fe, fep] = epipoles_of(f);
    CHECK(projective_angle(fe.h, e.h) < 1e-8);
    CHECK(projective_angle(fep.h, ep.h) < 1e-8);
    for (const auto& [x, xp] : testing::rig_correspondences(rig, 20, rng)) {
      const double residual = std::abs(xp.h.normalized().dot(f.f * x.h.normalized()));
      CHECK(residual < 1e-6);
    }
  }
}

TEST_CASE("pencil homography input errors") {
  Rng rng(9);
  const auto rig = testing::random_rig(rng);
  const auto [e, ep] = epipoles_of(rig.f);
  const auto pairs = testing::exact_epipolar_pairs(rig, 3, rng);
  auto same = first_three(pairs);
  same[2] = same[0];
  CHECK_THROWS_AS(build_pencil_homography(same, e, ep, rig.a.image, rig.b.image), DegenerateInputError);

  auto shifted = first_three(pairs);
  Eigen::Vector3d l = shifted[2].b.normalized().h;
  l.z() -= 10.0;  // parallel shift by 10 px
  shifted[2].b = {l};
  CHECK_THROWS_AS(build_pencil_homography(shifted, e, ep, rig.a.image, rig.b.image), InconsistentInputError);
}

TEST_CASE("symmetric epipolar distance") {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rig = testing::random_rig(rng);
    for (const auto& [x, xp] : testing::rig_correspondences(rig, 20, rng)) {
      CHECK(symmetric_epipolar_distance(rig.f, x, xp) < 1e-9);
      // Displacing x' by 2 px along the normal of F x moves only the B-side distance.
      const Eigen::Vector3d lb = rig.f.f * x.h;
      const Eigen::Vector2d n = lb.head<2>().normalized();
      const HomPoint2 moved = HomPoint2::from_pixel(xp.pixel() + 2.0 * n);
      const double d_b = point_line_distance(moved, {lb});
      const double d_a = point_line_distance(x, {rig.f.f.transpose() * moved.h});
      CHECK(d_b == Approx(2.0).epsilon(1e-9));
      CHECK(symmetric_epipolar_distance(rig.f, x, moved) == Approx(0.5 * (d_a + d_b)).epsilon(1e-9));
    }
  }
  // Exact construction: F = [e']x with e' at infinity along x gives horizontal epipolar lines y = y_x.
  const FundamentalMatrix f{(Eigen::Matrix3d() << 0, 0, 0, 0, 0, -1, 0, 1, 0).finished()};
  CHECK(symmetric_epipolar_distance(f, pt(3, 4), pt(9, 4)) == Approx(0.0));
  CHECK(symmetric_epipolar_distance(f, pt(3, 4), pt(9, 6)) == Approx(2.0));
  CHECK_THROWS_AS(symmetric_epipolar_distance(FundamentalMatrix{Eigen::Matrix3d::Zero()}, pt(1, 1), pt(1, 1)),
                  DomainError);
}

TEST_CASE("epipoles_of") {
  Rng rng(11);
  const Eigen::Matrix3d random = Eigen::Matrix3d::Random();
  CHECK_THROWS_AS(epipoles_of({random}), InvariantViolationError);
  const Eigen::Vector3d u(1, 2, 3), v(-1, 0.5, 2);
  CHECK_THROWS_AS(epipoles_of({u * v.transpose()}), InvariantViolationError);

  // Camera B translated along camera A's x-axis: e' at infinity.
  const CameraModel a = CameraModel::look_at({0, -8, 1}, {0, 0, 1}, 700, {640, 480});
  CameraModel b = a;
  b.center += a.rotation.transpose() * Eigen::Vector3d(1.5, 0, 0);
  const auto [e, ep] = epipoles_of(ground_truth_f(a, b));
  CHECK(std::abs(ep.h.normalized().z()) < 1e-9);
  CHECK(std::abs(e.h.normalized().z()) < 1e-9);
}

TEST_CASE("fundamental matrix text round trip keeps 17 digits") {
  Rng rng(12);
  const auto rig = testing::random_rig(rng);
  std::stringstream s;
  write_fundamental(s, rig.f);
  const auto back = read_fundamental(s);
  CHECK(back.f == rig.f.f);
  std::istringstream bad("1 2 3\n4 5\n");
  CHECK_THROWS_AS(read_fundamental(bad), FormatError);
}

TEST_CASE("conditioning maps the image center to the origin and the half-diagonal to sqrt 2") {
  const ImageRect r{640, 480};
  const Eigen::Matrix3d t = conditioning_transform(r);
  CHECK((t * Eigen::Vector3d(320, 240, 1)).head<2>().norm() < 1e-12);
  CHECK((t * Eigen::Vector3d(640, 480, 1)).head<2>().norm() == Approx(std::sqrt(2.0)));
}
