#include "epiline/geometry.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "epiline/error.hpp"

namespace epiline {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

Eigen::Vector3d normalized_line_vector(const Eigen::Vector3d& h) { return HomLine2{h}.normalized().h; }

// Convex polygon with a small fixed capacity: a rectangle clipped by two half-planes has at most 6 vertices.
struct Polygon {
  std::array<Eigen::Vector2d, 8> v;
  int n = 0;

  void push(const Eigen::Vector2d& p) { v[n++] = p; }
};

// Keeps the part of a convex polygon where sign * (n . p + c) >= 0.
Polygon clip_halfplane(const Polygon& poly, const Eigen::Vector3d& l, double sign) {
  Polygon out;
  if (poly.n == 0) return out;
  const double a = sign * l.x(), b = sign * l.y(), c = sign * l.z();
  std::array<double, 8> value;
  for (int i = 0; i < poly.n; ++i) value[i] = a * poly.v[i].x() + b * poly.v[i].y() + c;
  for (int i = 0, j = 1; i < poly.n; ++i, j = (j + 1 == poly.n ? 0 : j + 1)) {
    const double vc = value[i], vn = value[j];
    if (vc >= 0) out.push(poly.v[i]);
    if ((vc >= 0) != (vn >= 0)) out.push(poly.v[i] + (vc / (vc - vn)) * (poly.v[j] - poly.v[i]));
  }
  return out;
}

double polygon_area(const Polygon& poly) {
  double twice = 0.0;
  for (int i = 0; i < poly.n; ++i) {
    const auto& a = poly.v[i];
    const auto& b = poly.v[(i + 1) % poly.n];
    twice += a.x() * b.y() - a.y() * b.x();
  }
  return 0.5 * std::abs(twice);
}

Polygon rect_polygon(const ImageRect& rect) {
  const double w = rect.width, h = rect.height;
  Polygon p;
  p.push({0, 0});
  p.push({w, 0});
  p.push({w, h});
  p.push({0, h});
  return p;
}

double disagreement_area(const Eigen::Vector3d& l1, const Eigen::Vector3d& l2, const ImageRect& rect) {
  const Polygon r = rect_polygon(rect);
  const double a = polygon_area(clip_halfplane(clip_halfplane(r, l1, 1.0), l2, -1.0));
  const double b = polygon_area(clip_halfplane(clip_halfplane(r, l1, -1.0), l2, 1.0));
  return a + b;
}

// Pseudo-inverse of a 3x2 basis; throws when the columns are nearly dependent.
Eigen::Matrix<double, 2, 3> basis_projection(const Eigen::Matrix<double, 3, 2>& basis) {
  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(basis);
  const auto& s = svd.singularValues();
  if (s[1] <= 0.0 || s[0] / s[1] > kMaxBasisCondition)
    throw DegenerateInputError("pencil basis lines are nearly dependent");
  const Eigen::Matrix2d gram = basis.transpose() * basis;
  return gram.inverse() * basis.transpose();
}

bool proportional(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return a.normalized().cross(b.normalized()).norm() < 1e-12;
}

}  // namespace

bool HomPoint2::is_finite() const { return std::abs(h[2]) > 1e-12 * h.norm(); }

HomLine2 HomLine2::normalized() const {
  const double n = h.head<2>().norm();
  if (n <= 1e-300 || n < 1e-15 * std::abs(h[2])) throw DegenerateInputError("line at infinity has no image direction");
  Eigen::Vector3d out = h / n;
  if (out[0] < 0 || (out[0] == 0 && out[1] < 0)) out = -out;
  return {out};
}

Eigen::Vector2d HomLine2::direction() const { return Eigen::Vector2d(-h[1], h[0]).normalized(); }

FundamentalMatrix FundamentalMatrix::normalized() const { return {f / f.norm()}; }

Eigen::Matrix3d conditioning_transform(const ImageRect& rect) {
  const double half_diag = 0.5 * std::hypot(rect.width, rect.height);
  const double s = std::sqrt(2.0) / half_diag;
  Eigen::Matrix3d t;
  t << s, 0, -s * 0.5 * rect.width, 0, s, -s * 0.5 * rect.height, 0, 0, 1;
  return t;
}

HomLine2 transform_line(const Eigen::Matrix3d& t, const HomLine2& l) {
  return {t.inverse().transpose() * l.h};
}

HomLine2 line_through(const HomPoint2& p, const HomPoint2& q) {
  if (proportional(p.h, q.h)) throw DegenerateInputError("line_through: points coincide");
  return {p.h.cross(q.h)};
}

HomPoint2 intersect(const HomLine2& l1, const HomLine2& l2) {
  if (proportional(l1.h, l2.h)) throw DegenerateInputError("intersect: lines are identical");
  return {l1.h.cross(l2.h)};
}

double point_line_distance(const HomPoint2& p, const HomLine2& l) {
  if (!p.is_finite()) throw DomainError("point_line_distance: point at infinity");
  const double n = l.h.head<2>().norm();
  if (n == 0.0) throw DomainError("point_line_distance: line at infinity");
  return std::abs(l.h.dot(p.h)) / (n * std::abs(p.h[2]));
}

double line_angle(const HomLine2& l1, const HomLine2& l2) {
  const Eigen::Vector2d n1 = l1.h.head<2>().normalized(), n2 = l2.h.head<2>().normalized();
  const double cross = std::abs(n1.x() * n2.y() - n1.y() * n2.x());
  return std::atan2(cross, std::abs(n1.dot(n2)));
}

std::optional<Segment> clip_line_to_rect(const HomLine2& l, const ImageRect& rect) {
  const Eigen::Vector3d n = l.normalized().h;
  const Eigen::Vector2d origin = -n.z() * n.head<2>();
  const Eigen::Vector2d dir(-n.y(), n.x());
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  const double lo[2] = {0.0, 0.0};
  const double hi[2] = {static_cast<double>(rect.width), static_cast<double>(rect.height)};
  for (int axis = 0; axis < 2; ++axis) {
    if (std::abs(dir[axis]) < 1e-15) {
      if (origin[axis] < lo[axis] - 1e-9 || origin[axis] > hi[axis] + 1e-9) return std::nullopt;
      continue;
    }
    double ta = (lo[axis] - origin[axis]) / dir[axis];
    double tb = (hi[axis] - origin[axis]) / dir[axis];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 - t0 > 1e-9)) return std::nullopt;
  const auto snap = [&](Eigen::Vector2d p) {
    for (int axis = 0; axis < 2; ++axis) {
      if (std::abs(p[axis] - lo[axis]) < 1e-9) p[axis] = lo[axis];
      if (std::abs(p[axis] - hi[axis]) < 1e-9) p[axis] = hi[axis];
      p[axis] = std::clamp(p[axis], lo[axis], hi[axis]);
    }
    return p;
  };
  return Segment{snap(origin + t0 * dir), snap(origin + t1 * dir)};
}

double area_between_lines(const HomLine2& l1, const HomLine2& l2, const ImageRect& rect) {
  const Eigen::Vector3d a = l1.normalized().h;
  Eigen::Vector3d b = l2.normalized().h;
  const double dot = a.head<2>().dot(b.head<2>());
  if (dot == 0.0) return std::min(disagreement_area(a, b, rect), disagreement_area(a, -b, rect));
  if (dot < 0) b = -b;
  return disagreement_area(a, b, rect);
}

Eigen::Vector2d pencil_coordinates(const HomLine2& l, const std::array<HomLine2, 2>& basis) {
  Eigen::Matrix<double, 3, 2> b;
  b.col(0) = basis[0].normalized().h;
  b.col(1) = basis[1].normalized().h;
  return basis_projection(b) * l.normalized().h;
}

namespace {

PencilHomography build_conditioned(const std::array<LinePair, 3>& pairs, const HomPoint2& e,
                                   const HomPoint2& e_prime, const Eigen::Matrix3d& cond_a,
                                   const Eigen::Matrix3d& cond_b, double tolerance) {
  PencilHomography h;
  h.cond_a = cond_a;
  h.cond_b = cond_b;
  h.line_cond_a = cond_a.inverse().transpose();
  h.e = e;
  h.e_prime = e_prime;

  const Eigen::Vector3d ea = (h.cond_a * e.h).normalized();
  const Eigen::Vector3d eb = (h.cond_b * e_prime.h).normalized();
  std::array<Eigen::Vector3d, 3> la, lb;
  for (int i = 0; i < 3; ++i) {
    la[i] = normalized_line_vector(transform_line(h.cond_a, pairs[i].a).h);
    lb[i] = normalized_line_vector(transform_line(h.cond_b, pairs[i].b).h);
    if (std::abs(la[i].normalized().dot(ea)) > tolerance)
      throw InconsistentInputError("pencil line " + std::to_string(i) + " of camera A misses the epipole");
    if (std::abs(lb[i].normalized().dot(eb)) > tolerance)
      throw InconsistentInputError("pencil line " + std::to_string(i) + " of camera B misses the epipole");
  }
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (proportional(la[i], la[j]) || proportional(lb[i], lb[j]))
        throw DegenerateInputError("pencil lines " + std::to_string(i) + " and " + std::to_string(j) +
                                   " coincide");

  h.cbasis_a << la[0], la[1];
  h.cbasis_b << lb[0], lb[1];
  h.cproj_a = basis_projection(h.cbasis_a);
  const Eigen::Vector2d third_a = h.cproj_a * la[2];
  const Eigen::Vector2d third_b = basis_projection(h.cbasis_b) * lb[2];
  const auto vanishes = [](double v, const Eigen::Vector2d& c) { return std::abs(v) <= 1e-9 * c.norm(); };
  if (vanishes(third_a.x(), third_a) || vanishes(third_a.y(), third_a) || vanishes(third_b.x(), third_b) ||
      vanishes(third_b.y(), third_b))
    throw DegenerateInputError("third line pair coincides with a basis line");
  const double mu = (third_b.y() * third_a.x()) / (third_b.x() * third_a.y());
  h.m = Eigen::Vector2d(1.0, mu).asDiagonal();

  h.basis_a = {pairs[0].a.normalized(), pairs[1].a.normalized()};
  h.basis_b = {pairs[0].b.normalized(), pairs[1].b.normalized()};
  return h;
}

}  // namespace

PencilHomography build_pencil_homography(const std::array<LinePair, 3>& pairs, const HomPoint2& e,
                                         const HomPoint2& e_prime, const ImageRect& rect_a,
                                         const ImageRect& rect_b, double tolerance) {
  return build_conditioned(pairs, e, e_prime, conditioning_transform(rect_a), conditioning_transform(rect_b),
                           tolerance);
}

PencilHomography build_pencil_homography(const std::array<LinePair, 3>& pairs, const HomPoint2& e,
                                         const HomPoint2& e_prime, double tolerance) {
  return build_conditioned(pairs, e, e_prime, Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity(), tolerance);
}

HomLine2 apply_pencil_homography(const PencilHomography& h, const HomLine2& l) {
  const Eigen::Vector3d lc = normalized_line_vector(h.line_cond_a * l.h);
  const Eigen::Vector3d mapped = h.cbasis_b * (h.m * (h.cproj_a * lc));
  return HomLine2{h.cond_b.transpose() * mapped}.normalized();
}

HomLine2 project_onto_pencil(const HomLine2& l, const HomPoint2& e, const Eigen::Matrix3d& cond) {
  const Eigen::Vector3d lc = normalized_line_vector(transform_line(cond, l).h);
  const Eigen::Vector3d ec = (cond * e.h).normalized();
  const Eigen::Vector3d projected = lc - lc.dot(ec) * ec;
  return HomLine2{cond.transpose() * projected}.normalized();
}

FundamentalMatrix f_from_pencil(const PencilHomography& h) {
  const Eigen::Vector3d ec = h.cond_a * h.e.h;
  const Eigen::Matrix3d fc = h.cbasis_b * h.m * h.cproj_a * skew(ec);
  return FundamentalMatrix{h.cond_b.transpose() * fc * h.cond_a}.normalized();
}

double symmetric_epipolar_distance(const FundamentalMatrix& f, const HomPoint2& x, const HomPoint2& x_prime) {
  const Eigen::Vector3d lb = f.f * x.h;
  const Eigen::Vector3d la = f.f.transpose() * x_prime.h;
  if (lb.head<2>().norm() == 0.0 || la.head<2>().norm() == 0.0)
    throw DomainError("symmetric_epipolar_distance: point maps to a degenerate epipolar line");
  return 0.5 * (point_line_distance(x_prime, {lb}) + point_line_distance(x, {la}));
}

std::pair<HomPoint2, HomPoint2> epipoles_of(const FundamentalMatrix& f) {
  const Eigen::Matrix3d fn = f.f / f.f.norm();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s[2] > 1e-9 * s[0]) throw InvariantViolationError("fundamental matrix is numerically rank 3");
  if (s[1] <= 1e-12 * s[0]) throw InvariantViolationError("fundamental matrix is numerically rank 1");
  return {HomPoint2{svd.matrixV().col(2)}, HomPoint2{svd.matrixU().col(2)}};
}

double normalized_frobenius_distance(const FundamentalMatrix& f1, const FundamentalMatrix& f2) {
  const Eigen::Matrix3d a = f1.f / f1.f.norm(), b = f2.f / f2.f.norm();
  return std::min((a - b).norm(), (a + b).norm());
}

double projective_angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const Eigen::Vector3d an = a.normalized(), bn = b.normalized();
  return std::atan2(an.cross(bn).norm(), std::abs(an.dot(bn)));
}

void write_fundamental(std::ostream& out, const FundamentalMatrix& f) {
  out << std::setprecision(17);
  for (int r = 0; r < 3; ++r) out << f.f(r, 0) << ' ' << f.f(r, 1) << ' ' << f.f(r, 2) << '\n';
}

FundamentalMatrix read_fundamental(std::istream& in) {
  FundamentalMatrix f;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (!(in >> f.f(r, c))) throw FormatError("fundamental matrix text needs 9 numbers");
  return f;
}

}  // namespace epiline
