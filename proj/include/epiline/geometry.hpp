#pragma once

#include <algorithm>
#include <array>
#include <iosfwd>
#include <optional>
#include <utility>

#include <Eigen/Core>

namespace epiline {

/// Homogeneous image point; finite iff h[2] != 0. Pixel (x, y) has its center at (x + 0.5, y + 0.5).
struct HomPoint2 {
  Eigen::Vector3d h = Eigen::Vector3d::UnitZ();

  static HomPoint2 from_pixel(double x, double y) { return {Eigen::Vector3d(x, y, 1.0)}; }
  static HomPoint2 from_pixel(const Eigen::Vector2d& p) { return from_pixel(p.x(), p.y()); }
  bool is_finite() const;
  /// Euclidean coordinates; only meaningful for finite points.
  Eigen::Vector2d pixel() const { return h.head<2>() / h[2]; }
};

/// Homogeneous image line; p lies on the line iff h . p = 0.
struct HomLine2 {
  Eigen::Vector3d h = Eigen::Vector3d::UnitX();

  /// Scaled so that ||(h0, h1)|| = 1, sign fixed by h0 > 0 (or h1 > 0 when h0 = 0).
  /// Throws DegenerateInputError for the line at infinity.
  HomLine2 normalized() const;
  /// Unit direction vector (-h1, h0) / ||.||.
  Eigen::Vector2d direction() const;
};

struct ImageRect {
  int width = 0;
  int height = 0;

  double length() const { return static_cast<double>(std::max(width, height)); }
};

struct Segment {
  Eigen::Vector2d p;
  Eigen::Vector2d q;

  Eigen::Vector2d midpoint() const { return 0.5 * (p + q); }
  double length() const { return (q - p).norm(); }
};

/// The 1D projective map between the epipolar pencils of two cameras.
///
/// Lines are handled in Hartley-conditioned coordinates (image center at the
/// origin, half-diagonal sqrt(2)); `cond_a`/`cond_b` map pixels to those
/// coordinates and `cbasis_a`/`cbasis_b` hold the conditioned, normalized
/// basis lines as columns. Pencil coordinates of A are mapped to B by `m`.
struct PencilHomography {
  HomPoint2 e;
  HomPoint2 e_prime;
  std::array<HomLine2, 2> basis_a;
  std::array<HomLine2, 2> basis_b;
  Eigen::Matrix2d m = Eigen::Matrix2d::Identity();

  Eigen::Matrix3d cond_a = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d cond_b = Eigen::Matrix3d::Identity();
  Eigen::Matrix<double, 3, 2> cbasis_a = Eigen::Matrix<double, 3, 2>::Zero();
  Eigen::Matrix<double, 3, 2> cbasis_b = Eigen::Matrix<double, 3, 2>::Zero();
  Eigen::Matrix<double, 2, 3> cproj_a = Eigen::Matrix<double, 2, 3>::Zero();  // pseudo-inverse of cbasis_a
  Eigen::Matrix3d line_cond_a = Eigen::Matrix3d::Identity();                  // cond_a^-T
};

struct FundamentalMatrix {
  Eigen::Matrix3d f = Eigen::Matrix3d::Zero();

  FundamentalMatrix normalized() const;  // unit Frobenius norm
};

struct LinePair {
  HomLine2 a;
  HomLine2 b;
};

inline constexpr double kIncidenceTolerance = 1e-9;
inline constexpr double kMaxBasisCondition = 1e8;

/// Hartley conditioning transform for an image: pixels -> centered coordinates with half-diagonal sqrt(2).
Eigen::Matrix3d conditioning_transform(const ImageRect& rect);
/// Transforms a line given in pixel coordinates by the point transform t (l -> t^-T l).
HomLine2 transform_line(const Eigen::Matrix3d& t, const HomLine2& l);

HomLine2 line_through(const HomPoint2& p, const HomPoint2& q);
HomPoint2 intersect(const HomLine2& l1, const HomLine2& l2);
double point_line_distance(const HomPoint2& p, const HomLine2& l);
/// Unsigned angle in [0, pi/2] between two lines.
double line_angle(const HomLine2& l1, const HomLine2& l2);

/// The part of l inside [0, W] x [0, H]; nullopt if l misses the rectangle or only touches a corner.
std::optional<Segment> clip_line_to_rect(const HomLine2& l, const ImageRect& rect);

/// Exact area of the part of the rectangle lying between the two lines.
double area_between_lines(const HomLine2& l1, const HomLine2& l2, const ImageRect& rect);

/// Least-squares coefficients of l in the span of two basis lines (all normalized first).
Eigen::Vector2d pencil_coordinates(const HomLine2& l, const std::array<HomLine2, 2>& basis);

/// Builds the pencil map from three corresponding line pairs whose lines pass through e / e_prime.
/// Conditioning uses the given rectangles; the overload without rectangles works in raw pixels.
PencilHomography build_pencil_homography(const std::array<LinePair, 3>& pairs, const HomPoint2& e,
                                         const HomPoint2& e_prime, const ImageRect& rect_a,
                                         const ImageRect& rect_b, double tolerance = kIncidenceTolerance);
PencilHomography build_pencil_homography(const std::array<LinePair, 3>& pairs, const HomPoint2& e,
                                         const HomPoint2& e_prime, double tolerance = kIncidenceTolerance);

HomLine2 apply_pencil_homography(const PencilHomography& h, const HomLine2& l);

/// Orthogonal projection (in the conditioned frame of `cond`) of l onto the pencil through e.
HomLine2 project_onto_pencil(const HomLine2& l, const HomPoint2& e, const Eigen::Matrix3d& cond);

FundamentalMatrix f_from_pencil(const PencilHomography& h);

double symmetric_epipolar_distance(const FundamentalMatrix& f, const HomPoint2& x, const HomPoint2& x_prime);

/// Right (camera A) and left (camera B) null vectors. Throws InvariantViolationError unless rank 2.
std::pair<HomPoint2, HomPoint2> epipoles_of(const FundamentalMatrix& f);

/// Sign-resolved ||f1/|f1| -+ f2/|f2|||_F.
double normalized_frobenius_distance(const FundamentalMatrix& f1, const FundamentalMatrix& f2);

/// Angle between two homogeneous vectors up to scale and sign, in radians.
double projective_angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Three rows of whitespace-separated values, 17 significant digits.
void write_fundamental(std::ostream& out, const FundamentalMatrix& f);
FundamentalMatrix read_fundamental(std::istream& in);

}  // namespace epiline
