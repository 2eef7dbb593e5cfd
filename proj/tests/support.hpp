#pragma once

#include <vector>

#include <Eigen/Dense>

#include "epiline/barcode.hpp"
#include "epiline/matching.hpp"
#include "epiline/simulator.hpp"

namespace epiline::testing {

inline SilhouetteVideo random_video(int width, int height, int frames, double density, Rng& rng) {
  SilhouetteVideo v(width, height, frames);
  for (int f = 0; f < frames; ++f)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (uniform01(rng) < density) v.set(f, x, y, true);
  return v;
}

inline MotionBarcode random_barcode(int length, double density, Rng& rng) {
  MotionBarcode b(length);
  for (int i = 0; i < length; ++i)
    if (uniform01(rng) < density) b.set(i);
  return b;
}

/// Non-constant barcode with a random ones density.
inline MotionBarcode random_informative_barcode(int length, Rng& rng) {
  for (;;) {
    MotionBarcode b = random_barcode(length, uniform(rng, 0.05, 0.95), rng);
    if (b.ones_count() > 0 && b.ones_count() < length) return b;
  }
}

inline HomLine2 random_line_through_rect(const ImageRect& rect, Rng& rng) {
  for (;;) {
    const auto p = HomPoint2::from_pixel(uniform(rng, 0, rect.width), uniform(rng, 0, rect.height));
    const double a = uniform(rng, 0, 3.141592653589793);
    const auto q = HomPoint2::from_pixel(p.pixel() + Eigen::Vector2d(std::cos(a), std::sin(a)));
    return line_through(p, q).normalized();
  }
}

/// Two cameras looking at the origin from random directions at 6-10 units.
struct Rig {
  CameraModel a;
  CameraModel b;
  FundamentalMatrix f;
};

inline Eigen::Vector3d random_camera_center(Rng& rng) {
  const double az = uniform(rng, 0, 6.283185307179586);
  const double el = uniform(rng, 0.1, 0.8);
  const double r = uniform(rng, 6, 10);
  return r * Eigen::Vector3d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
}

inline Rig random_rig(Rng& rng, const ImageRect& image = {640, 480}) {
  for (;;) {
    Rig rig;
    const Eigen::Vector3d ca = random_camera_center(rng), cb = random_camera_center(rng);
    if ((ca - cb).norm() < 2.0) continue;
    const Eigen::Vector3d jitter_a(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3));
    const Eigen::Vector3d jitter_b(uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3));
    rig.a = CameraModel::look_at(ca, jitter_a, uniform(rng, 500, 900), image);
    rig.b = CameraModel::look_at(cb, jitter_b, uniform(rng, 500, 900), image);
    rig.f = ground_truth_f(rig.a, rig.b);
    return rig;
  }
}

inline BorderLine border_line_of(const HomLine2& l, const ImageRect& rect, int id) {
  const auto seg = clip_line_to_rect(l, rect);
  BorderLine b;
  b.p = seg->p;
  b.q = seg->q;
  b.line = l.normalized();
  b.id = id;
  return b;
}

/// Exact corresponding epipolar line pairs through random common 3D points; score 1.
inline std::vector<CandidatePair> exact_epipolar_pairs(const Rig& rig, int count, Rng& rng) {
  const auto [e, e_prime] = epipoles_of(rig.f);
  const Volume volume{{-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}};
  std::vector<CandidatePair> out;
  for (int attempt = 0; attempt < 1000 * count && static_cast<int>(out.size()) < count; ++attempt) {
    const Eigen::Vector3d x(uniform(rng, volume.lo.x(), volume.hi.x()), uniform(rng, volume.lo.y(), volume.hi.y()),
                            uniform(rng, volume.lo.z(), volume.hi.z()));
    const HomPoint2 xa = project(rig.a, x), xb = project(rig.b, x);
    const HomLine2 la{xa.h.cross(e.h)};
    const HomLine2 lb{xb.h.cross(e_prime.h)};
    if (la.h.head<2>().norm() < 1e-12 || lb.h.head<2>().norm() < 1e-12) continue;
    if (!clip_line_to_rect(la, rig.a.image) || !clip_line_to_rect(lb, rig.b.image)) continue;
    const int id = static_cast<int>(out.size());
    out.push_back({border_line_of(la, rig.a.image, id), border_line_of(lb, rig.b.image, id), 1.0});
  }
  return out;
}

/// Correspondences from 3D points inside the common view of both cameras.
inline std::vector<std::pair<HomPoint2, HomPoint2>> rig_correspondences(const Rig& rig, int count, Rng& rng) {
  return ground_truth_correspondences(rig.a, rig.b, Volume{{-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}}, count, rng);
}

}  // namespace epiline::testing
