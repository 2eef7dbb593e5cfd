#include "epiline/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "epiline/error.hpp"

namespace epiline {

namespace {

constexpr double kNearDepth = 1e-3;
constexpr int kPathAttempts = 100;
constexpr double kMinPathImageFraction = 0.35;

// Length of the in-image part of a world segment's projection, as a fraction of image width.
double visible_fraction(const CameraModel& cam, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  constexpr int kSamples = 129;
  double t_lo = 2, t_hi = -1;
  for (int i = 0; i < kSamples; ++i) {
    const double t = static_cast<double>(i) / (kSamples - 1);
    const Eigen::Vector3d x = a + t * (b - a);
    if (cam.depth(x) <= kNearDepth) continue;
    const Eigen::Vector2d p = project(cam, x).pixel();
    if (p.x() < 0 || p.y() < 0 || p.x() > cam.image.width || p.y() > cam.image.height) continue;
    t_lo = std::min(t_lo, t);
    t_hi = std::max(t_hi, t);
  }
  if (t_hi < t_lo) return 0.0;
  const Eigen::Vector3d xa = a + t_lo * (b - a), xb = a + t_hi * (b - a);
  return (project(cam, xa).pixel() - project(cam, xb).pixel()).norm() / cam.image.width;
}

// Reflects x into [lo, hi] (triangle wave), giving bouncing motion.
double fold(double x, double lo, double hi) {
  const double len = hi - lo;
  if (len <= 0) return lo;
  double t = std::fmod(x - lo, 2.0 * len);
  if (t < 0) t += 2.0 * len;
  return t <= len ? lo + t : lo + 2.0 * len - t;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(normal01(rng), normal01(rng), normal01(rng), normal01(rng));
  return q.normalized().toRotationMatrix();
}

Eigen::Vector3d random_direction(Rng& rng) {
  Eigen::Vector3d d(normal01(rng), normal01(rng), normal01(rng));
  return d.normalized();
}

Eigen::Vector3d random_point(const Volume& v, Rng& rng) {
  return {uniform(rng, v.lo.x(), v.hi.x()), uniform(rng, v.lo.y(), v.hi.y()), uniform(rng, v.lo.z(), v.hi.z())};
}

bool visible(const CameraModel& cam, const Eigen::Vector3d& x) {
  if (cam.depth(x) <= kNearDepth) return false;
  const Eigen::Vector2d p = project(cam, x).pixel();
  return p.x() >= 0 && p.x() <= cam.image.width && p.y() >= 0 && p.y() <= cam.image.height;
}

// Andrew's monotone chain; counter-clockwise in image coordinates, collinear points dropped.
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y(); });
  if (pts.size() < 3) return pts;
  const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Clips the segment [a, b] of the shared 3D path to a box; returns false if it misses.
bool clip_to_box(const Eigen::Vector3d& point, const Eigen::Vector3d& dir, const Eigen::Vector3d& lo,
                 const Eigen::Vector3d& hi, Eigen::Vector3d& a, Eigen::Vector3d& b) {
  double t0 = -1e300, t1 = 1e300;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(dir[i]) < 1e-12) {
      if (point[i] < lo[i] || point[i] > hi[i]) return false;
      continue;
    }
    double ta = (lo[i] - point[i]) / dir[i], tb = (hi[i] - point[i]) / dir[i];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 <= t0) return false;
  a = point + t0 * dir;
  b = point + t1 * dir;
  return true;
}

}  // namespace

CameraModel CameraModel::look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target, double focal_px,
                                 const ImageRect& image) {
  CameraModel cam;
  const Eigen::Vector3d forward = (target - center).normalized();
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = forward.cross(Eigen::Vector3d::UnitX());
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  cam.rotation.row(0) = right;
  cam.rotation.row(1) = down;
  cam.rotation.row(2) = forward;
  cam.intrinsics << focal_px, 0, 0.5 * image.width, 0, focal_px, 0.5 * image.height, 0, 0, 1;
  cam.center = center;
  cam.image = image;
  return cam;
}

Matrix34d CameraModel::projection() const {
  Matrix34d p;
  p.leftCols<3>() = rotation;
  p.col(3) = -rotation * center;
  return intrinsics * p;
}

void CameraModel::validate() const {
  if (!(rotation.transpose() * rotation).isIdentity(1e-12) || std::abs(rotation.determinant() - 1.0) > 1e-12)
    throw InvariantViolationError("camera rotation is not a proper orthonormal matrix");
  if (intrinsics(0, 0) <= 0 || intrinsics(1, 1) <= 0) throw InvariantViolationError("camera focal length must be positive");
  if (image.width <= 0 || image.height <= 0) throw InvariantViolationError("camera image must be non-empty");
}

Eigen::Vector3d Trajectory::position(int frame) const {
  if (kind == Kind::path) {
    const double len = (end - start).norm();
    const double s = fold(phase * len + speed * frame, 0.0, len);
    return start + (len > 0 ? s / len : 0.0) * (end - start);
  }
  const Eigen::Vector3d raw = start + velocity * frame;
  return {fold(raw.x(), lo.x(), hi.x()), fold(raw.y(), lo.y(), hi.y()), fold(raw.z(), lo.z(), hi.z())};
}

std::array<Eigen::Vector3d, 8> Cube::corners(int frame) const {
  const Eigen::Vector3d c = trajectory.position(frame);
  std::array<Eigen::Vector3d, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Eigen::Vector3d local((i & 1) ? half_extent : -half_extent, (i & 2) ? half_extent : -half_extent,
                                (i & 4) ? half_extent : -half_extent);
    out[i] = c + orientation * local;
  }
  return out;
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::generic: return "generic";
    case ScenarioKind::straight_path: return "straight_path";
    case ScenarioKind::epipolar_plane_degenerate: return "epipolar_plane_degenerate";
  }
  return "generic";
}

ScenarioKind scenario_from_string(const std::string& name) {
  if (name == "generic") return ScenarioKind::generic;
  if (name == "straight_path") return ScenarioKind::straight_path;
  if (name == "epipolar_plane_degenerate") return ScenarioKind::epipolar_plane_degenerate;
  throw ConfigError("unknown scenario kind: " + name);
}

ScenarioConfig ScenarioConfig::thin_cubes() {
  ScenarioConfig c;
  c.half_extent_min *= 0.5;
  c.half_extent_max *= 0.5;
  return c;
}

HomPoint2 project(const CameraModel& cam, const Eigen::Vector3d& x_world) {
  const Eigen::Vector3d rel = x_world - cam.center;
  if (rel.norm() == 0.0) throw DomainError("cannot project the camera center");
  return {cam.intrinsics * (cam.rotation * rel)};
}

FundamentalMatrix ground_truth_f(const CameraModel& cam_a, const CameraModel& cam_b) {
  if ((cam_a.center - cam_b.center).norm() < 1e-12) throw ConfigError("degenerate rig: camera centers coincide");
  const Matrix34d pa = cam_a.projection(), pb = cam_b.projection();
  const Eigen::Matrix<double, 4, 3> pa_pinv = pa.transpose() * (pa * pa.transpose()).inverse();
  const Eigen::Vector3d e_prime = pb * cam_a.center.homogeneous();
  return FundamentalMatrix{skew(e_prime) * pb * pa_pinv}.normalized();
}

std::vector<Eigen::Vector2d> cube_silhouette(const CameraModel& cam, const Cube& cube, int frame) {
  const auto world = cube.corners(frame);
  std::array<Eigen::Vector3d, 8> local;
  int in_front = 0;
  for (int i = 0; i < 8; ++i) {
    local[i] = cam.rotation * (world[i] - cam.center);
    in_front += local[i].z() >= kNearDepth;
  }
  if (in_front == 0) return {};
  std::vector<Eigen::Vector3d> kept;
  for (int i = 0; i < 8; ++i)
    if (local[i].z() >= kNearDepth) kept.push_back(local[i]);
  if (in_front < 8) {
    // Edges join corners differing in exactly one bit.
    for (int i = 0; i < 8; ++i)
      for (int bit = 1; bit < 8; bit <<= 1) {
        const int j = i | bit;
        if (j == i) continue;
        const double zi = local[i].z() - kNearDepth, zj = local[j].z() - kNearDepth;
        if ((zi >= 0) != (zj >= 0)) kept.push_back(local[i] + (zi / (zi - zj)) * (local[j] - local[i]));
      }
  }
  std::vector<Eigen::Vector2d> pts;
  for (const auto& p : kept) pts.push_back((cam.intrinsics * p).hnormalized());
  return convex_hull(std::move(pts));
}

void fill_convex_polygon(std::span<const Eigen::Vector2d> polygon, SilhouetteVideo& video, int frame) {
  if (polygon.empty()) return;
  double ymin = polygon[0].y(), ymax = polygon[0].y();
  for (const auto& p : polygon) {
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  const int r0 = std::max(0, static_cast<int>(std::ceil(ymin - 0.5)));
  const int r1 = std::min(video.height() - 1, static_cast<int>(std::floor(ymax - 0.5)));
  const std::size_t n = polygon.size();
  for (int r = r0; r <= r1; ++r) {
    const double yc = r + 0.5;
    double xl = 1e300, xr = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = polygon[i];
      const auto& b = polygon[(i + 1) % n];
      if ((yc < std::min(a.y(), b.y())) || (yc > std::max(a.y(), b.y()))) continue;
      if (a.y() == b.y()) {
        xl = std::min({xl, a.x(), b.x()});
        xr = std::max({xr, a.x(), b.x()});
      } else {
        const double x = a.x() + (yc - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
        xl = std::min(xl, x);
        xr = std::max(xr, x);
      }
    }
    if (xl > xr) continue;
    const int c0 = std::max(0, static_cast<int>(std::ceil(xl - 0.5)));
    const int c1 = std::min(video.width() - 1, static_cast<int>(std::floor(xr - 0.5)));
    for (int c = c0; c <= c1; ++c) video.set(frame, c, r, true);
  }
}

namespace {

void render_into(const CameraModel& cam, const CubeScene& scene, int frame, SilhouetteVideo& video, int slot) {
  for (const auto& cube : scene.cubes) fill_convex_polygon(cube_silhouette(cam, cube, frame), video, slot);
}

void apply_flip_noise(SilhouetteVideo& video, int frame, double p, std::uint64_t seed) {
  if (p <= 0) return;
  Rng rng(substream_seed(seed, static_cast<std::uint64_t>(frame)));
  const double total = static_cast<double>(video.width()) * video.height();
  const double log_q = std::log1p(-std::min(p, 1.0 - 1e-12));
  double pos = -1;
  for (;;) {
    double u = uniform01(rng);
    while (u <= 0) u = uniform01(rng);
    pos += 1.0 + std::floor(std::log(u) / log_q);
    if (pos >= total) break;
    const auto idx = static_cast<std::int64_t>(pos);
    const int x = static_cast<int>(idx % video.width()), y = static_cast<int>(idx / video.width());
    video.set(frame, x, y, !video.get(frame, x, y));
  }
}

}  // namespace

SilhouetteVideo render_frame(const CameraModel& cam, const CubeScene& scene, int frame) {
  if (frame < 0 || frame >= scene.num_frames) throw DomainError("render_frame: frame index out of range");
  SilhouetteVideo video(cam.image.width, cam.image.height, 1);
  render_into(cam, scene, frame, video, 0);
  return video;
}

SilhouetteVideo render_video(const CameraModel& cam, const CubeScene& scene, Exec exec, double flip_noise,
                             std::uint64_t noise_seed) {
  SilhouetteVideo video(cam.image.width, cam.image.height, scene.num_frames);
  if (exec == Exec::serial) {
    for (int f = 0; f < scene.num_frames; ++f) {
      render_into(cam, scene, f, video, f);
      apply_flip_noise(video, f, flip_noise, noise_seed);
    }
    return video;
  }
  // Frames occupy disjoint word ranges, so they can be written concurrently.
#pragma omp parallel for schedule(dynamic, 8)
  for (int f = 0; f < scene.num_frames; ++f) {
    render_into(cam, scene, f, video, f);
    apply_flip_noise(video, f, flip_noise, noise_seed);
  }
  return video;
}

std::vector<CameraModel> ring_cameras(const ScenarioConfig& config) {
  if (config.num_cameras < 2) throw ConfigError("need at least two cameras");
  const Eigen::Vector3d target = 0.5 * (config.volume.lo + config.volume.hi);
  const ImageRect image{config.width, config.height};
  std::vector<CameraModel> cams;
  const double arc = config.ring_arc_deg * std::numbers::pi / 180.0;
  for (int i = 0; i < config.num_cameras; ++i) {
    const double azimuth = arc * i / std::max(1, config.num_cameras - 1) + 0.1;
    const double height = target.z() + 1.5 + 0.6 * (i % 3);
    const Eigen::Vector3d center(config.ring_radius * std::cos(azimuth), config.ring_radius * std::sin(azimuth), height);
    cams.push_back(CameraModel::look_at(center, target, config.focal_px, image));
  }
  return cams;
}

CubeScene generate_scene(const ScenarioConfig& config, const std::vector<CameraModel>& cameras,
                         std::vector<Eigen::Vector3d>* path_out) {
  Rng rng(substream_seed(config.seed, 0x5ce7e));
  CubeScene scene;
  scene.num_frames = config.num_frames;
  scene.bounds = config.volume;
  const int count = config.cube_count_min +
                    static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(config.cube_count_max - config.cube_count_min + 1)));
  int on_path = 0;
  if (config.kind == ScenarioKind::straight_path)
    on_path = std::min(count, static_cast<int>(std::ceil(config.path_fraction * count - 1e-9)));
  if (config.kind == ScenarioKind::epipolar_plane_degenerate) on_path = count;

  // Shared path through the middle of the volume.
  Eigen::Vector3d path_a = Eigen::Vector3d::Zero(), path_b = Eigen::Vector3d::Zero();
  if (on_path > 0) {
    const Eigen::Vector3d margin = Eigen::Vector3d::Constant(config.half_extent_max);
    const Eigen::Vector3d lo = config.volume.lo + margin, hi = config.volume.hi - margin;
    const Eigen::Vector3d mid = 0.5 * (lo + hi);
    // A straight path seen end-on by some camera is a blob there, not a line; redraw it
    // (keeping the longest-looking one) until every camera sees a long enough segment.
    double best_visible = -1.0;
    for (int attempt = 0; attempt < kPathAttempts && best_visible < kMinPathImageFraction; ++attempt) {
      const Eigen::Vector3d anchor =
          mid + 0.25 * (hi - lo).cwiseProduct(Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)));
      Eigen::Vector3d dir;
      if (config.kind == ScenarioKind::epipolar_plane_degenerate) {
        const Eigen::Vector3d normal = (cameras[1].center - cameras[0].center).cross(anchor - cameras[0].center);
        dir = Eigen::Vector3d::UnitZ().cross(normal);
        if (dir.norm() < 1e-9) dir = cameras[1].center - cameras[0].center;
      } else {
        const double heading = uniform(rng, 0, std::numbers::pi);
        dir = Eigen::Vector3d(std::cos(heading), std::sin(heading), uniform(rng, -0.15, 0.15));
      }
      dir.normalize();
      Eigen::Vector3d a, b;
      if (!clip_to_box(anchor, dir, lo, hi, a, b)) continue;
      double visible = config.kind == ScenarioKind::epipolar_plane_degenerate ? 1.0 : INFINITY;
      if (config.kind == ScenarioKind::straight_path)
        for (const auto& cam : cameras) visible = std::min(visible, visible_fraction(cam, a, b));
      if (visible > best_visible) {
        best_visible = visible;
        path_a = a;
        path_b = b;
      }
    }
    if (best_visible < 0) throw ConfigError("shared path misses the scene volume");
    if (path_out) *path_out = {path_a, path_b};
  }

  for (int i = 0; i < count; ++i) {
    Cube cube;
    cube.half_extent = uniform(rng, config.half_extent_min, config.half_extent_max);
    cube.orientation = random_rotation(rng);
    const double speed = uniform(rng, config.speed_min, config.speed_max);
    if (i < on_path) {
      cube.trajectory.kind = Trajectory::Kind::path;
      cube.trajectory.start = path_a;
      cube.trajectory.end = path_b;
      cube.trajectory.phase = uniform01(rng);
      cube.trajectory.speed = speed;
    } else {
      const Eigen::Vector3d margin = Eigen::Vector3d::Constant(cube.half_extent);
      cube.trajectory.lo = config.volume.lo + margin;
      cube.trajectory.hi = config.volume.hi - margin;
      cube.trajectory.start = random_point(Volume{cube.trajectory.lo, cube.trajectory.hi}, rng);
      cube.trajectory.velocity = speed * random_direction(rng);
    }
    scene.cubes.push_back(cube);
  }
  return scene;
}

Simulation simulate(const ScenarioConfig& config, Exec exec) {
  if (config.num_frames < 1) throw ConfigError("scenario needs at least one frame");
  if (config.cube_count_min < 1 || config.cube_count_max < config.cube_count_min)
    throw ConfigError("cube count range must satisfy 1 <= min <= max");
  if (config.half_extent_min <= 0 || config.half_extent_max < config.half_extent_min)
    throw ConfigError("cube size range must be positive");
  if (config.speed_min < 0 || config.speed_max < config.speed_min) throw ConfigError("invalid speed range");
  Simulation sim;
  sim.config = config;
  sim.cameras = config.cameras.empty() ? ring_cameras(config) : config.cameras;
  if (sim.cameras.size() < 2) throw ConfigError("need at least two cameras");
  for (const auto& cam : sim.cameras) cam.validate();

  for (std::size_t i = 0; i < sim.cameras.size(); ++i)
    for (std::size_t j = i + 1; j < sim.cameras.size(); ++j) {
      Rng probe(substream_seed(config.seed, 0x7157 + i * 131 + j));
      bool shared = false;
      for (int t = 0; t < 20000 && !shared; ++t) {
        const Eigen::Vector3d x = random_point(config.volume, probe);
        shared = visible(sim.cameras[i], x) && visible(sim.cameras[j], x);
      }
      if (!shared)
        throw ConfigError("cameras " + std::to_string(i) + " and " + std::to_string(j) +
                          " have no common viewing volume");
      sim.truths.push_back({static_cast<int>(i), static_cast<int>(j), ground_truth_f(sim.cameras[i], sim.cameras[j])});
    }

  sim.scene = generate_scene(config, sim.cameras, &sim.path);
  for (std::size_t c = 0; c < sim.cameras.size(); ++c)
    sim.videos.push_back(render_video(sim.cameras[c], sim.scene, exec, config.flip_noise,
                                      substream_seed(config.seed, 0xf11b + c)));
  return sim;
}

std::vector<std::pair<HomPoint2, HomPoint2>> ground_truth_correspondences(const CameraModel& cam_a,
                                                                          const CameraModel& cam_b,
                                                                          const Volume& volume, int count, Rng& rng) {
  if (count < 1) throw DomainError("ground_truth_correspondences: count must be >= 1");
  std::vector<std::pair<HomPoint2, HomPoint2>> out;
  const long long max_attempts = 1000LL * count + 100000;
  for (long long attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < count; ++attempt) {
    const Eigen::Vector3d x = random_point(volume, rng);
    if (!visible(cam_a, x) || !visible(cam_b, x)) continue;
    const HomPoint2 xa = project(cam_a, x), xb = project(cam_b, x);
    out.emplace_back(HomPoint2{xa.h / xa.h.z()}, HomPoint2{xb.h / xb.h.z()});
  }
  if (static_cast<int>(out.size()) < count) throw ConfigError("no volume point is visible in both cameras");
  return out;
}

}  // namespace epiline
