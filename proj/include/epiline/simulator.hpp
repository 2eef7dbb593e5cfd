#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "epiline/geometry.hpp"
#include "epiline/mask_io.hpp"
#include "epiline/parallel.hpp"
#include "epiline/random.hpp"

namespace epiline {

using Matrix34d = Eigen::Matrix<double, 3, 4>;

/// Pinhole camera x = K R (X - C). Camera axes: x right, y down, z forward.
struct CameraModel {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  ImageRect image{640, 480};

  /// Camera at `center` looking at `target`, with world +z as up.
  static CameraModel look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target, double focal_px,
                             const ImageRect& image);
  Matrix34d projection() const;
  /// Depth along the optical axis.
  double depth(const Eigen::Vector3d& x_world) const { return (rotation * (x_world - center)).z(); }
  /// Throws InvariantViolationError unless the rotation is orthonormal and focal entries are positive.
  void validate() const;
};

struct Volume {
  Eigen::Vector3d lo{-2.0, -2.0, 0.0};
  Eigen::Vector3d hi{2.0, 2.0, 2.0};
};

/// Straight motion reflecting off the walls of a box, or back and forth along a fixed segment.
struct Trajectory {
  enum class Kind { bouncing, path };
  Kind kind = Kind::bouncing;
  Eigen::Vector3d start = Eigen::Vector3d::Zero();  // bouncing: start position; path: segment end a
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // bouncing only, units per frame
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();  // bouncing bounds for the cube center
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
  Eigen::Vector3d end = Eigen::Vector3d::Zero();  // path: segment end b
  double phase = 0.0;  // path: initial position along the segment in [0, 1]
  double speed = 0.0;  // path: units per frame

  Eigen::Vector3d position(int frame) const;
};

struct Cube {
  double half_extent = 0.25;
  Trajectory trajectory;
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();

  std::array<Eigen::Vector3d, 8> corners(int frame) const;
};

struct CubeScene {
  std::vector<Cube> cubes;
  int num_frames = 0;
  Volume bounds;
};

enum class ScenarioKind { generic, straight_path, epipolar_plane_degenerate };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_from_string(const std::string& name);

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::generic;
  int num_frames = 800;
  int cube_count_min = 5;
  int cube_count_max = 12;
  double half_extent_min = 0.05;
  double half_extent_max = 0.10;
  double speed_min = 0.02;  // world units per frame
  double speed_max = 0.08;
  double path_fraction = 0.8;  // straight_path: share of cubes on the shared line (degenerate: all)
  double flip_noise = 0.0;     // i.i.d. pixel flip probability
  std::uint64_t seed = 1;
  Volume volume;

  // Camera ring used when `cameras` is empty.
  int num_cameras = 2;
  int width = 640;
  int height = 480;
  double focal_px = 700.0;
  double ring_radius = 8.0;
  double ring_arc_deg = 240.0;  // cameras spread evenly over this arc
  std::vector<CameraModel> cameras;

  /// Halves the cube sizes ("thin cubes").
  static ScenarioConfig thin_cubes();
};

struct PairTruth {
  int cam_a = 0;
  int cam_b = 0;
  FundamentalMatrix f;
};

struct Simulation {
  ScenarioConfig config;
  std::vector<CameraModel> cameras;
  CubeScene scene;
  std::vector<SilhouetteVideo> videos;
  std::vector<PairTruth> truths;  // every (i, j) with i < j
  /// Shared 3D path of the straight-path scenarios (segment end points); empty otherwise.
  std::vector<Eigen::Vector3d> path;
};

HomPoint2 project(const CameraModel& cam, const Eigen::Vector3d& x_world);
FundamentalMatrix ground_truth_f(const CameraModel& cam_a, const CameraModel& cam_b);

/// Convex silhouette polygon of one cube in pixel coordinates (near-plane clipped); empty if behind the camera.
std::vector<Eigen::Vector2d> cube_silhouette(const CameraModel& cam, const Cube& cube, int frame);
/// Fills pixels whose centers lie inside (or on) a convex polygon.
void fill_convex_polygon(std::span<const Eigen::Vector2d> polygon, SilhouetteVideo& video, int frame);

/// Binary frame: union of filled cube silhouettes, returned as a one-frame video.
SilhouetteVideo render_frame(const CameraModel& cam, const CubeScene& scene, int frame);
SilhouetteVideo render_video(const CameraModel& cam, const CubeScene& scene, Exec exec = Exec::parallel,
                             double flip_noise = 0.0, std::uint64_t noise_seed = 0);

std::vector<CameraModel> ring_cameras(const ScenarioConfig& config);
CubeScene generate_scene(const ScenarioConfig& config, const std::vector<CameraModel>& cameras,
                         std::vector<Eigen::Vector3d>* path = nullptr);

Simulation simulate(const ScenarioConfig& config, Exec exec = Exec::parallel);

/// Projections of random volume points visible (positive depth, inside the image) in both cameras.
std::vector<std::pair<HomPoint2, HomPoint2>> ground_truth_correspondences(const CameraModel& cam_a,
                                                                          const CameraModel& cam_b,
                                                                          const Volume& volume, int count, Rng& rng);

}  // namespace epiline
