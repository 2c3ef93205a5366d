// Deterministic pinhole-camera world: planar robot poses, a point-cloud
// scene, exact projections and fundamental matrices, a disk-splat renderer
// and labeled correspondence sampling. Everything downstream is tested
// against this module's ground truth.
#pragma once

#include "drnwm/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace drnwm::world {

inline constexpr double kCameraHeight = 1.0;     // meters above the ground plane
inline constexpr double kMinDepth = 0.05;        // meters
inline constexpr double kBackground = 0.1;
inline constexpr double kSplatRadius = 2.0;      // pixels

struct Bounds {
  Eigen::Vector3d min{-2.0, -6.0, 0.0};
  Eigen::Vector3d max{14.0, 6.0, 2.5};

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct ScenePoint {
  Eigen::Vector3d position;
  double intensity = 1.0;
};

struct Scene {
  std::vector<ScenePoint> points;
  Bounds bounds;
};

struct CameraIntrinsics {
  double fx = 112.0;
  double fy = 112.0;
  double cx = 112.0;
  double cy = 112.0;
  int width = 224;
  int height = 224;

  Eigen::Matrix3d matrix() const;
  void validate() const;
};

/// Planar robot pose; the camera sits kCameraHeight above (x, y) looking
/// along the heading.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

/// Motion expressed in the robot frame: dx forward, dy left, then dyaw.
struct Action {
  double dx = 0.0;
  double dy = 0.0;
  double dyaw = 0.0;
};

double wrap_angle(double a);

Pose apply_action(const Pose& p, const Action& a);
Pose apply_actions(const Pose& p, std::span<const Action> seq);
Action invert_action(const Action& a);
/// Single action equivalent to applying `first` then `second`.
Action compose_actions(const Action& first, const Action& second);
/// Reversed order, each step inverted: applying seq then the result is the
/// identity on poses.
std::vector<Action> invert_action_sequence(std::span<const Action> seq);
/// Action taking `from` to `to`.
Action relative_action(const Pose& from, const Pose& to);

/// World-to-camera rotation (rows: right, down, forward) and camera center.
Eigen::Matrix3d camera_rotation(const Pose& p);
Eigen::Vector3d camera_center(const Pose& p);

struct Projection {
  geometry::HomoPoint2 pixel;
  double depth = 0.0;
  bool visible = false;
};

Projection project(const CameraIntrinsics& intr, const Pose& pose, const Eigen::Vector3d& X);

/// F with x_B^T F x_A = 0 for every scene point seen from poses A and B.
geometry::FundamentalMatrix oracle_fundamental(const CameraIntrinsics& intr, const Pose& a,
                                               const Pose& b);

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // row-major, intensities in [0, 1]

  Image() = default;
  Image(int w, int h, double fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Image&) const = default;
};

double image_mse(const Image& a, const Image& b);

struct Frame {
  Image image;
  Pose pose;
  int step = 0;
  bool predicted = false;
};

Image render(const Scene& scene, const CameraIntrinsics& intr, const Pose& pose);

struct CorrespondenceOptions {
  double noise_px = 0.0;
  double outlier_rate = 0.0;
  std::size_t max_pairs = 0;  // 0 keeps every co-visible point
  double invalid_rate = 0.0;  // fraction flagged as unreliable image regions
  // Replacement points are redrawn until their Sampson distance (sqrt of the
  // Sampson error) under the true geometry is at least this large, so a
  // labeled outlier is never geometrically consistent by accident.
  double outlier_margin_px = 6.0;
  std::uint64_t seed = 0;
};

struct LabeledCorrespondences {
  std::vector<geometry::Correspondence> corrs;
  std::vector<bool> outlier;
  std::vector<std::size_t> point_index;  // scene point behind each pair
};

LabeledCorrespondences sample_correspondences(const Scene& scene, const CameraIntrinsics& intr,
                                              const Pose& a, const Pose& b,
                                              const CorrespondenceOptions& opts);

Scene make_random_scene(std::uint64_t seed, std::size_t n_points, const Bounds& bounds = {});

Scene load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const Scene& scene);
Scene parse_scene(const std::string& text);
std::string format_scene(const Scene& scene);

}  // namespace drnwm::world
