// Geometric, trajectory and pixel-drift metrics.
#pragma once

#include "drnwm/geometry.hpp"
#include "drnwm/rollout.hpp"
#include "drnwm/synthetic_world.hpp"

#include <span>
#include <string>
#include <vector>

namespace drnwm::metrics {

inline constexpr double kPsnrCap = 99.0;

struct EpipolarStats {
  double mean_ed = 0.0;  // px
  double mean_se = 0.0;
  int count = 0;
};

/// Mean distance of x' to the line F x and mean Sampson error over the valid
/// correspondences (a = x, b = x').
EpipolarStats epipolar_stats(std::span<const geometry::Correspondence> corrs,
                             const geometry::FundamentalMatrix& f);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

using Trajectory = std::vector<Point2>;

Trajectory positions(std::span<const world::Pose> poses);

struct TrajectoryErrors {
  double ate = 0.0;
  double fde = 0.0;
  double rpe = 0.0;
};

TrajectoryErrors trajectory_errors(const Trajectory& pred, const Trajectory& gt);

/// -10 log10(mse) for unit-range images, capped at kPsnrCap.
double psnr(double mse);

struct DriftCurve {
  std::string strategy;
  std::vector<int> horizon;  // steps
  std::vector<double> mse;
  std::vector<double> psnr;

  void validate() const;
};

/// Per-step pixel MSE and PSNR of a rollout against the ground-truth frames.
DriftCurve drift_curve(const rollout::RolloutResult& result,
                       std::span<const world::Image> oracle, const std::string& strategy);

/// Elementwise mean MSE over curves on the same horizons; PSNR recomputed
/// from the mean MSE.
DriftCurve mean_curve(std::span<const DriftCurve> curves);

/// Restricts a curve to the listed horizons.
DriftCurve bucket(const DriftCurve& curve, std::span<const int> horizons);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace drnwm::metrics
