// Homogeneous two-view geometry: epipolar lines, line intersections,
// point-level epipolar errors and fundamental-matrix estimation.
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace drnwm::geometry {

struct Pixel {
  double x = 0.0;
  double y = 0.0;
};

/// Homogeneous image point. With w == 1 the coordinates are pixels.
struct HomoPoint2 {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;

  static HomoPoint2 from_pixel(Pixel p) { return {p.x, p.y, 1.0}; }
  static HomoPoint2 from_vector(const Eigen::Vector3d& v) {
    return {v.x(), v.y(), v.z()};
  }

  Eigen::Vector3d vec() const { return {x, y, w}; }
  bool is_zero() const { return x == 0.0 && y == 0.0 && w == 0.0; }

  /// Divides through by w. Throws DegenerateGeometry for points at infinity
  /// (|w| <= 1e-12).
  HomoPoint2 normalized() const;
  Pixel pixel() const;
};

/// Line {p : a*p.x + b*p.y + c*p.w = 0}.
struct EpipolarLine {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  static EpipolarLine from_vector(const Eigen::Vector3d& v) {
    return {v.x(), v.y(), v.z()};
  }
  Eigen::Vector3d vec() const { return {a, b, c}; }
};

/// Rank-2, unit-Frobenius-norm 3x3 matrix mapping points of view A to
/// epipolar lines of view B (x_B^T F x_A = 0). The sign is left free.
class FundamentalMatrix {
 public:
  /// Enforces rank 2 by zeroing the smallest singular value, then scales to
  /// unit Frobenius norm. Throws DegenerateGeometry when the rank-2
  /// projection vanishes.
  explicit FundamentalMatrix(const Eigen::Matrix3d& m);

  const Eigen::Matrix3d& matrix() const { return m_; }
  FundamentalMatrix transposed() const { return FundamentalMatrix(m_.transpose()); }

 private:
  Eigen::Matrix3d m_;
};

struct Correspondence {
  Pixel a;
  Pixel b;
  double confidence = 1.0;
  bool valid = true;
};

struct RansacResult {
  std::optional<FundamentalMatrix> f;
  std::vector<std::size_t> inliers;

  std::size_t n() const { return inliers.size(); }
};

inline constexpr int kDefaultRansacIterations = 2000;
inline constexpr std::size_t kMinCorrespondences = 8;

EpipolarLine project_epipolar_line(const FundamentalMatrix& f, const HomoPoint2& p);

/// Cross product of two lines. Parallel lines give a point at infinity
/// (w == 0); identical lines throw DegenerateGeometry.
HomoPoint2 intersect_lines(const EpipolarLine& l1, const EpipolarLine& l2);

double point_line_distance(const EpipolarLine& l, const HomoPoint2& p);

/// First-order geometric error (x'^T F x)^2 / (|Fx|_12^2 + |F^T x'|_12^2),
/// in squared pixels.
double sampson_error(const FundamentalMatrix& f, const HomoPoint2& x, const HomoPoint2& xp);

/// Normalized eight-point algorithm over the valid correspondences.
FundamentalMatrix estimate_fundamental_8pt(std::span<const Correspondence> corrs);

/// Fixed-budget RANSAC scored by Sampson error against threshold_px^2. The
/// winning model is refined by reweighted eight-point fits on its consensus
/// set before the inliers are collected.
RansacResult ransac_fundamental(std::span<const Correspondence> corrs, double threshold_px,
                                int max_iters, std::uint64_t seed);

/// Keeps valid matches with confidence strictly above tau_match.
std::vector<Correspondence> filter_matches(std::span<const Correspondence> corrs,
                                           double tau_match);

}  // namespace drnwm::geometry
