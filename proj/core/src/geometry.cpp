#include "drnwm/geometry.hpp"

#include "drnwm/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace drnwm::geometry {

namespace {

constexpr double kPointAtInfinity = 1e-12;
constexpr int kPolishIterations = 50;

Eigen::Matrix3d enforce_rank2(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = svd.singularValues();
  s(2) = 0.0;
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

// Similarity taking the points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d hartley_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());

  double mean_dist = 0.0;
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d d = p - centroid;
    mean_dist += d.norm();
    scatter += d * d.transpose();
  }
  mean_dist /= static_cast<double>(pts.size());
  if (mean_dist < 1e-12) {
    throw DegenerateGeometry("eight-point: all points coincide");
  }
  // Collinear points leave the scatter matrix rank-deficient.
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  const Eigen::Vector2d ev = eig.eigenvalues();
  if (ev(0) <= 1e-12 * ev(1)) {
    throw DegenerateGeometry("eight-point: points are collinear");
  }

  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * centroid.x(),
       0.0, s, -s * centroid.y(),
       0.0, 0.0, 1.0;
  return t;
}

}  // namespace

HomoPoint2 HomoPoint2::normalized() const {
  if (std::abs(w) <= kPointAtInfinity) {
    throw DegenerateGeometry("homogeneous point at infinity cannot be normalized");
  }
  return {x / w, y / w, 1.0};
}

Pixel HomoPoint2::pixel() const {
  const HomoPoint2 n = normalized();
  return {n.x, n.y};
}

FundamentalMatrix::FundamentalMatrix(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) throw InvalidArgument("fundamental matrix has non-finite entries");
  Eigen::Matrix3d r = enforce_rank2(m);
  const double norm = r.norm();
  if (norm < 1e-300) throw DegenerateGeometry("fundamental matrix is zero after rank-2 projection");
  m_ = r / norm;
}

EpipolarLine project_epipolar_line(const FundamentalMatrix& f, const HomoPoint2& p) {
  if (p.is_zero()) throw InvalidArgument("homogeneous point (0,0,0) is not a point");
  const Eigen::Vector3d l = f.matrix() * p.vec();
  if (l.cwiseAbs().maxCoeff() < 1e-15) {
    throw DegenerateGeometry("point coincides with the epipole; epipolar line undefined");
  }
  return EpipolarLine::from_vector(l);
}

HomoPoint2 intersect_lines(const EpipolarLine& l1, const EpipolarLine& l2) {
  const Eigen::Vector3d v1 = l1.vec();
  const Eigen::Vector3d v2 = l2.vec();
  const double scale = v1.norm() * v2.norm();
  if (scale == 0.0) throw InvalidArgument("intersect_lines: zero line");
  const Eigen::Vector3d z = v1.cross(v2);
  if (z.norm() <= 1e-12 * scale) {
    throw DegenerateGeometry("intersect_lines: lines are identical; no unique intersection");
  }
  return HomoPoint2::from_vector(z);
}

double point_line_distance(const EpipolarLine& l, const HomoPoint2& p) {
  const double n2 = l.a * l.a + l.b * l.b;
  if (n2 <= 1e-18) throw DegenerateGeometry("point_line_distance: line has no direction (a=b=0)");
  const HomoPoint2 q = p.normalized();
  return std::abs(l.a * q.x + l.b * q.y + l.c) / std::sqrt(n2);
}

double sampson_error(const FundamentalMatrix& f, const HomoPoint2& x, const HomoPoint2& xp) {
  const Eigen::Vector3d a = x.normalized().vec();
  const Eigen::Vector3d b = xp.normalized().vec();
  const Eigen::Matrix3d& m = f.matrix();
  const Eigen::Vector3d fx = m * a;
  const Eigen::Vector3d ftxp = m.transpose() * b;
  const double denom = fx(0) * fx(0) + fx(1) * fx(1) + ftxp(0) * ftxp(0) + ftxp(1) * ftxp(1);
  if (denom <= 1e-18) throw DegenerateGeometry("sampson_error: both points map to epipoles");
  const double num = b.dot(fx);
  return num * num / denom;
}

namespace {

// Normalized eight-point fit; each design row is scaled by its weight.
FundamentalMatrix fit_8pt(std::span<const Correspondence> corrs, std::span<const double> weights) {
  std::vector<Eigen::Vector2d> pa;
  std::vector<Eigen::Vector2d> pb;
  std::vector<double> w;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto& c = corrs[i];
    if (!c.valid) continue;
    pa.emplace_back(c.a.x, c.a.y);
    pb.emplace_back(c.b.x, c.b.y);
    w.push_back(weights.empty() ? 1.0 : weights[i]);
  }
  if (pa.size() < kMinCorrespondences) {
    throw InvalidArgument("eight-point: need at least 8 valid correspondences, got " +
                          std::to_string(pa.size()));
  }
  const Eigen::Matrix3d ta = hartley_transform(pa);
  const Eigen::Matrix3d tb = hartley_transform(pb);

  Eigen::MatrixXd design(static_cast<Eigen::Index>(pa.size()), 9);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const Eigen::Vector3d u = ta * pa[i].homogeneous();
    const Eigen::Vector3d v = tb * pb[i].homogeneous();
    design.row(static_cast<Eigen::Index>(i)) << v.x() * u.x(), v.x() * u.y(), v.x(),
        v.y() * u.x(), v.y() * u.y(), v.y(), u.x(), u.y(), 1.0;
    design.row(static_cast<Eigen::Index>(i)) *= w[i];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // A one-dimensional null space needs the eighth singular value to be
  // well away from zero.
  if (sv(7) <= 1e-12 * sv(0)) {
    throw DegenerateGeometry("eight-point: degenerate configuration (null space dimension > 1)");
  }
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Eigen::Matrix3d fn;
  fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  fn = enforce_rank2(fn);
  return FundamentalMatrix(tb.transpose() * fn * ta);
}

}  // namespace

FundamentalMatrix estimate_fundamental_8pt(std::span<const Correspondence> corrs) {
  return fit_8pt(corrs, {});
}

namespace {

std::vector<std::size_t> collect_inliers(const FundamentalMatrix& f,
                                         std::span<const Correspondence> corrs,
                                         double threshold_sq) {
  std::vector<std::size_t> inliers;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto& c = corrs[i];
    if (!c.valid) continue;
    double se;
    try {
      se = sampson_error(f, HomoPoint2::from_pixel(c.a), HomoPoint2::from_pixel(c.b));
    } catch (const DegenerateGeometry&) {
      continue;
    }
    if (se <= threshold_sq) inliers.push_back(i);
  }
  return inliers;
}

}  // namespace

RansacResult ransac_fundamental(std::span<const Correspondence> corrs, double threshold_px,
                                int max_iters, std::uint64_t seed) {
  if (!(threshold_px > 0.0)) throw InvalidArgument("ransac: threshold must be positive");
  const double threshold_sq = threshold_px * threshold_px;

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (corrs[i].valid) pool.push_back(i);
  }
  RansacResult best;
  if (pool.size() < kMinCorrespondences) return best;

  std::mt19937_64 rng(seed);
  std::vector<Correspondence> sample(kMinCorrespondences);
  for (int it = 0; it < max_iters; ++it) {
    // Partial Fisher-Yates draw of 8 distinct indices.
    for (std::size_t k = 0; k < kMinCorrespondences; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
      sample[k] = corrs[pool[k]];
    }
    try {
      FundamentalMatrix f = estimate_fundamental_8pt(sample);
      auto inliers = collect_inliers(f, corrs, threshold_sq);
      if (inliers.size() > best.inliers.size()) {
        best.f = f;
        best.inliers = std::move(inliers);
      }
    } catch (const DegenerateGeometry&) {
      continue;
    }
  }

  if (best.inliers.size() < kMinCorrespondences) return RansacResult{};

  // Local optimization: iteratively reweighted fit on the consensus set that
  // minimizes the summed epipolar distance, then re-collect at the threshold.
  std::vector<Correspondence> consensus;
  consensus.reserve(best.inliers.size());
  for (std::size_t i : best.inliers) consensus.push_back(corrs[i]);
  std::vector<double> weights(consensus.size(), 1.0);
  FundamentalMatrix f = *best.f;
  try {
    for (int it = 0; it < kPolishIterations; ++it) {
      for (std::size_t k = 0; k < consensus.size(); ++k) {
        const Eigen::Vector3d a = HomoPoint2::from_pixel(consensus[k].a).vec();
        const Eigen::Vector3d b = HomoPoint2::from_pixel(consensus[k].b).vec();
        const Eigen::Vector3d fx = f.matrix() * a;
        const Eigen::Vector3d ftb = f.matrix().transpose() * b;
        const double denom = fx.head<2>().squaredNorm() + ftb.head<2>().squaredNorm();
        const double r = b.dot(fx);
        const double dist = std::sqrt(r * r / std::max(denom, 1e-300));
        weights[k] = 1.0 / std::sqrt(std::max(denom, 1e-300) * std::max(dist, 1e-9));
      }
      f = fit_8pt(consensus, weights);
    }
    auto inliers = collect_inliers(f, corrs, threshold_sq);
    if (inliers.size() >= kMinCorrespondences) {
      best.f = f;
      best.inliers = std::move(inliers);
    }
  } catch (const DegenerateGeometry&) {
  }
  return best;
}

std::vector<Correspondence> filter_matches(std::span<const Correspondence> corrs,
                                           double tau_match) {
  std::vector<Correspondence> out;
  std::copy_if(corrs.begin(), corrs.end(), std::back_inserter(out),
               [&](const Correspondence& c) { return c.valid && c.confidence > tau_match; });
  return out;
}

}  // namespace drnwm::geometry
