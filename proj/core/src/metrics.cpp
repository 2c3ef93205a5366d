#include "drnwm/metrics.hpp"

#include "drnwm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace drnwm::metrics {

EpipolarStats epipolar_stats(std::span<const geometry::Correspondence> corrs,
                             const geometry::FundamentalMatrix& f) {
  EpipolarStats s;
  double ed = 0.0;
  double se = 0.0;
  for (const auto& c : corrs) {
    if (!c.valid) continue;
    const auto x = geometry::HomoPoint2::from_pixel(c.a);
    const auto xp = geometry::HomoPoint2::from_pixel(c.b);
    ed += geometry::point_line_distance(geometry::project_epipolar_line(f, x), xp);
    se += geometry::sampson_error(f, x, xp);
    ++s.count;
  }
  if (s.count == 0) throw InvalidArgument("epipolar_stats: no valid correspondences");
  s.mean_ed = ed / s.count;
  s.mean_se = se / s.count;
  return s;
}

Trajectory positions(std::span<const world::Pose> poses) {
  Trajectory t;
  t.reserve(poses.size());
  for (const auto& p : poses) t.push_back({p.x, p.y});
  return t;
}

TrajectoryErrors trajectory_errors(const Trajectory& pred, const Trajectory& gt) {
  if (pred.size() != gt.size()) {
    throw InvalidArgument("trajectory_errors: lengths differ (" + std::to_string(pred.size()) +
                          " vs " + std::to_string(gt.size()) + ")");
  }
  if (gt.size() < 2) throw InvalidArgument("trajectory_errors: need at least two positions");
  const std::size_t n = gt.size();
  TrajectoryErrors e;
  for (std::size_t t = 0; t < n; ++t) {
    e.ate += std::hypot(pred[t].x - gt[t].x, pred[t].y - gt[t].y);
  }
  e.ate /= static_cast<double>(n);
  e.fde = std::hypot(pred[n - 1].x - gt[n - 1].x, pred[n - 1].y - gt[n - 1].y);
  for (std::size_t t = 1; t < n; ++t) {
    const double dpx = pred[t].x - pred[t - 1].x;
    const double dpy = pred[t].y - pred[t - 1].y;
    const double dgx = gt[t].x - gt[t - 1].x;
    const double dgy = gt[t].y - gt[t - 1].y;
    e.rpe += std::hypot(dpx - dgx, dpy - dgy);
  }
  e.rpe /= static_cast<double>(n - 1);
  return e;
}

double psnr(double mse) {
  if (mse < 0.0) throw InvalidArgument("psnr: negative mse");
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

void DriftCurve::validate() const {
  if (horizon.size() != mse.size() || mse.size() != psnr.size()) {
    throw InvalidArgument("drift curve: column lengths differ");
  }
  for (double m : mse) {
    if (!(m >= 0.0)) throw InvalidArgument("drift curve: negative or NaN mse");
  }
}

DriftCurve drift_curve(const rollout::RolloutResult& result,
                       std::span<const world::Image> oracle, const std::string& strategy) {
  if (result.frames.size() != oracle.size()) {
    throw InvalidArgument("drift_curve: " + std::to_string(result.frames.size()) +
                          " frames vs " + std::to_string(oracle.size()) + " oracle frames");
  }
  DriftCurve c;
  c.strategy = strategy;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    const double m = world::image_mse(result.frames[i].image, oracle[i]);
    c.horizon.push_back(static_cast<int>(i) + 1);
    c.mse.push_back(m);
    c.psnr.push_back(psnr(m));
  }
  return c;
}

DriftCurve mean_curve(std::span<const DriftCurve> curves) {
  if (curves.empty()) throw InvalidArgument("mean_curve: no curves");
  DriftCurve out;
  out.strategy = curves.front().strategy;
  out.horizon = curves.front().horizon;
  out.mse.assign(out.horizon.size(), 0.0);
  for (const auto& c : curves) {
    if (c.horizon != out.horizon) throw InvalidArgument("mean_curve: horizons differ");
    for (std::size_t i = 0; i < c.mse.size(); ++i) out.mse[i] += c.mse[i];
  }
  for (double& m : out.mse) {
    m /= static_cast<double>(curves.size());
    out.psnr.push_back(psnr(m));
  }
  return out;
}

DriftCurve bucket(const DriftCurve& curve, std::span<const int> horizons) {
  DriftCurve out;
  out.strategy = curve.strategy;
  for (int h : horizons) {
    auto it = std::find(curve.horizon.begin(), curve.horizon.end(), h);
    if (it == curve.horizon.end()) {
      throw InvalidArgument("bucket: horizon " + std::to_string(h) + " not in curve");
    }
    const auto i = static_cast<std::size_t>(it - curve.horizon.begin());
    out.horizon.push_back(h);
    out.mse.push_back(curve.mse[i]);
    out.psnr.push_back(curve.psnr[i]);
  }
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InvalidArgument("spearman: need two equal-length series of length >= 2");
  }
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace drnwm::metrics
