#include "drnwm/error.hpp"
#include "drnwm/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace drnwm;
using namespace drnwm::metrics;

namespace {

geometry::Correspondence corr(double ax, double ay, double bx, double by, bool valid = true) {
  return {{ax, ay}, {bx, by}, 1.0, valid};
}

world::Frame frame_of(const world::Image& img, int step) { return {img, {}, step, true}; }

}  // namespace

TEST_CASE("epipolar_stats: hand-computed line distance") {
  // F x = (0, 1, -3) for x = (2, 1, 1); distance of (5, 7) to y = 3 is 4.
  Eigen::Matrix3d m = Eigen::Vector3d(0, 1, -3).asDiagonal();
  const geometry::FundamentalMatrix f(m);
  const std::vector<geometry::Correspondence> c{corr(2, 1, 5, 7)};
  const auto s = epipolar_stats(c, f);
  CHECK(s.count == 1);
  CHECK(s.mean_ed == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("epipolar_stats: exact correspondences give zero error") {
  const auto scene = world::make_random_scene(3, 300);
  const world::CameraIntrinsics intr;
  const world::Pose a{0, 0, 0}, b{0.6, 0.2, 0.1};
  const auto lc = world::sample_correspondences(scene, intr, a, b, {});
  const auto s = epipolar_stats(lc.corrs, world::oracle_fundamental(intr, a, b));
  CHECK(s.count == static_cast<int>(lc.corrs.size()));
  CHECK(s.mean_ed < 1e-9);
  CHECK(s.mean_se < 1e-9);
}

TEST_CASE("epipolar_stats: noisy correspondences and rescaling") {
  const auto scene = world::make_random_scene(4, 3000);
  const world::CameraIntrinsics intr;
  const world::Pose a{0, 0, 0}, b{0.6, 0.2, 0.1};
  world::CorrespondenceOptions o;
  o.noise_px = 2.0;
  o.max_pairs = 1000;
  o.seed = 5;
  const auto lc = world::sample_correspondences(scene, intr, a, b, o);
  REQUIRE(lc.corrs.size() == 1000);
  const auto f = world::oracle_fundamental(intr, a, b);
  const auto s = epipolar_stats(lc.corrs, f);
  CHECK(s.mean_ed >= 1.0);
  CHECK(s.mean_ed <= 3.2);
  const auto scaled = epipolar_stats(lc.corrs, geometry::FundamentalMatrix(-7.5 * f.matrix()));
  CHECK(scaled.mean_ed == doctest::Approx(s.mean_ed).epsilon(1e-12));
  CHECK(scaled.mean_se == doctest::Approx(s.mean_se).epsilon(1e-12));
}

TEST_CASE("epipolar_stats: invalid pairs are skipped, none valid is an error") {
  Eigen::Matrix3d m = Eigen::Vector3d(0, 1, -3).asDiagonal();
  const geometry::FundamentalMatrix f(m);
  const std::vector<geometry::Correspondence> c{corr(2, 1, 5, 7), corr(2, 1, 5, 100, false)};
  CHECK(epipolar_stats(c, f).count == 1);
  CHECK(epipolar_stats(c, f).mean_ed == doctest::Approx(4.0));
  const std::vector<geometry::Correspondence> none{corr(2, 1, 5, 7, false)};
  CHECK_THROWS_AS(epipolar_stats(none, f), InvalidArgument);
  CHECK_THROWS_AS(epipolar_stats({}, f), InvalidArgument);
}

TEST_CASE("trajectory_errors: identical, offset and two-step toy") {
  const Trajectory gt{{0, 0}, {1, 0}, {2, 1}, {2.5, 3}};
  const auto z = trajectory_errors(gt, gt);
  CHECK(z.ate == 0.0);
  CHECK(z.fde == 0.0);
  CHECK(z.rpe == 0.0);

  Trajectory shifted = gt;
  for (auto& p : shifted) {
    p.x += 3.0;
    p.y += 4.0;
  }
  const auto o = trajectory_errors(shifted, gt);
  CHECK(o.ate == 5.0);
  CHECK(o.fde == 5.0);
  CHECK(o.rpe == 0.0);

  const auto t = trajectory_errors({{0, 0}, {0, 1}}, {{0, 0}, {1, 0}});
  CHECK(t.ate == std::sqrt(2.0) / 2.0);
  CHECK(t.fde == std::sqrt(2.0));
  CHECK(t.rpe == std::sqrt(2.0));
}

TEST_CASE("trajectory_errors: translation covariance and nonnegativity") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    Trajectory p(6), g(6);
    for (std::size_t i = 0; i < 6; ++i) {
      p[i] = {u(rng), u(rng)};
      g[i] = {u(rng), u(rng)};
    }
    const auto e = trajectory_errors(p, g);
    CHECK(e.ate >= 0.0);
    CHECK(e.fde >= 0.0);
    CHECK(e.rpe >= 0.0);
    const double dx = u(rng), dy = u(rng);
    Trajectory ps = p, gs = g;
    for (auto& q : ps) q = {q.x + dx, q.y + dy};
    for (auto& q : gs) q = {q.x + dx, q.y + dy};
    const auto s = trajectory_errors(ps, gs);
    CHECK(s.ate == doctest::Approx(e.ate).epsilon(1e-12));
    CHECK(s.fde == doctest::Approx(e.fde).epsilon(1e-12));
    CHECK(s.rpe == doctest::Approx(e.rpe).epsilon(1e-12));
    const auto only_pred = trajectory_errors(ps, g);
    CHECK(only_pred.rpe == doctest::Approx(e.rpe).epsilon(1e-12));
  }
}

TEST_CASE("trajectory_errors: argument errors") {
  CHECK_THROWS_AS(trajectory_errors({{0, 0}, {1, 1}}, {{0, 0}}), InvalidArgument);
  CHECK_THROWS_AS(trajectory_errors({{0, 0}}, {{0, 0}}), InvalidArgument);
}

TEST_CASE("positions drops the heading") {
  const std::vector<world::Pose> poses{{1, 2, 0.3}, {-1, 0.5, 2.0}};
  const auto t = positions(poses);
  REQUIRE(t.size() == 2);
  CHECK(t[1].x == -1.0);
  CHECK(t[1].y == 0.5);
}

TEST_CASE("psnr: cap, examples and errors") {
  CHECK(psnr(0.0) == kPsnrCap);
  CHECK(psnr(1e-30) == kPsnrCap);
  CHECK(psnr(0.01) == doctest::Approx(20.0).epsilon(1e-14));
  CHECK(psnr(1.0) == 0.0);
  CHECK_THROWS_AS(psnr(-1e-3), InvalidArgument);
}

TEST_CASE("drift_curve: identical and constant-offset frames") {
  const world::Image base(8, 6, 0.3), off(8, 6, 0.4);
  rollout::RolloutResult r;
  r.frames = {frame_of(base, 1), frame_of(off, 2)};
  const std::vector<world::Image> oracle{base, base};
  const auto c = drift_curve(r, oracle, "anchor");
  c.validate();
  CHECK(c.strategy == "anchor");
  CHECK(c.horizon == std::vector<int>{1, 2});
  CHECK(c.mse[0] == 0.0);
  CHECK(c.psnr[0] == kPsnrCap);
  CHECK(c.mse[1] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(c.psnr[1] == doctest::Approx(20.0).epsilon(1e-10));
  CHECK_THROWS_AS(drift_curve(r, std::vector<world::Image>{base}, "x"), InvalidArgument);
}

TEST_CASE("mean_curve and bucket") {
  DriftCurve a{"ar", {1, 2, 3}, {0.01, 0.02, 0.04}, {}};
  DriftCurve b{"ar", {1, 2, 3}, {0.03, 0.02, 0.0}, {}};
  const std::vector<DriftCurve> cs{a, b};
  const auto m = mean_curve(cs);
  CHECK(m.mse == std::vector<double>{0.02, 0.02, 0.02});
  CHECK(m.psnr[0] == psnr(0.02));
  const std::vector<int> hs{3, 1};
  const auto k = bucket(m, hs);
  CHECK(k.horizon == hs);
  CHECK(k.mse == std::vector<double>{0.02, 0.02});
  const std::vector<int> missing{4};
  CHECK_THROWS_AS(bucket(m, missing), InvalidArgument);
  b.horizon = {1, 2, 4};
  const std::vector<DriftCurve> bad{a, b};
  CHECK_THROWS_AS(mean_curve(bad), InvalidArgument);
  CHECK_THROWS_AS(mean_curve({}), InvalidArgument);
  DriftCurve broken{"x", {1}, {0.1, 0.2}, {1.0}};
  CHECK_THROWS_AS(broken.validate(), InvalidArgument);
}

TEST_CASE("spearman: monotone, reversed, ties") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> sq{1, 4, 9, 16, 25};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  CHECK(spearman(x, sq) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spearman(x, rev) == doctest::Approx(-1.0).epsilon(1e-15));
  // Average ranks: y ranks (1.5, 1.5, 3, 4); Pearson on ranks by hand.
  const std::vector<double> a{1, 2, 3, 4}, t{7, 7, 8, 9};
  const double ra[] = {1, 2, 3, 4}, rb[] = {1.5, 1.5, 3, 4};
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 4; ++i) {
    sab += (ra[i] - 2.5) * (rb[i] - 2.5);
    saa += (ra[i] - 2.5) * (ra[i] - 2.5);
    sbb += (rb[i] - 2.5) * (rb[i] - 2.5);
  }
  CHECK(spearman(a, t) == doctest::Approx(sab / std::sqrt(saa * sbb)).epsilon(1e-14));
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(spearman(one, one), InvalidArgument);
}
