#include "drnwm/synthetic_world.hpp"

#include "drnwm/error.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace drnwm::world {

using geometry::Correspondence;
using geometry::HomoPoint2;

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidArgument("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw InvalidArgument("intrinsics: principal point outside the image");
  }
}

double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

Pose apply_action(const Pose& p, const Action& a) {
  const double c = std::cos(p.yaw);
  const double s = std::sin(p.yaw);
  return {p.x + c * a.dx - s * a.dy, p.y + s * a.dx + c * a.dy, wrap_angle(p.yaw + a.dyaw)};
}

Pose apply_actions(const Pose& p, std::span<const Action> seq) {
  Pose out = p;
  for (const auto& a : seq) out = apply_action(out, a);
  return out;
}

Action invert_action(const Action& a) {
  const double c = std::cos(a.dyaw);
  const double s = std::sin(a.dyaw);
  return {-(c * a.dx + s * a.dy), -(-s * a.dx + c * a.dy), -a.dyaw};
}

Action compose_actions(const Action& first, const Action& second) {
  const double c = std::cos(first.dyaw);
  const double s = std::sin(first.dyaw);
  return {first.dx + c * second.dx - s * second.dy, first.dy + s * second.dx + c * second.dy,
          wrap_angle(first.dyaw + second.dyaw)};
}

std::vector<Action> invert_action_sequence(std::span<const Action> seq) {
  std::vector<Action> out;
  out.reserve(seq.size());
  for (auto it = seq.rbegin(); it != seq.rend(); ++it) out.push_back(invert_action(*it));
  return out;
}

Action relative_action(const Pose& from, const Pose& to) {
  const double dxw = to.x - from.x;
  const double dyw = to.y - from.y;
  const double c = std::cos(from.yaw);
  const double s = std::sin(from.yaw);
  return {c * dxw + s * dyw, -s * dxw + c * dyw, wrap_angle(to.yaw - from.yaw)};
}

Eigen::Matrix3d camera_rotation(const Pose& p) {
  const double c = std::cos(p.yaw);
  const double s = std::sin(p.yaw);
  Eigen::Matrix3d r;
  r << s, -c, 0.0,     // right
       0.0, 0.0, -1.0,  // down
       c, s, 0.0;       // forward
  return r;
}

Eigen::Vector3d camera_center(const Pose& p) { return {p.x, p.y, kCameraHeight}; }

Projection project(const CameraIntrinsics& intr, const Pose& pose, const Eigen::Vector3d& X) {
  const Eigen::Vector3d pc = camera_rotation(pose) * (X - camera_center(pose));
  Projection out;
  out.depth = pc.z();
  const Eigen::Vector3d h = intr.matrix() * pc;
  out.pixel = HomoPoint2::from_vector(h);
  if (pc.z() <= kMinDepth) return out;
  const double u = h.x() / h.z();
  const double v = h.y() / h.z();
  out.pixel = {u, v, 1.0};
  out.visible = u >= 0.0 && u < intr.width && v >= 0.0 && v < intr.height;
  return out;
}

geometry::FundamentalMatrix oracle_fundamental(const CameraIntrinsics& intr, const Pose& a,
                                               const Pose& b) {
  const Eigen::Vector3d ca = camera_center(a);
  const Eigen::Vector3d cb = camera_center(b);
  if ((ca - cb).norm() <= 1e-6) {
    throw DegenerateGeometry("oracle_fundamental: zero baseline, F undefined");
  }
  const Eigen::Matrix3d ra = camera_rotation(a);
  const Eigen::Matrix3d rb = camera_rotation(b);
  const Eigen::Matrix3d r = rb * ra.transpose();
  const Eigen::Vector3d t = rb * (ca - cb);
  Eigen::Matrix3d tx;
  tx << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;
  const Eigen::Matrix3d kinv = intr.matrix().inverse();
  return geometry::FundamentalMatrix(kinv.transpose() * tx * r * kinv);
}

double image_mse(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw InvalidArgument("image_mse: image sizes differ");
  }
  if (a.pixels.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

Image render(const Scene& scene, const CameraIntrinsics& intr, const Pose& pose) {
  Image img(intr.width, intr.height, kBackground);
  std::vector<double> zbuf(img.pixels.size(), std::numeric_limits<double>::infinity());
  const int r = static_cast<int>(std::ceil(kSplatRadius));
  const double r2 = kSplatRadius * kSplatRadius;
  for (const auto& pt : scene.points) {
    const Projection pr = project(intr, pose, pt.position);
    if (!pr.visible) continue;
    const double u = pr.pixel.x;
    const double v = pr.pixel.y;
    const int ui = static_cast<int>(std::lround(u));
    const int vi = static_cast<int>(std::lround(v));
    for (int y = std::max(0, vi - r); y <= std::min(intr.height - 1, vi + r); ++y) {
      for (int x = std::max(0, ui - r); x <= std::min(intr.width - 1, ui + r); ++x) {
        const double dx = x - u;
        const double dy = y - v;
        if (dx * dx + dy * dy > r2) continue;
        const std::size_t idx = static_cast<std::size_t>(y) * intr.width + x;
        if (pr.depth < zbuf[idx]) {
          zbuf[idx] = pr.depth;
          img.pixels[idx] = pt.intensity;
        }
      }
    }
  }
  return img;
}

LabeledCorrespondences sample_correspondences(const Scene& scene, const CameraIntrinsics& intr,
                                              const Pose& a, const Pose& b,
                                              const CorrespondenceOptions& opts) {
  if (!(opts.outlier_rate >= 0.0 && opts.outlier_rate < 1.0)) {
    throw InvalidArgument("sample_correspondences: outlier_rate must lie in [0, 1)");
  }
  if (!(opts.noise_px >= 0.0)) throw InvalidArgument("sample_correspondences: negative noise");

  struct Covisible {
    std::size_t index;
    geometry::Pixel pa;
    geometry::Pixel pb;
  };
  std::vector<Covisible> covisible;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const Projection qa = project(intr, a, scene.points[i].position);
    const Projection qb = project(intr, b, scene.points[i].position);
    if (qa.visible && qb.visible) {
      covisible.push_back({i, {qa.pixel.x, qa.pixel.y}, {qb.pixel.x, qb.pixel.y}});
    }
  }
  if (covisible.size() < geometry::kMinCorrespondences) {
    throw InvalidArgument("sample_correspondences: fewer than 8 co-visible points (" +
                          std::to_string(covisible.size()) + ")");
  }

  std::mt19937_64 rng(opts.seed);
  std::shuffle(covisible.begin(), covisible.end(), rng);
  if (opts.max_pairs > 0 && covisible.size() > opts.max_pairs) covisible.resize(opts.max_pairs);
  const std::size_t n = covisible.size();

  const auto n_outliers =
      static_cast<std::size_t>(std::llround(opts.outlier_rate * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_outlier(n, false);
  for (std::size_t k = 0; k < n_outliers; ++k) is_outlier[order[k]] = true;

  const auto n_invalid =
      static_cast<std::size_t>(std::llround(opts.invalid_rate * static_cast<double>(n)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_invalid(n, false);
  for (std::size_t k = 0; k < std::min(n_invalid, n); ++k) is_invalid[order[k]] = true;

  const geometry::FundamentalMatrix f_true = oracle_fundamental(intr, a, b);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(intr.width));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(intr.height));
  std::uniform_real_distribution<double> inlier_conf(0.85, 1.0);
  std::uniform_real_distribution<double> outlier_conf(0.8, 1.0);

  auto in_image = [&](const geometry::Pixel& p) {
    return p.x >= 0.0 && p.x < intr.width && p.y >= 0.0 && p.y < intr.height;
  };

  LabeledCorrespondences out;
  out.corrs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Correspondence c;
    c.a = covisible[i].pa;
    c.b = covisible[i].pb;
    if (opts.noise_px > 0.0) {
      c.a.x += opts.noise_px * noise(rng);
      c.a.y += opts.noise_px * noise(rng);
      c.b.x += opts.noise_px * noise(rng);
      c.b.y += opts.noise_px * noise(rng);
    }
    if (is_outlier[i]) {
      geometry::Pixel cand{ux(rng), uy(rng)};
      for (int attempt = 0; attempt < 1000; ++attempt) {
        double se = 0.0;
        try {
          se = geometry::sampson_error(f_true, HomoPoint2::from_pixel(c.a),
                                       HomoPoint2::from_pixel(cand));
        } catch (const DegenerateGeometry&) {
          se = 0.0;
        }
        if (se >= opts.outlier_margin_px * opts.outlier_margin_px) break;
        cand = {ux(rng), uy(rng)};
      }
      c.b = cand;
      c.confidence = outlier_conf(rng);
    } else {
      c.confidence = inlier_conf(rng);
    }
    c.valid = !is_invalid[i] && in_image(c.a) && in_image(c.b);
    out.corrs.push_back(c);
    out.outlier.push_back(is_outlier[i]);
    out.point_index.push_back(covisible[i].index);
  }
  return out;
}

Scene make_random_scene(std::uint64_t seed, std::size_t n_points, const Bounds& bounds) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> intensity(0.3, 1.0);
  Scene scene;
  scene.bounds = bounds;
  scene.points.reserve(n_points);
  const Eigen::Vector3d extent = bounds.max - bounds.min;
  for (std::size_t i = 0; i < n_points; ++i) {
    Eigen::Vector3d p;
    for (int k = 0; k < 3; ++k) p(k) = bounds.min(k) + unit(rng) * extent(k);
    scene.points.push_back({p, intensity(rng)});
  }
  return scene;
}

Scene parse_scene(const std::string& text) {
  Scene scene;
  bool have_bounds = false;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    auto fail = [&](const std::string& msg) {
      throw FormatError("scene line " + std::to_string(lineno) + ": " + msg);
    };
    if (first == "bounds") {
      Bounds b;
      if (!(ls >> b.min.x() >> b.min.y() >> b.min.z() >> b.max.x() >> b.max.y() >> b.max.z())) {
        fail("bounds needs six numbers");
      }
      if (!(b.min.array() <= b.max.array()).all()) fail("bounds min exceeds max");
      scene.bounds = b;
      have_bounds = true;
      continue;
    }
    ScenePoint p;
    std::istringstream rec(line);
    if (!(rec >> p.position.x() >> p.position.y() >> p.position.z() >> p.intensity)) {
      fail("expected 'X Y Z intensity'");
    }
    std::string extra;
    if (rec >> extra) fail("trailing token '" + extra + "'");
    if (!p.position.allFinite() || !std::isfinite(p.intensity)) fail("non-finite value");
    if (p.intensity < 0.0 || p.intensity > 1.0) fail("intensity outside [0, 1]");
    if (have_bounds && !scene.bounds.contains(p.position)) fail("point outside scene bounds");
    scene.points.push_back(p);
  }
  if (!have_bounds && !scene.points.empty()) {
    Bounds b{scene.points.front().position, scene.points.front().position};
    for (const auto& p : scene.points) {
      b.min = b.min.cwiseMin(p.position);
      b.max = b.max.cwiseMax(p.position);
    }
    scene.bounds = b;
  }
  return scene;
}

std::string format_scene(const Scene& scene) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "# X Y Z intensity\n";
  const auto& b = scene.bounds;
  out << "bounds " << b.min.x() << ' ' << b.min.y() << ' ' << b.min.z() << ' ' << b.max.x() << ' '
      << b.max.y() << ' ' << b.max.z() << '\n';
  for (const auto& p : scene.points) {
    out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << ' ' << p.intensity
        << '\n';
  }
  return out.str();
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open scene file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

void save_scene(const std::filesystem::path& path, const Scene& scene) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write scene file " + path.string());
  out << format_scene(scene);
}

}  // namespace drnwm::world
