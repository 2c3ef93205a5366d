#include "drnwm/mask_builder.hpp"

#include "drnwm/error.hpp"

#include <algorithm>
#include <cmath>

namespace drnwm::masks {

using geometry::Correspondence;
using geometry::HomoPoint2;
using geometry::Pixel;

void TokenGrid::validate() const {
  if (side <= 0 || image_w <= 0 || image_h <= 0) {
    throw InvalidArgument("token grid: sizes must be positive");
  }
  if (image_w % side != 0 || image_h % side != 0) {
    throw InvalidArgument("token grid: image dimensions must be divisible by the grid side");
  }
}

int pixel_to_token(Pixel p, const TokenGrid& grid) {
  if (!(p.x >= 0.0 && p.x < grid.image_w && p.y >= 0.0 && p.y < grid.image_h)) {
    throw InvalidArgument("pixel_to_token: pixel outside the image");
  }
  const double cell_w = static_cast<double>(grid.image_w) / grid.side;
  const double cell_h = static_cast<double>(grid.image_h) / grid.side;
  const int col = std::min(grid.side - 1, static_cast<int>(std::floor(p.x / cell_w)));
  const int row = std::min(grid.side - 1, static_cast<int>(std::floor(p.y / cell_h)));
  return row * grid.side + col;
}

AttentionMask::AttentionMask(int tokens)
    : tokens_(tokens),
      allow_(static_cast<std::size_t>(tokens) * static_cast<std::size_t>(tokens), 1),
      constrained_(static_cast<std::size_t>(tokens), 0) {
  if (tokens <= 0) throw InvalidArgument("attention mask: token count must be positive");
}

bool AttentionMask::allows(int row, int col) const {
  return allow_[static_cast<std::size_t>(row) * tokens_ + col] != 0;
}

bool AttentionMask::is_all_true() const {
  return std::none_of(constrained_.begin(), constrained_.end(), [](auto c) { return c != 0; });
}

int AttentionMask::constrained_rows() const {
  return static_cast<int>(std::count(constrained_.begin(), constrained_.end(), std::uint8_t{1}));
}

std::vector<int> AttentionMask::allowed_columns(int row) const {
  std::vector<int> cols;
  for (int c = 0; c < tokens_; ++c) {
    if (allows(row, c)) cols.push_back(c);
  }
  return cols;
}

void AttentionMask::constrain(int row, int col) {
  if (row < 0 || row >= tokens_ || col < 0 || col >= tokens_) {
    throw InvalidArgument("attention mask: index out of range");
  }
  auto begin = allow_.begin() + static_cast<std::ptrdiff_t>(row) * tokens_;
  if (!constrained_[static_cast<std::size_t>(row)]) {
    std::fill(begin, begin + tokens_, std::uint8_t{0});
    constrained_[static_cast<std::size_t>(row)] = 1;
  }
  begin[col] = 1;
}

void AttentionMask::set_row(int row, std::span<const int> cols) {
  if (row < 0 || row >= tokens_) throw InvalidArgument("attention mask: row out of range");
  auto begin = allow_.begin() + static_cast<std::ptrdiff_t>(row) * tokens_;
  if (cols.empty()) {
    std::fill(begin, begin + tokens_, std::uint8_t{1});
    constrained_[static_cast<std::size_t>(row)] = 0;
    return;
  }
  std::fill(begin, begin + tokens_, std::uint8_t{0});
  constrained_[static_cast<std::size_t>(row)] = 0;
  for (int c : cols) constrain(row, c);
}

double reliability_score(const geometry::RansacResult& res, int n_min, int n_sat) {
  if (n_sat <= n_min || n_min < 0) {
    throw InvalidArgument("reliability_score: need n_sat > n_min >= 0");
  }
  if (!res.f) return 0.0;
  const double r = (static_cast<double>(res.n()) - n_min) / static_cast<double>(n_sat - n_min);
  return std::clamp(r, 0.0, 1.0);
}

TripletGeometry estimate_triplet_geometry(std::span<const Correspondence> past_goal,
                                          std::span<const Correspondence> past_fut,
                                          std::span<const Correspondence> fut_goal,
                                          const MaskParams& params, std::uint64_t seed) {
  auto fit = [&](std::span<const Correspondence> raw, std::uint64_t s,
                 std::vector<Correspondence>* keep) {
    auto filtered = geometry::filter_matches(raw, params.tau_match);
    geometry::RansacResult res;
    if (filtered.size() >= geometry::kMinCorrespondences) {
      res = geometry::ransac_fundamental(filtered, params.ransac_threshold_px,
                                         params.ransac_iters, s);
    }
    if (keep) *keep = std::move(filtered);
    return res;
  };
  TripletGeometry geo;
  geo.pg = fit(past_goal, seed * 3 + 0, nullptr);
  geo.pf = fit(past_fut, seed * 3 + 1, &geo.pf_matches);
  geo.fg = fit(fut_goal, seed * 3 + 2, nullptr);
  geo.r_pg = reliability_score(geo.pg, params.n_min, params.n_sat);
  geo.r_pf = reliability_score(geo.pf, params.n_min, params.n_sat);
  geo.r_fg = reliability_score(geo.fg, params.n_min, params.n_sat);
  return geo;
}

bool gate_triplet(const TripletGeometry& geo, double tau_rel) {
  return std::min({geo.r_pg, geo.r_pf, geo.r_fg}) >= tau_rel;
}

MaskPair build_triplet_masks(std::span<const Pixel> past_points, std::span<const Pixel> fut_points,
                             const TripletGeometry& geo, const TokenGrid& grid) {
  if (!geo.pg.f || !geo.fg.f) {
    throw InvalidArgument("build_triplet_masks: goal-side fundamental matrix absent; gate instead");
  }
  if (past_points.size() != fut_points.size()) {
    throw InvalidArgument("build_triplet_masks: point lists differ in length");
  }
  grid.validate();
  const int L = grid.tokens();
  MaskPair out{AttentionMask(L), AttentionMask(L)};

  auto in_image = [&](double x, double y) {
    return x >= 0.0 && x < grid.image_w && y >= 0.0 && y < grid.image_h;
  };

  for (std::size_t j = 0; j < past_points.size(); ++j) {
    const Pixel pp = past_points[j];
    const Pixel pf = fut_points[j];
    if (!in_image(pp.x, pp.y) || !in_image(pf.x, pf.y)) continue;
    try {
      const auto l_pg = geometry::project_epipolar_line(*geo.pg.f, HomoPoint2::from_pixel(pp));
      const auto l_fg = geometry::project_epipolar_line(*geo.fg.f, HomoPoint2::from_pixel(pf));
      const HomoPoint2 z = geometry::intersect_lines(l_pg, l_fg);
      const double scale = l_pg.vec().cwiseAbs().maxCoeff() * l_fg.vec().cwiseAbs().maxCoeff();
      if (std::abs(z.w) < kIntersectionStability * scale) continue;
      const double gx = z.x / z.w;
      const double gy = z.y / z.w;
      if (!in_image(gx, gy)) continue;
      const int goal_token = pixel_to_token({gx, gy}, grid);
      out.past.constrain(pixel_to_token(pp, grid), goal_token);
      out.fut.constrain(pixel_to_token(pf, grid), goal_token);
    } catch (const DegenerateGeometry&) {
      continue;
    }
  }
  return out;
}

MaskPair masks_for_triplet(const TripletGeometry& geo, const TokenGrid& grid, double tau_rel,
                           bool* used) {
  const int L = grid.tokens();
  const bool use = gate_triplet(geo, tau_rel);
  if (used) *used = use;
  if (!use) return {AttentionMask(L), AttentionMask(L)};
  std::vector<Pixel> past;
  std::vector<Pixel> fut;
  for (std::size_t i : geo.pf.inliers) {
    past.push_back(geo.pf_matches[i].a);
    fut.push_back(geo.pf_matches[i].b);
  }
  return build_triplet_masks(past, fut, geo, grid);
}

std::vector<AttentionMask> smooth_mask_sequence(std::span<const AttentionMask> seq, double alpha,
                                                double tau_temp) {
  std::vector<AttentionMask> out;
  if (seq.empty()) return out;
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("smooth_mask_sequence: alpha in [0,1)");
  const int L = seq.front().tokens();
  for (const auto& m : seq) {
    if (m.tokens() != L) throw InvalidArgument("smooth_mask_sequence: mask sizes differ");
  }

  // EMA state per row, seeded by the first frame that constrains the row.
  std::vector<double> state(static_cast<std::size_t>(L) * L, 0.0);
  std::vector<bool> seeded(static_cast<std::size_t>(L), false);
  std::vector<int> cols;
  for (const auto& m : seq) {
    AttentionMask smoothed(L);
    for (int r = 0; r < L; ++r) {
      if (!m.row_constrained(r)) continue;
      double* s = state.data() + static_cast<std::size_t>(r) * L;
      cols.clear();
      for (int c = 0; c < L; ++c) {
        const double x = m.allows(r, c) ? 1.0 : 0.0;
        s[c] = seeded[static_cast<std::size_t>(r)] ? alpha * s[c] + (1.0 - alpha) * x : x;
        if (s[c] >= tau_temp) cols.push_back(c);
      }
      seeded[static_cast<std::size_t>(r)] = true;
      // A row can decay to empty when its support jumps; fall back to the
      // current frame's constraint.
      if (cols.empty()) cols = m.allowed_columns(r);
      smoothed.set_row(r, cols);
    }
    out.push_back(std::move(smoothed));
  }
  return out;
}

MaskSequence smooth_pairs(std::span<const MaskPair> seq, double alpha, double tau_temp) {
  std::vector<AttentionMask> past;
  std::vector<AttentionMask> fut;
  for (const auto& p : seq) {
    past.push_back(p.past);
    fut.push_back(p.fut);
  }
  auto sp = smooth_mask_sequence(past, alpha, tau_temp);
  auto sf = smooth_mask_sequence(fut, alpha, tau_temp);
  MaskSequence out;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    out.gated = out.gated || !sp[i].is_all_true() || !sf[i].is_all_true();
    out.masks.push_back({std::move(sp[i]), std::move(sf[i])});
  }
  return out;
}

}  // namespace drnwm::masks
