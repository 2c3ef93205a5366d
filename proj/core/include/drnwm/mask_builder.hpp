// Bidirectional epipolar attention masks.
//
// For a (past observation, goal, future anchor) triplet, each matched point
// pair (p_past, p_fut) is lifted to two epipolar lines in the goal view whose
// intersection localizes the shared scene point. The source token of each
// view is then connected only to the goal token that contains the
// intersection. Rows without a surviving correspondence stay unconstrained.
#pragma once

#include "drnwm/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace drnwm::masks {

struct TokenGrid {
  int image_w = 224;
  int image_h = 224;
  int side = 14;

  int tokens() const { return side * side; }
  void validate() const;
};

/// Cell index of an in-image pixel, row-major over the grid.
int pixel_to_token(geometry::Pixel p, const TokenGrid& grid);

/// L x L boolean mask stored source-rows x goal-columns. A row that is not
/// constrained allows every column.
class AttentionMask {
 public:
  AttentionMask() = default;
  explicit AttentionMask(int tokens);

  static AttentionMask all_true(int tokens) { return AttentionMask(tokens); }

  int tokens() const { return tokens_; }
  bool allows(int row, int col) const;
  bool row_constrained(int row) const { return constrained_[static_cast<std::size_t>(row)] != 0; }
  bool is_all_true() const;
  int constrained_rows() const;
  std::vector<int> allowed_columns(int row) const;

  /// Adds `col` to the allowed set of `row`. The first call on an
  /// unconstrained row clears it before setting the column.
  void constrain(int row, int col);
  /// Replaces a row with an explicit allowed set; an empty set reverts the
  /// row to unconstrained.
  void set_row(int row, std::span<const int> cols);

  bool operator==(const AttentionMask&) const = default;

 private:
  int tokens_ = 0;
  std::vector<std::uint8_t> allow_;        // tokens_ * tokens_
  std::vector<std::uint8_t> constrained_;  // tokens_
};

struct MaskPair {
  AttentionMask past;
  AttentionMask fut;

  bool operator==(const MaskPair&) const = default;
};

struct TripletGeometry {
  geometry::RansacResult pg;  // past -> goal
  geometry::RansacResult pf;  // past -> future
  geometry::RansacResult fg;  // future -> goal
  double r_pg = 0.0;
  double r_pf = 0.0;
  double r_fg = 0.0;
  // Filtered past->future matches; pf.inliers index into this list.
  std::vector<geometry::Correspondence> pf_matches;
};

struct MaskParams {
  double tau_match = 0.8;
  double ransac_threshold_px = 3.0;
  int ransac_iters = geometry::kDefaultRansacIterations;
  int n_min = 16;
  int n_sat = 64;
  double tau_rel = 0.1;
  double alpha = 0.6;
  double tau_temp = 0.5;
};

double reliability_score(const geometry::RansacResult& res, int n_min, int n_sat);

/// RANSAC on each filtered pair (pairs with fewer than 8 filtered matches are
/// left without a model) and the three reliability scores.
TripletGeometry estimate_triplet_geometry(std::span<const geometry::Correspondence> past_goal,
                                          std::span<const geometry::Correspondence> past_fut,
                                          std::span<const geometry::Correspondence> fut_goal,
                                          const MaskParams& params, std::uint64_t seed);

bool gate_triplet(const TripletGeometry& geo, double tau_rel);

/// Relative threshold on |w| of the cross product below which an
/// intersection is rejected as numerically unstable.
inline constexpr double kIntersectionStability = 1e-9;

/// past_points[j] and fut_points[j] are the same scene element seen in the
/// past observation and the future anchor. Throws InvalidArgument when either
/// goal-side fundamental matrix is absent.
MaskPair build_triplet_masks(std::span<const geometry::Pixel> past_points,
                             std::span<const geometry::Pixel> fut_points,
                             const TripletGeometry& geo, const TokenGrid& grid);

/// Gate, then build from the past-future RANSAC inliers; all-true when gated
/// out.
MaskPair masks_for_triplet(const TripletGeometry& geo, const TokenGrid& grid, double tau_rel,
                           bool* used = nullptr);

/// Per-entry EMA over constrained rows followed by binarization.
std::vector<AttentionMask> smooth_mask_sequence(std::span<const AttentionMask> seq, double alpha,
                                                double tau_temp);

struct MaskSequence {
  std::vector<MaskPair> masks;
  bool gated = false;  // true when geometric masks are in use

  bool operator==(const MaskSequence&) const = default;
};

/// Smooths the past and future streams independently.
MaskSequence smooth_pairs(std::span<const MaskPair> seq, double alpha, double tau_temp);

std::vector<std::uint8_t> encode_mask_sequence(const MaskSequence& seq);
MaskSequence decode_mask_sequence(std::span<const std::uint8_t> bytes);
void write_mask_file(const std::filesystem::path& path, const MaskSequence& seq);
MaskSequence read_mask_file(const std::filesystem::path& path);

}  // namespace drnwm::masks
