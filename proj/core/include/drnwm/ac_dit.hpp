// Desk-scale anchor-conditioned DiT block in double precision.
//
// Conditioning: every scalar condition is lifted to sinusoidal features and
// passed through a two-layer SiLU MLP. The backward-direction embeddings
// enter through a zero-initialized gate:
//   xi = (psi_t + psi_k + psi_a) + gamma_cond * (psi_a_inv + psi_k_f)
//
// Block, per frame of a K-frame chunk:
//   z~  = z  + SA(z; xi)
//   z1  = z~ + gamma_past * PA(z~, z_past; M_past, xi)
//   z2  = z1 + gamma_fut  * FA(z1, z_fut;  M_fut,  xi)
// and across the chunk
//   z3  = z2 + gamma_tau  * CA(z2; K)
// xi modulates the query-side tokens as h = x * (1 + scale) + shift with
// (scale, shift) an affine function of xi. CA attends over the K frames at
// every spatial token and returns the attended value minus the token's own
// value, so a single-frame chunk contributes nothing.
//
// All gradients are hand-derived; finite_diff_grad_check verifies them.
#pragma once

#include "drnwm/mask_builder.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drnwm::acdit {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// K frames of L x d tokens.
using TokenTensor = std::vector<Mat>;

// Primitive ------------------------------------------------------------------

/// Row-major boolean mask in query x key orientation.
using QueryMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Transposes a stored source-row x goal-column mask into query(goal) x
/// key(source) orientation.
QueryMask to_query_mask(const masks::AttentionMask& m);

/// softmax(Q K^T / sqrt(d) with disallowed logits at -inf) V. Throws
/// InvalidArgument when a query row has no allowed key.
Mat attention(const Mat& q, const Mat& k, const Mat& v, const QueryMask* allowed = nullptr,
              Mat* weights = nullptr);

/// Raw masked attention with keys = values = `kv`.
Mat masked_cross_attention(const Mat& queries, const Mat& kv, const masks::AttentionMask& mask);

// Conditioning ---------------------------------------------------------------

struct ScalarEmbedder {
  int components = 1;
  int frequencies = 8;
  Mat w1;  // hidden x (2 * frequencies * components)
  Vec b1;
  Mat w2;  // d x hidden
  Vec b2;

  int feature_dim() const { return 2 * frequencies * components; }
  Vec features(std::span<const double> v) const;
  Vec embed(std::span<const double> v) const;
};

Vec embed_scalar(const ScalarEmbedder& e, std::span<const double> v);

struct ConditionVector {
  Vec base;
  Vec fut;
  Vec xi;
  double gamma_cond = 0.0;
};

ConditionVector combine_conditions(const Vec& psi_t, const Vec& psi_k, const Vec& psi_a,
                                   const Vec& psi_a_inv, const Vec& psi_k_f, double gamma_cond);

/// Scalars attached to one target frame.
struct FrameCondition {
  double t = 0.0;      // diffusion step
  double k = 0.0;      // offset from the past anchor, in steps
  std::array<double, 3> action{};
  std::array<double, 3> inverse_action{};
  double k_f = 0.0;    // offset to the future anchor, in steps
};

// Parameters -----------------------------------------------------------------

struct AttentionParams {
  Mat wq, wk, wv, wo;  // d x d, tokens multiply on the left (X * W)
  bool modulated = true;
  Mat w_mod;           // 2d x d
  Vec b_mod;           // 2d
};

struct AcDitConfig {
  int d = 32;
  int hidden = 64;
  int frequencies = 8;
};

struct AcDitModel {
  AcDitConfig config;
  ScalarEmbedder emb_t, emb_k, emb_a, emb_a_inv, emb_k_f;
  double gamma_cond = 0.0;
  AttentionParams sa, pa, fa, ca;
  double gamma_past = 0.0;
  double gamma_fut = 0.0;
  double gamma_tau = 0.0;

  /// Random weights, every gate zero.
  static AcDitModel initialize(const AcDitConfig& cfg, std::uint64_t seed);
  /// Same shapes, all zeros (gradient accumulator).
  AcDitModel zeros_like() const;
};

struct ParamSlot {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;  // 1 for vectors and scalars

  Eigen::Index size() const { return rows * cols; }
};

/// Every trainable array in a fixed order. Scalars appear as 1x1 slots.
std::vector<ParamSlot> parameter_slots(AcDitModel& m);

// Block ----------------------------------------------------------------------

struct ChunkInput {
  TokenTensor z;  // K frames, L x d
  Mat z_past;     // L x d
  Mat z_fut;      // L x d
  // Per-frame masks in stored orientation; empty means unmasked.
  std::vector<masks::MaskPair> masks;
  std::vector<FrameCondition> cond;  // K entries
};

std::vector<ConditionVector> chunk_conditions(const AcDitModel& m, const ChunkInput& in);

TokenTensor block_forward(const AcDitModel& m, const ChunkInput& in);
/// z~ for every frame (the output when all gates are zero).
TokenTensor sa_only_forward(const AcDitModel& m, const ChunkInput& in);

struct LossAndGrad {
  double loss = 0.0;
  AcDitModel grad;
};

/// denoising_loss(target, block_forward(in)) and its gradient with respect to
/// every parameter.
LossAndGrad loss_and_grad(const AcDitModel& m, const ChunkInput& in, const TokenTensor& target);

// Diffusion objective ----------------------------------------------------------

class DiffusionSchedule {
 public:
  /// Betas linear in [beta_start, beta_end] over `steps` steps.
  static DiffusionSchedule linear(int steps, double beta_start, double beta_end);
  /// Linear schedule with the endpoints rescaled by 1000 / steps, so a short
  /// schedule still drives alpha_bar(T) close to zero.
  static DiffusionSchedule scaled_linear(int steps);

  int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  /// alpha_bar(0) = 1.
  double alpha_bar(int t) const;

 private:
  std::vector<double> alpha_bar_;
};

TokenTensor diffuse_forward(const TokenTensor& x0, int t, const TokenTensor& eps,
                            const DiffusionSchedule& sched);

double denoising_loss(const TokenTensor& eps, const TokenTensor& eps_pred);

/// Gradient-descent loop on the denoising loss over random synthetic chunks.
/// Demonstration only; returns the per-step loss.
std::vector<double> train_toy(AcDitModel& m, int tokens, int frames, int steps,
                              double learning_rate, std::uint64_t seed);

// Verification -----------------------------------------------------------------

struct GradCheckSample {
  std::string name;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckSample> samples;
  double max_rel_error = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Central differences of `loss` at `n_samples` entries drawn from `slots`
/// (slots named in `always` are sampled first, one entry each) against the
/// analytic gradient laid out identically in `grad_slots`. Throws Error on a
/// non-finite gradient.
GradCheckReport finite_diff_grad_check(std::span<const ParamSlot> slots,
                                       std::span<const ParamSlot> grad_slots,
                                       const std::function<double()>& loss, double h,
                                       int n_samples, std::uint64_t seed,
                                       std::span<const std::string> always = {});

/// Whole-model check of denoising_loss o block_forward.
GradCheckReport check_block_gradients(AcDitModel& m, const ChunkInput& in,
                                      const TokenTensor& target, double h, int n_samples,
                                      std::uint64_t seed);

/// Random chunk with L tokens, K frames, unmasked.
ChunkInput random_chunk(const AcDitConfig& cfg, int tokens, int frames, std::uint64_t seed);
TokenTensor random_tokens(int frames, int tokens, int d, std::uint64_t seed);

// Checkpoints ------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const AcDitModel& m, int tokens,
                     int frames);
/// Loads into a model of matching configuration; returns (L, K) from the
/// header.
std::pair<int, int> load_checkpoint(const std::filesystem::path& path, AcDitModel& m);

}  // namespace drnwm::acdit
