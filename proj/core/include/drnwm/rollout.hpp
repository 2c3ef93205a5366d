// Rollout strategies over an abstract frame generator.
//
// Step indexing: observed history occupies steps -N+1..0, action a_s (1-based)
// moves the agent from step s-1 to step s, and the rollout predicts steps
// 1..S.
#pragma once

#include "drnwm/mask_builder.hpp"
#include "drnwm/synthetic_world.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace drnwm::rollout {

using world::Action;
using world::Frame;

enum class CallKind { autoregressive, anchor, chunk };

struct GenerationRequest {
  std::span<const Frame> context;          // oldest first
  std::span<const Action> forward_actions;  // from the last context frame to the target
  const Frame* future_anchor = nullptr;
  std::optional<std::span<const Action>> inverse_actions;  // from the anchor back to the target
  const masks::MaskPair* masks = nullptr;
  int target_step = 0;
  CallKind kind = CallKind::autoregressive;
  std::uint64_t seed = 0;
};

/// p_theta. Implementations must be deterministic in the request (including
/// its seed) and safe to call concurrently.
class FrameGenerator {
 public:
  virtual ~FrameGenerator() = default;
  virtual Frame generate(const GenerationRequest& req) const = 0;
};

struct RolloutPlan {
  int horizon = 0;
  int interval = 0;
  std::vector<int> anchors;                 // k_1 < ... < k_M = horizon
  std::vector<std::pair<int, int>> chunks;  // (k_{m-1}, k_m), k_0 = 0

  void validate() const;
};

/// Anchors every `interval` steps; the last anchor is forced onto S so a
/// remainder forms a shorter final chunk.
RolloutPlan schedule_anchors(int horizon, int interval);

struct RolloutResult {
  std::vector<Frame> frames;       // steps 1..S
  std::vector<bool> is_anchor;
  std::vector<int> chunk_index;    // 1-based chunk id; 0 for autoregressive steps
  std::vector<double> mse;         // filled by attach_oracle_mse
  int generator_calls = 0;
};

/// Supplies masks for one chunk target given the past reference frame, the
/// future anchor, and the actions from the past reference to the target.
using MaskProvider = std::function<std::optional<masks::MaskPair>(
    const Frame& past, const Frame& future, std::span<const Action> forward, int target_step)>;

struct AnchorOptions {
  int history = 4;                // N
  bool use_future_anchor = true;  // pass c_future and inverse actions to chunk calls
  bool joint_chunk = true;        // chunk frames share the window ending at k_{m-1}
  MaskProvider masks;             // empty: no masks
  std::uint64_t seed = 0;
};

RolloutResult rollout_autoregressive(const FrameGenerator& gen, std::span<const Frame> history,
                                     std::span<const Action> actions, int history_n,
                                     std::uint64_t seed);

RolloutResult rollout_anchor_guided(const FrameGenerator& gen, std::span<const Frame> history,
                                    std::span<const Action> actions, const RolloutPlan& plan,
                                    const AnchorOptions& options);

void attach_oracle_mse(RolloutResult& result, std::span<const world::Image> oracle_frames);

/// `step,is_anchor,mse,chunk_index` rows for steps 1..S.
std::string format_trace_csv(const RolloutResult& result);

/// Per-call seed derived from a rollout seed; distinct per (kind, step).
std::uint64_t call_seed(std::uint64_t base, CallKind kind, int step);

// Synthetic-world generators ------------------------------------------------

/// Renders the exact target view. Ignores anchors and masks.
class OracleGenerator : public FrameGenerator {
 public:
  OracleGenerator(const world::Scene& scene, world::CameraIntrinsics intr)
      : scene_(&scene), intr_(intr) {}
  Frame generate(const GenerationRequest& req) const override;

 protected:
  const world::Scene* scene_;
  world::CameraIntrinsics intr_;
};

/// Oracle view plus errors inherited from the conditioning frames and fresh
/// Gaussian noise whose scale grows with how corrupted the context is:
///   sigma = sigma_base + lambda * mean_context_mse.
/// The inherited residual is the past reference's deviation from its own
/// clean view; with a future anchor it is interpolated toward the anchor's
/// residual by temporal position. Masks are ignored.
class NoisyOracleGenerator : public OracleGenerator {
 public:
  NoisyOracleGenerator(const world::Scene& scene, world::CameraIntrinsics intr, double sigma_base,
                       double lambda)
      : OracleGenerator(scene, intr), sigma_base_(sigma_base), lambda_(lambda) {}
  Frame generate(const GenerationRequest& req) const override;

 private:
  double sigma_base_;
  double lambda_;
};

/// History frames at steps -n+1..0 ending at `current`, reached by repeating
/// `approach` (rendered exactly).
std::vector<Frame> make_history(const world::Scene& scene, const world::CameraIntrinsics& intr,
                                const world::Pose& current, const Action& approach, int n);

/// Ground-truth frames for steps 1..S.
std::vector<world::Image> oracle_frames(const world::Scene& scene,
                                        const world::CameraIntrinsics& intr,
                                        const world::Pose& start, std::span<const Action> actions);

}  // namespace drnwm::rollout
