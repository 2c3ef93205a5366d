// Cross-Entropy Method planning over action sequences.
#pragma once

#include "drnwm/metrics.hpp"
#include "drnwm/rollout.hpp"
#include "drnwm/synthetic_world.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace drnwm::planner {

using world::Action;

struct CemConfig {
  int population = 32;
  int elites = 6;
  int iterations = 8;
  int horizon = 4;  // steps
  Action init_mean{0.5, 0.0, 0.0};
  Action init_std{0.3, 0.3, 0.15};
  double std_floor = 1e-3;
  double std_smoothing = 0.3;  // weight of the previous std in each refit
  std::uint64_t seed = 0;

  void validate() const;
};

struct CemIteration {
  double best_score = 0.0;  // best ever, up to and including this iteration
  double mean_score = 0.0;  // population mean this iteration
  double elite_score = 0.0; // mean of this iteration's elites
  std::vector<double> mean; // distribution mean after the refit
  std::vector<double> best; // best-ever candidate after this iteration
};

struct CemTrace {
  std::vector<double> best;
  double best_score = 0.0;
  std::vector<CemIteration> iterations;
};

using ScoreFn = std::function<double(std::span<const double> candidate)>;

/// Diagonal-Gaussian CEM minimizing `score` over vectors of size
/// mean0.size(). Candidates are sampled sequentially from one seeded stream,
/// scored in parallel, and reduced in candidate order. The mean is refit to
/// the elites; the std becomes
/// std_smoothing * previous + (1 - std_smoothing) * elite std, floored.
CemTrace cem_optimize(const ScoreFn& score, std::vector<double> mean0, std::vector<double> std0,
                      int population, int elites, int iterations, double std_floor,
                      double std_smoothing, std::uint64_t seed);

enum class Strategy { autoregressive, anchor };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct ScoringContext {
  const rollout::FrameGenerator* generator = nullptr;
  std::span<const world::Frame> history;
  const world::Image* goal = nullptr;
  Strategy strategy = Strategy::autoregressive;
  int anchor_interval = 2;
  std::uint64_t seed = 0;
};

/// Pixel MSE between the rolled-out terminal frame and the goal image.
double score_candidate(const ScoringContext& ctx, std::span<const Action> actions);

struct PlanResult {
  std::vector<Action> actions;
  std::vector<world::Pose> trajectory;  // steps 1..H
  metrics::TrajectoryErrors errors;
  std::vector<CemIteration> iterations;
  std::vector<metrics::TrajectoryErrors> iteration_errors;  // of each best-ever candidate
};

/// Plans H actions from `start` toward the goal image. `gt_path` (poses at
/// steps 1..H) is used only for evaluation.
PlanResult cem_plan(const ScoringContext& ctx, const world::Pose& start,
                    std::span<const world::Pose> gt_path, const CemConfig& cfg);

/// `iteration,best_score,mean_score,ate,fde,rpe`.
std::string format_plan_csv(const PlanResult& r);

std::vector<Action> unpack_actions(std::span<const double> v);
std::vector<double> pack_actions(std::span<const Action> a);

}  // namespace drnwm::planner
