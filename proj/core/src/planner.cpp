#include "drnwm/planner.hpp"

#include "drnwm/csv.hpp"
#include "drnwm/error.hpp"
#include "drnwm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace drnwm::planner {

void CemConfig::validate() const {
  if (population < 1) throw InvalidArgument("cem: population must be >= 1");
  if (elites < 1 || elites > population) throw InvalidArgument("cem: need 0 < elites <= population");
  if (iterations < 1) throw InvalidArgument("cem: iterations must be >= 1");
  if (horizon < 1) throw InvalidArgument("cem: horizon must be >= 1");
  if (!(init_std.dx > 0 && init_std.dy > 0 && init_std.dyaw > 0)) {
    throw InvalidArgument("cem: init std must be positive");
  }
  if (!(std_floor > 0)) throw InvalidArgument("cem: std floor must be positive");
  if (!(std_smoothing >= 0.0 && std_smoothing < 1.0)) {
    throw InvalidArgument("cem: std smoothing must be in [0, 1)");
  }
}

CemTrace cem_optimize(const ScoreFn& score, std::vector<double> mean, std::vector<double> stdv,
                      int population, int elites, int iterations, double std_floor,
                      double std_smoothing, std::uint64_t seed) {
  if (mean.empty() || mean.size() != stdv.size()) {
    throw InvalidArgument("cem: mean and std must be non-empty and equal length");
  }
  if (population < 1 || elites < 1 || elites > population || iterations < 1) {
    throw InvalidArgument("cem: need population >= elites >= 1 and iterations >= 1");
  }
  if (!(std_smoothing >= 0.0 && std_smoothing < 1.0)) {
    throw InvalidArgument("cem: std smoothing must be in [0, 1)");
  }
  const std::size_t dim = mean.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  CemTrace trace;
  trace.best_score = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> pop(static_cast<std::size_t>(population),
                                       std::vector<double>(dim));
  std::vector<double> scores(static_cast<std::size_t>(population));

  for (int it = 0; it < iterations; ++it) {
    for (auto& c : pop) {
      for (std::size_t j = 0; j < dim; ++j) c[j] = mean[j] + stdv[j] * normal(rng);
    }
    parallel_for(pop.size(), [&](std::size_t i) { scores[i] = score(pop[i]); });

    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return scores[a] < scores[b]; });

    CemIteration rec;
    rec.mean_score = std::accumulate(scores.begin(), scores.end(), 0.0) / population;
    if (scores[order[0]] < trace.best_score) {
      trace.best_score = scores[order[0]];
      trace.best = pop[order[0]];
    }
    std::vector<double> new_mean(dim, 0.0);
    std::vector<double> new_std(dim, 0.0);
    for (int e = 0; e < elites; ++e) {
      const auto& c = pop[order[static_cast<std::size_t>(e)]];
      rec.elite_score += scores[order[static_cast<std::size_t>(e)]] / elites;
      for (std::size_t j = 0; j < dim; ++j) new_mean[j] += c[j] / elites;
    }
    for (int e = 0; e < elites; ++e) {
      const auto& c = pop[order[static_cast<std::size_t>(e)]];
      for (std::size_t j = 0; j < dim; ++j) {
        new_std[j] += (c[j] - new_mean[j]) * (c[j] - new_mean[j]) / elites;
      }
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const double refit = std_smoothing * stdv[j] + (1.0 - std_smoothing) * std::sqrt(new_std[j]);
      new_std[j] = std::max(refit, std_floor);
    }
    mean = std::move(new_mean);
    stdv = std::move(new_std);
    rec.best_score = trace.best_score;
    rec.mean = mean;
    rec.best = trace.best;
    trace.iterations.push_back(std::move(rec));
  }
  return trace;
}

std::string to_string(Strategy s) {
  return s == Strategy::autoregressive ? "autoregressive" : "anchor";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "autoregressive" || s == "ar") return Strategy::autoregressive;
  if (s == "anchor") return Strategy::anchor;
  throw InvalidArgument("unknown strategy '" + s + "'");
}

std::vector<Action> unpack_actions(std::span<const double> v) {
  if (v.size() % 3 != 0) throw InvalidArgument("action vector length must be a multiple of 3");
  std::vector<Action> out(v.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return out;
}

std::vector<double> pack_actions(std::span<const Action> a) {
  std::vector<double> out;
  out.reserve(a.size() * 3);
  for (const auto& x : a) {
    out.push_back(x.dx);
    out.push_back(x.dy);
    out.push_back(x.dyaw);
  }
  return out;
}

double score_candidate(const ScoringContext& ctx, std::span<const Action> actions) {
  if (!ctx.generator || !ctx.goal) throw InvalidArgument("score_candidate: missing generator or goal");
  if (actions.empty()) throw InvalidArgument("score_candidate: empty action sequence");
  const int n = static_cast<int>(ctx.history.size());
  rollout::RolloutResult r;
  if (ctx.strategy == Strategy::autoregressive) {
    r = rollout::rollout_autoregressive(*ctx.generator, ctx.history, actions, n, ctx.seed);
  } else {
    const auto plan = rollout::schedule_anchors(static_cast<int>(actions.size()),
                                                std::min<int>(ctx.anchor_interval,
                                                              static_cast<int>(actions.size())));
    rollout::AnchorOptions opts;
    opts.history = n;
    opts.seed = ctx.seed;
    r = rollout::rollout_anchor_guided(*ctx.generator, ctx.history, actions, plan, opts);
  }
  return world::image_mse(r.frames.back().image, *ctx.goal);
}

namespace {

std::vector<world::Pose> poses_along(const world::Pose& start, std::span<const Action> actions) {
  std::vector<world::Pose> out;
  world::Pose p = start;
  for (const auto& a : actions) {
    p = world::apply_action(p, a);
    out.push_back(p);
  }
  return out;
}

metrics::TrajectoryErrors evaluate(const world::Pose& start, std::span<const Action> actions,
                                   std::span<const world::Pose> gt_path) {
  auto pred = poses_along(start, actions);
  // Prepend the shared start so single-step plans still have two positions.
  std::vector<world::Pose> p{start}, g{start};
  p.insert(p.end(), pred.begin(), pred.end());
  g.insert(g.end(), gt_path.begin(), gt_path.end());
  return metrics::trajectory_errors(metrics::positions(p), metrics::positions(g));
}

}  // namespace

PlanResult cem_plan(const ScoringContext& ctx, const world::Pose& start,
                    std::span<const world::Pose> gt_path, const CemConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(gt_path.size()) != cfg.horizon) {
    throw InvalidArgument("cem_plan: ground-truth path must have one pose per step");
  }
  std::vector<Action> m0(static_cast<std::size_t>(cfg.horizon), cfg.init_mean);
  std::vector<Action> s0(static_cast<std::size_t>(cfg.horizon), cfg.init_std);
  const auto trace = cem_optimize(
      [&](std::span<const double> v) { return score_candidate(ctx, unpack_actions(v)); },
      pack_actions(m0), pack_actions(s0), cfg.population, cfg.elites, cfg.iterations,
      cfg.std_floor, cfg.std_smoothing, cfg.seed);

  PlanResult r;
  r.actions = unpack_actions(trace.best);
  r.trajectory = poses_along(start, r.actions);
  r.errors = evaluate(start, r.actions, gt_path);
  r.iterations = trace.iterations;
  for (const auto& it : trace.iterations) {
    r.iteration_errors.push_back(evaluate(start, unpack_actions(it.best), gt_path));
  }
  return r;
}

std::string format_plan_csv(const PlanResult& r) {
  csv::Table t;
  t.header = {"iteration", "best_score", "mean_score", "ate", "fde", "rpe"};
  for (std::size_t i = 0; i < r.iterations.size(); ++i) {
    const auto& e = r.iteration_errors[i];
    t.rows.push_back({std::to_string(i + 1), csv::format_number(r.iterations[i].best_score),
                      csv::format_number(r.iterations[i].mean_score), csv::format_number(e.ate),
                      csv::format_number(e.fde), csv::format_number(e.rpe)});
  }
  return csv::format_table(t);
}

}  // namespace drnwm::planner
