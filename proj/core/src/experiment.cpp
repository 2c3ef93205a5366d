#include "drnwm/experiment.hpp"

#include "drnwm/error.hpp"
#include "drnwm/geometry.hpp"
#include "drnwm/mask_builder.hpp"
#include "drnwm/metrics.hpp"
#include "drnwm/parallel.hpp"
#include "drnwm/planner.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>
#include <tuple>

namespace drnwm::experiment {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t base, std::uint64_t tag) { return mix(mix(base) ^ tag); }

using csv::format_number;

std::vector<world::Action> repeat(const world::Action& a, int n) {
  return std::vector<world::Action>(static_cast<std::size_t>(n), a);
}

world::CorrespondenceOptions corr_options(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  world::CorrespondenceOptions o;
  o.noise_px = cfg.noise_px;
  o.outlier_rate = cfg.outlier_rate;
  o.invalid_rate = cfg.invalid_rate;
  o.max_pairs = cfg.max_pairs;
  o.seed = seed;
  return o;
}

struct Triplet {
  masks::TripletGeometry geo;
  masks::MaskPair masks;
  bool used = false;
};

// Matches for the three pairs of a (past, goal, future) triplet, then gated
// masks. Too few co-visible points yields an ungated all-true pair.
Triplet build_triplet(const config::ExperimentConfig& cfg, const World& w, const world::Pose& past,
                      const world::Pose& fut, const world::Pose& goal, std::uint64_t seed) {
  Triplet t;
  try {
    const auto pg = world::sample_correspondences(w.scene, w.intr, past, goal,
                                                  corr_options(cfg, derive(seed, 1)));
    const auto pf = world::sample_correspondences(w.scene, w.intr, past, fut,
                                                  corr_options(cfg, derive(seed, 2)));
    const auto fg = world::sample_correspondences(w.scene, w.intr, fut, goal,
                                                  corr_options(cfg, derive(seed, 3)));
    t.geo = masks::estimate_triplet_geometry(pg.corrs, pf.corrs, fg.corrs, cfg.mask_params,
                                             derive(seed, 4));
    t.masks = masks::masks_for_triplet(t.geo, cfg.grid, cfg.mask_params.tau_rel, &t.used);
  } catch (const InvalidArgument&) {
    t.masks = {masks::AttentionMask::all_true(cfg.grid.tokens()),
               masks::AttentionMask::all_true(cfg.grid.tokens())};
    t.used = false;
  }
  return t;
}

std::vector<std::string> metrics_row(const std::string& strategy, int horizon,
                                     std::optional<double> mse, std::optional<double> ed,
                                     std::optional<double> se,
                                     std::optional<metrics::TrajectoryErrors> traj) {
  std::optional<double> p;
  if (mse) p = metrics::psnr(*mse);
  return {strategy,
          std::to_string(horizon),
          csv::format_optional(mse),
          csv::format_optional(p),
          csv::format_optional(ed),
          csv::format_optional(se),
          traj ? format_number(traj->ate) : "",
          traj ? format_number(traj->fde) : "",
          traj ? format_number(traj->rpe) : ""};
}

std::string anchor_label(int interval) { return "anchor_i" + std::to_string(interval); }

struct SweepResult {
  std::vector<double> terminal;  // per seed
  metrics::DriftCurve mean;
  rollout::RolloutResult first;  // seed 0, with mse attached
};

struct Variant {
  bool anchor = false;
  int interval = 1;
  bool future_anchor = true;
  bool epi_mask = true;
  bool chunk = true;
};

SweepResult sweep(const config::ExperimentConfig& cfg, const World& w, int horizon,
                  const Variant& v, const rollout::MaskProvider& provider) {
  const rollout::NoisyOracleGenerator gen(w.scene, w.intr, cfg.sigma_base, cfg.lambda);
  const std::span<const world::Action> actions(w.actions.data(), static_cast<std::size_t>(horizon));
  const auto oracle = rollout::oracle_frames(w.scene, w.intr, w.start, actions);
  std::vector<rollout::RolloutResult> runs(static_cast<std::size_t>(cfg.seeds));
  parallel_for(runs.size(), [&](std::size_t i) {
    const auto seed = rollout_seed(cfg.seed, static_cast<int>(i));
    if (!v.anchor) {
      runs[i] = rollout::rollout_autoregressive(gen, w.history, actions, cfg.history, seed);
    } else {
      rollout::AnchorOptions opt;
      opt.history = cfg.history;
      opt.use_future_anchor = v.future_anchor;
      opt.joint_chunk = v.chunk;
      if (v.epi_mask) opt.masks = provider;
      opt.seed = seed;
      runs[i] = rollout::rollout_anchor_guided(
          gen, w.history, actions, rollout::schedule_anchors(horizon, std::min(v.interval, horizon)),
          opt);
    }
    rollout::attach_oracle_mse(runs[i], oracle);
  });
  SweepResult r;
  std::vector<metrics::DriftCurve> curves;
  for (const auto& run : runs) {
    r.terminal.push_back(run.mse.back());
    curves.push_back(metrics::drift_curve(run, oracle, ""));
  }
  r.mean = metrics::mean_curve(curves);
  r.first = std::move(runs.front());
  return r;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

void stage_simulate(const config::ExperimentConfig& cfg, const World& w, Outputs& out) {
  out.files["scene.txt"] = world::format_scene(w.scene);
  csv::Table t;
  t.header = {"horizon", "pairs", "valid", "outliers", "inliers_found", "exact_recovery",
              "mean_ed", "mean_se"};
  for (int h : cfg.horizon_steps()) {
    const auto& goal = w.path[static_cast<std::size_t>(h - 1)];
    std::optional<double> ed, se;
    std::string pairs = "0", valid = "0", outliers = "0", found = "0", exact = "0";
    try {
      const auto lc = world::sample_correspondences(
          w.scene, w.intr, w.start, goal, corr_options(cfg, derive(cfg.seed, 100 + h)));
      const auto res = geometry::ransac_fundamental(
          lc.corrs, cfg.mask_params.ransac_threshold_px, cfg.mask_params.ransac_iters,
          derive(cfg.seed, 200 + h));
      std::size_t n_valid = 0, n_out = 0;
      std::vector<std::size_t> truth;
      for (std::size_t i = 0; i < lc.corrs.size(); ++i) {
        if (!lc.corrs[i].valid) continue;
        ++n_valid;
        if (lc.outlier[i]) ++n_out;
        else truth.push_back(i);
      }
      pairs = std::to_string(lc.corrs.size());
      valid = std::to_string(n_valid);
      outliers = std::to_string(n_out);
      found = std::to_string(res.n());
      exact = res.inliers == truth ? "1" : "0";
      if (res.f) {
        std::vector<geometry::Correspondence> clean;
        for (std::size_t i : truth) clean.push_back(lc.corrs[i]);
        const auto st = metrics::epipolar_stats(clean, *res.f);
        ed = st.mean_ed;
        se = st.mean_se;
      }
    } catch (const InvalidArgument&) {
    }
    t.rows.push_back({std::to_string(h), pairs, valid, outliers, found, exact,
                      csv::format_optional(ed), csv::format_optional(se)});
    out.metrics.rows.push_back(metrics_row("geometry", h, std::nullopt, ed, se, std::nullopt));
  }
  out.files["matches.csv"] = csv::format_table(t);
}

void stage_masks(const config::ExperimentConfig& cfg, const World& w, Outputs& out) {
  const int S = cfg.max_horizon();
  const auto plan = rollout::schedule_anchors(S, std::min(cfg.ablation_interval, S));
  csv::Table t;
  t.header = {"target_step", "past_step", "future_step", "r_pg", "r_pf", "r_fg", "gated",
              "past_constrained", "fut_constrained"};
  std::vector<masks::MaskPair> seq;
  auto pose_at = [&](int step) { return step == 0 ? w.start : w.path[static_cast<std::size_t>(step - 1)]; };
  for (const auto& [k_prev, k_next] : plan.chunks) {
    for (int s = k_prev + 1; s < k_next; ++s) {
      const int base = cfg.chunk ? k_prev : s - 1;
      const auto tri = build_triplet(cfg, w, pose_at(base), pose_at(k_next), pose_at(s),
                                     derive(cfg.seed, mix(static_cast<std::uint64_t>(base) << 40 |
                                                          static_cast<std::uint64_t>(k_next) << 20 |
                                                          static_cast<std::uint64_t>(s))));
      seq.push_back(tri.masks);
      t.rows.push_back({std::to_string(s), std::to_string(base), std::to_string(k_next),
                        format_number(tri.geo.r_pg), format_number(tri.geo.r_pf),
                        format_number(tri.geo.r_fg), tri.used ? "1" : "0",
                        std::to_string(tri.masks.past.constrained_rows()),
                        std::to_string(tri.masks.fut.constrained_rows())});
    }
  }
  const auto smoothed = masks::smooth_pairs(seq, cfg.mask_params.alpha, cfg.mask_params.tau_temp);
  const auto bytes = masks::encode_mask_sequence(smoothed);
  out.files["masks.drnm"] = std::string(bytes.begin(), bytes.end());
  out.files["masks.csv"] = csv::format_table(t);
}

void stage_rollout(const config::ExperimentConfig& cfg, const World& w,
                   const rollout::MaskProvider& provider, Outputs& out) {
  const int S = cfg.max_horizon();
  csv::Table drift;
  drift.header = {"strategy", "step", "mse", "psnr"};
  for (int h : cfg.horizon_steps()) {
    std::vector<std::pair<std::string, Variant>> variants{{"autoregressive", Variant{}}};
    for (int k : cfg.intervals) {
      variants.emplace_back(anchor_label(k),
                            Variant{true, k, cfg.future_anchor, cfg.epi_mask, cfg.chunk});
    }
    for (const auto& [label, v] : variants) {
      const auto r = sweep(cfg, w, h, v, provider);
      out.metrics.rows.push_back(
          metrics_row(label, h, mean_of(r.terminal), std::nullopt, std::nullopt, std::nullopt));
      if (h == S) {
        out.files["trace_" + label + ".csv"] = rollout::format_trace_csv(r.first);
        for (std::size_t i = 0; i < r.mean.horizon.size(); ++i) {
          drift.rows.push_back({label, std::to_string(r.mean.horizon[i]),
                                format_number(r.mean.mse[i]), format_number(r.mean.psnr[i])});
        }
      }
    }
  }
  out.files["drift.csv"] = csv::format_table(drift);
}

void stage_ablate(const config::ExperimentConfig& cfg, const World& w,
                  const rollout::MaskProvider& provider, Outputs& out) {
  const int S = cfg.max_horizon();
  csv::Table t;
  t.header = {"future_anchor", "epi_mask", "chunk",     "horizon",
              "interval",      "mean_mse", "mean_psnr", "terminal_mse"};
  for (int bits = 7; bits >= 0; --bits) {
    const Variant v{true, cfg.ablation_interval, (bits & 4) != 0, (bits & 2) != 0, (bits & 1) != 0};
    const auto r = sweep(cfg, w, S, v, provider);
    const double m = mean_of(r.mean.mse);
    t.rows.push_back({v.future_anchor ? "1" : "0", v.epi_mask ? "1" : "0", v.chunk ? "1" : "0",
                      std::to_string(S), std::to_string(cfg.ablation_interval), format_number(m),
                      format_number(metrics::psnr(m)), format_number(mean_of(r.terminal))});
  }
  out.files["ablation.csv"] = csv::format_table(t);
}

void stage_plan(const config::ExperimentConfig& cfg, const World& w, Outputs& out) {
  const int H = cfg.planner.horizon;
  if (H > static_cast<int>(w.path.size())) {
    throw ConfigError(0, "planner.horizon exceeds the longest rollout horizon");
  }
  const rollout::NoisyOracleGenerator gen(w.scene, w.intr, cfg.sigma_base, cfg.lambda);
  const world::Image goal = world::render(w.scene, w.intr, w.path[static_cast<std::size_t>(H - 1)]);
  const std::span<const world::Pose> gt(w.path.data(), static_cast<std::size_t>(H));
  for (auto strategy : cfg.plan_strategies) {
    planner::ScoringContext ctx;
    ctx.generator = &gen;
    ctx.history = w.history;
    ctx.goal = &goal;
    ctx.strategy = strategy;
    ctx.anchor_interval = cfg.plan_anchor_interval;
    ctx.seed = derive(cfg.seed, 300);
    planner::CemConfig pc = cfg.planner;
    pc.seed = derive(cfg.seed, 301);
    const auto r = planner::cem_plan(ctx, w.start, gt, pc);
    const std::string label = "plan_" + planner::to_string(strategy);
    out.files[label + ".csv"] = planner::format_plan_csv(r);
    out.metrics.rows.push_back(metrics_row(label, H, r.iterations.back().best_score, std::nullopt,
                                           std::nullopt, r.errors));
  }
}

}  // namespace

std::string to_string(Stage s) {
  switch (s) {
    case Stage::simulate: return "simulate";
    case Stage::masks: return "masks";
    case Stage::rollout: return "rollout";
    case Stage::ablate: return "ablate";
    case Stage::plan: return "plan";
  }
  return "unknown";
}

const std::set<Stage>& all_stages() {
  static const std::set<Stage> s{Stage::simulate, Stage::masks, Stage::rollout, Stage::ablate,
                                 Stage::plan};
  return s;
}

std::uint64_t rollout_seed(std::uint64_t base, int index) {
  return derive(base, 0x5eed0000ULL + static_cast<std::uint64_t>(index));
}

World make_world(const config::ExperimentConfig& cfg) {
  World w;
  w.scene = world::make_random_scene(derive(cfg.seed, 0), cfg.scene_points);
  w.intr.width = cfg.grid.image_w;
  w.intr.height = cfg.grid.image_h;
  w.intr.cx = cfg.grid.image_w / 2.0;
  w.intr.cy = cfg.grid.image_h / 2.0;
  w.intr.fx = w.intr.fy = cfg.grid.image_w / 2.0;
  w.intr.validate();
  w.history = rollout::make_history(w.scene, w.intr, w.start, cfg.motion, cfg.history);
  const int S = std::max(cfg.max_horizon(), cfg.planner.horizon);
  w.actions = repeat(cfg.motion, S);
  world::Pose p = w.start;
  for (const auto& a : w.actions) {
    p = world::apply_action(p, a);
    w.path.push_back(p);
  }
  return w;
}

rollout::MaskProvider make_mask_provider(const config::ExperimentConfig& cfg, const World& w) {
  struct Cache {
    std::mutex mu;
    std::map<std::tuple<int, int, int>, std::optional<masks::MaskPair>> entries;
  };
  auto cache = std::make_shared<Cache>();
  return [cache, cfg, &w](const world::Frame& past, const world::Frame& fut,
                          std::span<const world::Action> forward,
                          int target) -> std::optional<masks::MaskPair> {
    const auto key = std::make_tuple(past.step, fut.step, target);
    {
      std::lock_guard lock(cache->mu);
      auto it = cache->entries.find(key);
      if (it != cache->entries.end()) return it->second;
    }
    const world::Pose goal = world::apply_actions(past.pose, forward);
    const auto seed = derive(cfg.seed, mix(static_cast<std::uint64_t>(past.step + 1024) << 40 |
                                           static_cast<std::uint64_t>(fut.step) << 20 |
                                           static_cast<std::uint64_t>(target)));
    auto tri = build_triplet(cfg, w, past.pose, fut.pose, goal, seed);
    std::optional<masks::MaskPair> value;
    if (tri.used) value = std::move(tri.masks);
    std::lock_guard lock(cache->mu);
    return cache->entries.emplace(key, std::move(value)).first->second;
  };
}

Outputs run_stages(const config::ExperimentConfig& cfg, const std::set<Stage>& stages) {
  cfg.validate();
  const World w = make_world(cfg);
  const auto provider = make_mask_provider(cfg, w);
  Outputs out;
  out.metrics.header = kMetricsHeader;
  if (stages.count(Stage::simulate)) stage_simulate(cfg, w, out);
  if (stages.count(Stage::masks)) stage_masks(cfg, w, out);
  if (stages.count(Stage::rollout)) stage_rollout(cfg, w, provider, out);
  if (stages.count(Stage::ablate)) stage_ablate(cfg, w, provider, out);
  if (stages.count(Stage::plan)) stage_plan(cfg, w, out);
  return out;
}

std::vector<std::string> write_outputs(const std::filesystem::path& dir,
                                       const config::ExperimentConfig& cfg,
                                       const std::string& command, Outputs out) {
  std::filesystem::create_directories(dir);
  out.files["metrics.csv"] = csv::format_table(out.metrics);
  Manifest m;
  m.command = command;
  m.config_hash = config::fnv1a_hex(cfg.canonical());
  m.seed = cfg.seed;
  for (const auto& [name, bytes] : out.files) {
    csv::write_text(dir / name, bytes);
    m.files.push_back(name);
  }
  csv::write_text(dir / "config.canonical", cfg.canonical());
  m.files.push_back("config.canonical");
  csv::write_text(dir / "manifest.txt", format_manifest(m));
  return m.files;
}

std::filesystem::path run_experiment(const config::ExperimentConfig& cfg) {
  write_outputs(cfg.output_dir, cfg, "run", run_stages(cfg, all_stages()));
  return cfg.output_dir;
}

std::filesystem::path run_experiment(const std::filesystem::path& config_path) {
  return run_experiment(config::load_config(config_path));
}

std::string format_manifest(const Manifest& m) {
  std::ostringstream o;
  o << "# drnwm manifest\n"
    << "command = " << m.command << "\n"
    << "config_hash = " << m.config_hash << "\n"
    << "seed = " << m.seed << "\n";
  for (const auto& f : m.files) o << "file = " << f << "\n";
  return o.str();
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  bool have_hash = false;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) {
      throw FormatError("manifest line " + std::to_string(n) + ": expected 'key = value'");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "command") m.command = value;
    else if (key == "config_hash") { m.config_hash = value; have_hash = true; }
    else if (key == "seed") m.seed = std::stoull(value);
    else if (key == "file") m.files.push_back(value);
    else throw FormatError("manifest line " + std::to_string(n) + ": unknown key '" + key + "'");
  }
  if (!have_hash) throw FormatError("manifest: missing config_hash");
  return m;
}

}  // namespace drnwm::experiment
