#include "drnwm/rollout.hpp"

#include "drnwm/csv.hpp"
#include "drnwm/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace drnwm::rollout {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_history(std::span<const Frame> history, int n) {
  if (n < 1) throw InvalidArgument("rollout: history length N must be >= 1");
  if (static_cast<int>(history.size()) != n) {
    throw InvalidArgument("rollout: expected " + std::to_string(n) + " history frames, got " +
                          std::to_string(history.size()));
  }
}

// Frames for steps -N+1..S stored contiguously so any trailing window is a
// span.
class Timeline {
 public:
  Timeline(std::span<const Frame> history, int horizon)
      : n_(static_cast<int>(history.size())), frames_(history.size() + horizon) {
    std::copy(history.begin(), history.end(), frames_.begin());
  }
  Frame& at(int step) { return frames_[static_cast<std::size_t>(step + n_ - 1)]; }
  std::span<const Frame> window(int last_step, int len) const {
    return std::span<const Frame>(frames_).subspan(static_cast<std::size_t>(last_step - len + n_), len);
  }
  std::vector<Frame> predictions() && {
    return {std::make_move_iterator(frames_.begin() + n_), std::make_move_iterator(frames_.end())};
  }

 private:
  int n_;
  std::vector<Frame> frames_;
};

Frame run(const FrameGenerator& gen, const GenerationRequest& req) {
  try {
    return gen.generate(req);
  } catch (const std::exception& e) {
    throw Error("generator failed at step " + std::to_string(req.target_step) + ": " + e.what());
  }
}

}  // namespace

std::uint64_t call_seed(std::uint64_t base, CallKind kind, int step) {
  return splitmix64(splitmix64(base) ^ (static_cast<std::uint64_t>(kind) << 32) ^
                    static_cast<std::uint64_t>(static_cast<std::uint32_t>(step)));
}

void RolloutPlan::validate() const {
  if (horizon < 1 || interval < 1) throw InvalidArgument("rollout plan: horizon and interval must be >= 1");
  if (anchors.empty() || anchors.back() != horizon) {
    throw InvalidArgument("rollout plan: last anchor must equal the horizon");
  }
  int prev = 0;
  for (std::size_t m = 0; m < anchors.size(); ++m) {
    if (anchors[m] <= prev) throw InvalidArgument("rollout plan: anchors must increase from k_0 = 0");
    if (m + 1 < anchors.size() && anchors[m] - prev != interval) {
      throw InvalidArgument("rollout plan: anchors must be spaced by the interval");
    }
    if (chunks.size() != anchors.size() || chunks[m] != std::pair{prev, anchors[m]}) {
      throw InvalidArgument("rollout plan: chunks must be consecutive anchor pairs");
    }
    prev = anchors[m];
  }
}

RolloutPlan schedule_anchors(int horizon, int interval) {
  if (horizon < 1 || interval < 1) {
    throw InvalidArgument("schedule_anchors: horizon and interval must be >= 1");
  }
  RolloutPlan plan;
  plan.horizon = horizon;
  plan.interval = interval;
  for (int k = interval; k < horizon; k += interval) plan.anchors.push_back(k);
  plan.anchors.push_back(horizon);
  int prev = 0;
  for (int k : plan.anchors) {
    plan.chunks.emplace_back(prev, k);
    prev = k;
  }
  return plan;
}

RolloutResult rollout_autoregressive(const FrameGenerator& gen, std::span<const Frame> history,
                                     std::span<const Action> actions, int history_n,
                                     std::uint64_t seed) {
  check_history(history, history_n);
  const int S = static_cast<int>(actions.size());
  Timeline tl(history, S);
  RolloutResult res;
  for (int s = 1; s <= S; ++s) {
    GenerationRequest req;
    req.context = tl.window(s - 1, history_n);
    req.forward_actions = actions.subspan(static_cast<std::size_t>(s - 1), 1);
    req.target_step = s;
    req.kind = CallKind::autoregressive;
    req.seed = call_seed(seed, req.kind, s);
    Frame f = run(gen, req);
    f.step = s;
    f.predicted = true;
    tl.at(s) = std::move(f);
    ++res.generator_calls;
  }
  res.frames = std::move(tl).predictions();
  res.is_anchor.assign(static_cast<std::size_t>(S), false);
  res.chunk_index.assign(static_cast<std::size_t>(S), 0);
  return res;
}

RolloutResult rollout_anchor_guided(const FrameGenerator& gen, std::span<const Frame> history,
                                    std::span<const Action> actions, const RolloutPlan& plan,
                                    const AnchorOptions& opt) {
  check_history(history, opt.history);
  plan.validate();
  const int S = plan.horizon;
  if (static_cast<int>(actions.size()) != S) {
    throw InvalidArgument("rollout_anchor_guided: plan horizon " + std::to_string(S) +
                          " does not match " + std::to_string(actions.size()) + " actions");
  }
  const int N = opt.history;
  Timeline tl(history, S);
  RolloutResult res;
  res.is_anchor.assign(static_cast<std::size_t>(S), false);
  res.chunk_index.assign(static_cast<std::size_t>(S), 0);

  // Anchors jump straight from the observed history.
  for (int k : plan.anchors) {
    GenerationRequest req;
    req.context = history;
    req.forward_actions = actions.first(static_cast<std::size_t>(k));
    req.target_step = k;
    req.kind = CallKind::anchor;
    req.seed = call_seed(opt.seed, req.kind, k);
    Frame f = run(gen, req);
    f.step = k;
    f.predicted = true;
    tl.at(k) = std::move(f);
    res.is_anchor[static_cast<std::size_t>(k - 1)] = true;
    ++res.generator_calls;
  }

  for (std::size_t m = 0; m < plan.chunks.size(); ++m) {
    const auto [k_prev, k_next] = plan.chunks[m];
    for (int s = k_prev + 1; s <= k_next; ++s) res.chunk_index[static_cast<std::size_t>(s - 1)] = static_cast<int>(m + 1);
    const Frame& anchor = tl.at(k_next);
    for (int s = k_prev + 1; s < k_next; ++s) {
      const int base = opt.joint_chunk ? k_prev : s - 1;
      GenerationRequest req;
      req.context = tl.window(base, N);
      req.forward_actions = actions.subspan(static_cast<std::size_t>(base),
                                            static_cast<std::size_t>(s - base));
      std::vector<Action> inverse;
      std::optional<masks::MaskPair> mask_pair;
      if (opt.use_future_anchor) {
        inverse = world::invert_action_sequence(
            actions.subspan(static_cast<std::size_t>(s), static_cast<std::size_t>(k_next - s)));
        req.future_anchor = &anchor;
        req.inverse_actions = std::span<const Action>(inverse);
        if (opt.masks) {
          mask_pair = opt.masks(req.context.back(), anchor, req.forward_actions, s);
          if (mask_pair) req.masks = &*mask_pair;
        }
      }
      req.target_step = s;
      req.kind = CallKind::chunk;
      req.seed = call_seed(opt.seed, req.kind, s);
      Frame f = run(gen, req);
      f.step = s;
      f.predicted = true;
      tl.at(s) = std::move(f);
      ++res.generator_calls;
    }
  }
  res.frames = std::move(tl).predictions();
  return res;
}

void attach_oracle_mse(RolloutResult& result, std::span<const world::Image> oracle) {
  if (oracle.size() != result.frames.size()) {
    throw InvalidArgument("attach_oracle_mse: frame counts differ");
  }
  result.mse.resize(oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    result.mse[i] = world::image_mse(result.frames[i].image, oracle[i]);
  }
}

std::string format_trace_csv(const RolloutResult& result) {
  std::ostringstream out;
  out << "step,is_anchor,mse,chunk_index\n";
  for (std::size_t i = 0; i < result.frames.size(); ++i) {
    out << (i + 1) << ',' << (result.is_anchor[i] ? 1 : 0) << ',';
    if (i < result.mse.size()) out << csv::format_number(result.mse[i]);
    out << ',' << result.chunk_index[i] << '\n';
  }
  return out.str();
}

Frame OracleGenerator::generate(const GenerationRequest& req) const {
  if (req.context.empty()) throw InvalidArgument("generator: empty context");
  const Frame& base = req.context.back();
  Frame out;
  out.pose = world::apply_actions(base.pose, req.forward_actions);
  out.image = world::render(*scene_, intr_, out.pose);
  out.step = req.target_step;
  out.predicted = true;
  return out;
}

Frame NoisyOracleGenerator::generate(const GenerationRequest& req) const {
  Frame out = OracleGenerator::generate(req);
  const std::size_t npx = out.image.pixels.size();

  // Deviation of a conditioning frame from its own clean view; observed
  // frames are exact.
  auto residual = [&](const Frame& f) -> std::vector<double> {
    if (!f.predicted) return {};
    const world::Image clean = world::render(*scene_, intr_, f.pose);
    std::vector<double> r(npx);
    for (std::size_t i = 0; i < npx; ++i) r[i] = f.image.pixels[i] - clean.pixels[i];
    return r;
  };
  auto mse_of = [&](const std::vector<double>& r) {
    double acc = 0.0;
    for (double v : r) acc += v * v;
    return r.empty() ? 0.0 : acc / static_cast<double>(r.size());
  };

  const Frame& base = req.context.back();
  std::vector<double> carried = residual(base);
  double ctx_mse = 0.0;
  int ctx_count = 0;
  for (std::size_t i = 0; i + 1 < req.context.size(); ++i) {
    ctx_mse += mse_of(residual(req.context[i]));
    ++ctx_count;
  }
  ctx_mse += mse_of(carried);
  ++ctx_count;

  if (req.future_anchor && req.inverse_actions) {
    std::vector<double> fut = residual(*req.future_anchor);
    ctx_mse += mse_of(fut);
    ++ctx_count;
    const double n_fwd = static_cast<double>(req.forward_actions.size());
    const double n_inv = static_cast<double>(req.inverse_actions->size());
    const double w_fut = n_fwd + n_inv > 0.0 ? n_fwd / (n_fwd + n_inv) : 0.0;
    if (!carried.empty() || !fut.empty()) {
      std::vector<double> mixed(npx, 0.0);
      for (std::size_t i = 0; i < npx; ++i) {
        const double p = carried.empty() ? 0.0 : carried[i];
        const double f = fut.empty() ? 0.0 : fut[i];
        mixed[i] = (1.0 - w_fut) * p + w_fut * f;
      }
      carried = std::move(mixed);
    }
  }
  ctx_mse /= ctx_count;

  const double sigma = sigma_base_ + lambda_ * ctx_mse;
  if (carried.empty() && sigma == 0.0) return out;

  std::mt19937_64 rng(req.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < npx; ++i) {
    double v = out.image.pixels[i];
    if (!carried.empty()) v += carried[i];
    if (sigma > 0.0) v += sigma * gauss(rng);
    out.image.pixels[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

std::vector<Frame> make_history(const world::Scene& scene, const world::CameraIntrinsics& intr,
                                const world::Pose& current, const Action& approach, int n) {
  if (n < 1) throw InvalidArgument("make_history: n must be >= 1");
  std::vector<Frame> frames(static_cast<std::size_t>(n));
  world::Pose p = current;
  const Action back = world::invert_action(approach);
  for (int i = n - 1; i >= 0; --i) {
    Frame& f = frames[static_cast<std::size_t>(i)];
    f.pose = p;
    f.step = i - (n - 1);
    f.image = world::render(scene, intr, p);
    p = world::apply_action(p, back);
  }
  return frames;
}

std::vector<world::Image> oracle_frames(const world::Scene& scene,
                                        const world::CameraIntrinsics& intr,
                                        const world::Pose& start, std::span<const Action> actions) {
  std::vector<world::Image> out;
  out.reserve(actions.size());
  world::Pose p = start;
  for (const auto& a : actions) {
    p = world::apply_action(p, a);
    out.push_back(world::render(scene, intr, p));
  }
  return out;
}

}  // namespace drnwm::rollout
