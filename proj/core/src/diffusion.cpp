#include "drnwm/ac_dit.hpp"
#include "drnwm/error.hpp"

#include <cmath>
#include <random>

namespace drnwm::acdit {

DiffusionSchedule DiffusionSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw InvalidArgument("diffusion schedule: need at least one step");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw InvalidArgument("diffusion schedule: need 0 < beta_start <= beta_end < 1");
  }
  DiffusionSchedule s;
  s.alpha_bar_.resize(static_cast<std::size_t>(steps) + 1);
  s.alpha_bar_[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    s.alpha_bar_[static_cast<std::size_t>(t)] = s.alpha_bar_[static_cast<std::size_t>(t - 1)] * (1.0 - beta);
  }
  return s;
}

DiffusionSchedule DiffusionSchedule::scaled_linear(int steps) {
  const double scale = 1000.0 / steps;
  return linear(steps, 1e-4 * scale, 0.02 * scale);
}

double DiffusionSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) {
    throw InvalidArgument("diffusion step " + std::to_string(t) + " outside [0, " +
                          std::to_string(steps()) + "]");
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

TokenTensor diffuse_forward(const TokenTensor& x0, int t, const TokenTensor& eps,
                            const DiffusionSchedule& sched) {
  const double ab = sched.alpha_bar(t);
  if (x0.size() != eps.size()) throw InvalidArgument("diffuse_forward: frame counts differ");
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  TokenTensor out(x0.size());
  for (std::size_t f = 0; f < x0.size(); ++f) {
    if (x0[f].rows() != eps[f].rows() || x0[f].cols() != eps[f].cols()) {
      throw InvalidArgument("diffuse_forward: noise shape differs from x0");
    }
    out[f] = a * x0[f] + b * eps[f];
  }
  return out;
}

double denoising_loss(const TokenTensor& eps, const TokenTensor& eps_pred) {
  if (eps.size() != eps_pred.size()) throw InvalidArgument("denoising_loss: frame counts differ");
  double acc = 0.0;
  double n = 0.0;
  for (std::size_t f = 0; f < eps.size(); ++f) {
    if (eps[f].rows() != eps_pred[f].rows() || eps[f].cols() != eps_pred[f].cols()) {
      throw InvalidArgument("denoising_loss: shape mismatch");
    }
    acc += (eps[f] - eps_pred[f]).squaredNorm();
    n += static_cast<double>(eps[f].size());
  }
  if (n == 0.0) throw InvalidArgument("denoising_loss: empty tensors");
  return acc / n;
}

std::vector<double> train_toy(AcDitModel& m, int tokens, int frames, int steps,
                              double learning_rate, std::uint64_t seed) {
  const auto sched = DiffusionSchedule::scaled_linear(100);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_t(1, sched.steps());

  // A small fixed pool trained full-batch, so plain gradient descent
  // decreases the objective for a small enough step.
  struct Example {
    ChunkInput in;
    TokenTensor eps;
  };
  std::vector<Example> pool;
  for (int i = 0; i < 2; ++i) {
    Example ex;
    ex.in = random_chunk(m.config, tokens, frames, rng());
    const TokenTensor x0 = ex.in.z;
    ex.eps = random_tokens(frames, tokens, m.config.d, rng());
    const int t = pick_t(rng);
    ex.in.z = diffuse_forward(x0, t, ex.eps, sched);
    for (auto& c : ex.in.cond) c.t = t;
    pool.push_back(std::move(ex));
  }

  std::vector<double> losses;
  for (int step = 0; step < steps; ++step) {
    double loss = 0.0;
    AcDitModel total = m.zeros_like();
    auto total_slots = parameter_slots(total);
    for (const auto& ex : pool) {
      LossAndGrad lg = loss_and_grad(m, ex.in, ex.eps);
      loss += lg.loss / pool.size();
      auto gs = parameter_slots(lg.grad);
      for (std::size_t s = 0; s < gs.size(); ++s) {
        for (Eigen::Index i = 0; i < gs[s].size(); ++i) {
          total_slots[s].data[i] += gs[s].data[i] / pool.size();
        }
      }
    }
    losses.push_back(loss);
    auto ps = parameter_slots(m);
    for (std::size_t s = 0; s < ps.size(); ++s) {
      for (Eigen::Index i = 0; i < ps[s].size(); ++i) {
        ps[s].data[i] -= learning_rate * total_slots[s].data[i];
      }
    }
  }
  return losses;
}

}  // namespace drnwm::acdit
