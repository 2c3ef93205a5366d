#include "drnwm/ac_dit.hpp"
#include "drnwm/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace drnwm::acdit {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_grad_check(std::span<const ParamSlot> slots,
                                       std::span<const ParamSlot> grad_slots,
                                       const std::function<double()>& loss, double h,
                                       int n_samples, std::uint64_t seed,
                                       std::span<const std::string> always) {
  if (slots.size() != grad_slots.size()) {
    throw InvalidArgument("grad check: parameter and gradient layouts differ");
  }
  Eigen::Index total = 0;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (slots[s].size() != grad_slots[s].size()) {
      throw InvalidArgument("grad check: slot " + slots[s].name + " size mismatch");
    }
    total += slots[s].size();
  }
  if (total == 0) throw InvalidArgument("grad check: no parameters");

  std::vector<std::pair<std::size_t, Eigen::Index>> picks;
  for (const auto& name : always) {
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (slots[s].name == name) picks.emplace_back(s, 0);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> flat(0, total - 1);
  while (static_cast<int>(picks.size()) < n_samples) {
    Eigen::Index g = flat(rng);
    std::size_t s = 0;
    while (g >= slots[s].size()) g -= slots[s++].size();
    picks.emplace_back(s, g);
  }

  GradCheckReport report;
  for (const auto& [s, i] : picks) {
    double* p = slots[s].data + i;
    const double orig = *p;
    *p = orig + h;
    const double lp = loss();
    *p = orig - h;
    const double lm = loss();
    *p = orig;
    GradCheckSample sample;
    sample.name = slots[s].name;
    sample.index = i;
    sample.analytic = grad_slots[s].data[i];
    sample.numeric = (lp - lm) / (2.0 * h);
    if (!std::isfinite(sample.analytic) || !std::isfinite(sample.numeric)) {
      throw Error("grad check: non-finite gradient at " + sample.name + "[" +
                  std::to_string(i) + "]");
    }
    sample.rel_error = relative_error(sample.analytic, sample.numeric);
    report.max_rel_error = std::max(report.max_rel_error, sample.rel_error);
    report.samples.push_back(std::move(sample));
  }
  return report;
}

GradCheckReport check_block_gradients(AcDitModel& m, const ChunkInput& in,
                                      const TokenTensor& target, double h, int n_samples,
                                      std::uint64_t seed) {
  LossAndGrad lg = loss_and_grad(m, in, target);
  const auto slots = parameter_slots(m);
  const auto grads = parameter_slots(lg.grad);
  const std::vector<std::string> gates{"gamma_cond", "gamma_past", "gamma_fut", "gamma_tau"};
  return finite_diff_grad_check(
      slots, grads, [&] { return denoising_loss(target, block_forward(m, in)); }, h, n_samples,
      seed, gates);
}

}  // namespace drnwm::acdit
