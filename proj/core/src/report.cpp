#include "drnwm/error.hpp"
#include "drnwm/experiment.hpp"
#include "drnwm/metrics.hpp"

#include <cstdio>
#include <map>
#include <sstream>

namespace drnwm::experiment {

namespace {

double to_number(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("report: bad number '" + s + "' in " + what);
  }
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Check {
  std::string name;
  double value = 0.0;
  std::string threshold;
  bool pass = false;
};

}  // namespace

Report emit_report(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir / "manifest.txt")) {
    throw FormatError("report: missing inputs in " + dir.string() + ": manifest.txt");
  }
  const Manifest man = parse_manifest(csv::read_text(dir / "manifest.txt"));
  std::vector<std::string> missing;
  bool listed_metrics = false;
  for (const auto& f : man.files) {
    if (!fs::exists(dir / f)) missing.push_back(f);
    if (f == "metrics.csv") listed_metrics = true;
  }
  if (!listed_metrics && !fs::exists(dir / "metrics.csv")) missing.push_back("metrics.csv");
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw FormatError("report: missing inputs in " + dir.string() + ": " + names);
  }

  const auto metrics_t = csv::read_table(dir / "metrics.csv");
  const auto c_strategy = metrics_t.column("strategy");
  const auto c_horizon = metrics_t.column("horizon");
  const auto c_mse = metrics_t.column("mse");
  const auto c_fde = metrics_t.column("fde");

  // Per-horizon means (autoregressive vs all anchor intervals) and
  // per-interval means across horizons.
  std::map<int, std::pair<double, int>> ar_by_h, anchor_by_h;
  std::map<int, std::pair<double, int>> by_interval;
  std::vector<std::pair<std::string, double>> plan_fde;
  int max_h = 0;
  for (const auto& row : metrics_t.rows) {
    const std::string& s = row[c_strategy];
    const int h = static_cast<int>(to_number(row[c_horizon], "metrics.csv horizon"));
    if (s == "autoregressive" || s.rfind("anchor_i", 0) == 0) {
      const double m = to_number(row[c_mse], "metrics.csv mse");
      if (s == "autoregressive") {
        auto& a = ar_by_h[h];
        a.first += m;
        ++a.second;
      } else {
        auto& a = anchor_by_h[h];
        a.first += m;
        ++a.second;
        const int k = static_cast<int>(to_number(s.substr(8), "strategy interval"));
        auto& b = by_interval[k];
        b.first += m;
        ++b.second;
      }
      max_h = std::max(max_h, h);
    } else if (s.rfind("plan_", 0) == 0 && !row[c_fde].empty()) {
      plan_fde.emplace_back(s, to_number(row[c_fde], "metrics.csv fde"));
    }
  }

  csv::Table summary;
  summary.header = {"group", "key", "strategy", "mse", "psnr"};
  auto add = [&](const std::string& g, int key, const std::string& s, double m) {
    summary.rows.push_back({g, std::to_string(key), s, fixed(m), fixed(metrics::psnr(m))});
  };
  for (const auto& [h, a] : ar_by_h) add("horizon", h, "autoregressive", a.first / a.second);
  for (const auto& [h, a] : anchor_by_h) add("horizon", h, "anchor", a.first / a.second);
  for (const auto& [k, a] : by_interval) add("interval", k, "anchor", a.first / a.second);

  // Mean over rollout steps at the longest horizon, per strategy.
  std::vector<double> drift_ar_steps, drift_ar_mse;
  if (fs::exists(dir / "drift.csv")) {
    const auto drift = csv::read_table(dir / "drift.csv");
    const auto ds = drift.column("strategy");
    const auto dstep = drift.column("step");
    const auto dmse = drift.column("mse");
    std::map<std::string, std::pair<double, int>> per_strategy;
    std::vector<std::string> order;
    for (const auto& row : drift.rows) {
      const double m = to_number(row[dmse], "drift.csv mse");
      if (!per_strategy.count(row[ds])) order.push_back(row[ds]);
      auto& a = per_strategy[row[ds]];
      a.first += m;
      ++a.second;
      if (row[ds] == "autoregressive") {
        drift_ar_steps.push_back(to_number(row[dstep], "drift.csv step"));
        drift_ar_mse.push_back(m);
      }
    }
    for (const auto& s : order) {
      const auto& a = per_strategy[s];
      add("step_mean", max_h, s, a.first / a.second);
    }
  }

  std::vector<Check> checks;
  if (ar_by_h.count(max_h) && anchor_by_h.count(max_h)) {
    const double ar = ar_by_h[max_h].first / ar_by_h[max_h].second;
    const double an = anchor_by_h[max_h].first / anchor_by_h[max_h].second;
    checks.push_back({"terminal_mse_anchor_over_ar", ar > 0 ? an / ar : 0.0, "< 1", an < ar});
  }
  if (drift_ar_steps.size() >= 2) {
    const double rho = metrics::spearman(drift_ar_steps, drift_ar_mse);
    checks.push_back({"ar_drift_spearman", rho, "> 0.9", rho > 0.9});
  }
  for (const auto& [s, fde] : plan_fde) {
    checks.push_back({s + "_fde", fde, "< 0.5", fde < 0.5});
  }

  csv::Table check_t;
  check_t.header = {"check", "value", "threshold", "status"};
  Report r;
  for (const auto& c : checks) {
    check_t.rows.push_back({c.name, fixed(c.value), c.threshold, c.pass ? "PASS" : "FAIL"});
    r.all_pass = r.all_pass && c.pass;
  }
  r.summary_csv = csv::format_table(summary);
  r.checks_csv = csv::format_table(check_t);

  std::ostringstream t;
  t << "drnwm report: " << dir.filename().string() << "\n"
    << "command " << man.command << ", seed " << man.seed << ", config " << man.config_hash
    << "\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %6s %-16s %12s %10s\n", "group", "key", "strategy",
                "mse", "psnr");
  t << line;
  for (const auto& row : summary.rows) {
    std::snprintf(line, sizeof line, "%-10s %6s %-16s %12s %10s\n", row[0].c_str(),
                  row[1].c_str(), row[2].c_str(), row[3].c_str(), row[4].c_str());
    t << line;
  }
  t << "\n";
  for (const auto& row : check_t.rows) {
    std::snprintf(line, sizeof line, "%-4s %-32s %12s  (%s)\n", row[3].c_str(), row[0].c_str(),
                  row[1].c_str(), row[2].c_str());
    t << line;
  }
  if (checks.empty()) t << "no checks applicable\n";
  r.text = t.str();
  return r;
}

}  // namespace drnwm::experiment
