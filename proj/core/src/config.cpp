#include "drnwm/config.hpp"

#include "drnwm/csv.hpp"
#include "drnwm/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace drnwm::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

double to_double(const std::string& s, std::size_t line, const std::string& key) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) {
    throw ConfigError(line, "'" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

}  // namespace

Document Document::parse(const std::string& text) {
  Document doc;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto cut = raw.find_first_of("#;");
    const std::string s = trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (!valid_name(section)) throw ConfigError(line, "invalid section name '" + section + "'");
      doc.sections_[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (section.empty()) throw ConfigError(line, "key '" + key + "' outside any section");
    if (!valid_name(key)) throw ConfigError(line, "invalid key '" + key + "'");
    if (value.empty()) throw ConfigError(line, "empty value for '" + key + "'");
    auto& sec = doc.sections_[section];
    if (sec.count(key)) {
      throw ConfigError(line, "duplicate key '" + key + "' in [" + section + "] (first at line " +
                                  std::to_string(sec[key].line) + ")");
    }
    sec[key] = Entry{value, line, false};
  }
  return doc;
}

Entry* Document::find(const std::string& section, const std::string& key) {
  auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  k->second.used = true;
  return &k->second;
}

bool Document::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key);
}

std::size_t Document::line_of(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return 0;
  auto k = s->second.find(key);
  return k == s->second.end() ? 0 : k->second.line;
}

std::optional<std::string> Document::get_string(const std::string& section,
                                                const std::string& key) {
  Entry* e = find(section, key);
  if (!e) return std::nullopt;
  return e->value;
}

std::optional<double> Document::get_double(const std::string& section, const std::string& key) {
  Entry* e = find(section, key);
  if (!e) return std::nullopt;
  return to_double(e->value, e->line, key);
}

std::optional<std::int64_t> Document::get_int(const std::string& section, const std::string& key) {
  Entry* e = find(section, key);
  if (!e) return std::nullopt;
  std::int64_t v = 0;
  const char* end = e->value.data() + e->value.size();
  auto [p, ec] = std::from_chars(e->value.data(), end, v);
  if (ec != std::errc{} || p != end) {
    throw ConfigError(e->line, "'" + key + "' expects an integer, got '" + e->value + "'");
  }
  return v;
}

std::optional<bool> Document::get_bool(const std::string& section, const std::string& key) {
  Entry* e = find(section, key);
  if (!e) return std::nullopt;
  std::string v = e->value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw ConfigError(e->line, "'" + key + "' expects true/false, got '" + e->value + "'");
}

std::optional<std::vector<double>> Document::get_list(const std::string& section,
                                                      const std::string& key) {
  Entry* e = find(section, key);
  if (!e) return std::nullopt;
  std::vector<double> out;
  std::stringstream ss(e->value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(e->line, "empty item in list '" + key + "'");
    out.push_back(to_double(item, e->line, key));
  }
  return out;
}

void Document::reject_unused() const {
  std::size_t worst = 0;
  std::string name;
  for (const auto& [sec, keys] : sections_) {
    for (const auto& [key, e] : keys) {
      if (!e.used && (worst == 0 || e.line < worst)) {
        worst = e.line;
        name = "[" + sec + "] " + key;
      }
    }
  }
  if (worst) throw ConfigError(worst, "unknown key " + name);
}

std::vector<int> ExperimentConfig::horizon_steps() const {
  std::vector<int> out;
  for (int h : horizons_s) out.push_back(h * steps_per_second);
  return out;
}

int ExperimentConfig::max_horizon() const {
  const auto h = horizon_steps();
  return *std::max_element(h.begin(), h.end());
}

void ExperimentConfig::validate() const {
  if (scene_points < 8) throw ConfigError(0, "world.points must be >= 8");
  if (noise_px < 0 || outlier_rate < 0 || outlier_rate >= 1 || invalid_rate < 0 || invalid_rate >= 1) {
    throw ConfigError(0, "world noise/outlier/invalid rates out of range");
  }
  grid.validate();
  if (history < 1) throw ConfigError(0, "rollout.history must be >= 1");
  if (steps_per_second < 1) throw ConfigError(0, "rollout.steps_per_second must be >= 1");
  if (horizons_s.empty() || intervals.empty()) throw ConfigError(0, "rollout horizons and intervals must be non-empty");
  for (int h : horizons_s) {
    if (h < 1) throw ConfigError(0, "horizons must be positive");
  }
  for (int i : intervals) {
    if (i < 1) throw ConfigError(0, "anchor intervals must be positive");
  }
  if (seeds < 1) throw ConfigError(0, "rollout.seeds must be >= 1");
  if (sigma_base < 0 || lambda < 0) throw ConfigError(0, "generator parameters must be nonnegative");
  if (ablation_interval < 1 || plan_anchor_interval < 1) throw ConfigError(0, "intervals must be positive");
  try {
    planner.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(0, e.what());
  }
  if (plan_strategies.empty()) throw ConfigError(0, "planner.strategies must be non-empty");
}

namespace {

std::string num(double v) { return csv::format_number(v); }

std::string int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  o << "seed=" << seed << "\n"
    << "world.points=" << scene_points << "\nworld.noise_px=" << num(noise_px)
    << "\nworld.outlier_rate=" << num(outlier_rate) << "\nworld.invalid_rate=" << num(invalid_rate)
    << "\nworld.max_pairs=" << max_pairs << "\nworld.motion=" << num(motion.dx) << ","
    << num(motion.dy) << "," << num(motion.dyaw) << "\n"
    << "grid=" << grid.image_w << "," << grid.image_h << "," << grid.side << "\n"
    << "masks=" << num(mask_params.tau_match) << "," << num(mask_params.ransac_threshold_px) << ","
    << mask_params.ransac_iters << "," << mask_params.n_min << "," << mask_params.n_sat << ","
    << num(mask_params.tau_rel) << "," << num(mask_params.alpha) << ","
    << num(mask_params.tau_temp) << "\n"
    << "rollout.history=" << history << "\nrollout.steps_per_second=" << steps_per_second
    << "\nrollout.horizons=" << int_list(horizons_s) << "\nrollout.intervals=" << int_list(intervals)
    << "\nrollout.seeds=" << seeds << "\n"
    << "generator=" << num(sigma_base) << "," << num(lambda) << "\n"
    << "ablation=" << future_anchor << "," << epi_mask << "," << chunk << "," << ablation_interval
    << "\n"
    << "planner=" << planner.population << "," << planner.elites << "," << planner.iterations << ","
    << planner.horizon << "," << num(planner.init_mean.dx) << "," << num(planner.init_mean.dy)
    << "," << num(planner.init_mean.dyaw) << "," << num(planner.init_std.dx) << ","
    << num(planner.init_std.dy) << "," << num(planner.init_std.dyaw) << ","
    << num(planner.std_floor) << "," << num(planner.std_smoothing) << ","
    << plan_anchor_interval;
  for (auto s : plan_strategies) o << "," << planner::to_string(s);
  o << "\n";
  return o.str();
}

ExperimentConfig parse_config(const std::string& text) {
  Document doc = Document::parse(text);
  ExperimentConfig c;

  auto int_in = [&](const char* sec, const char* key, auto& dst, std::int64_t lo,
                    std::int64_t hi) {
    if (auto v = doc.get_int(sec, key)) {
      if (*v < lo || *v > hi) {
        throw ConfigError(doc.line_of(sec, key), std::string("'") + key + "' must be in [" +
                                                     std::to_string(lo) + ", " +
                                                     std::to_string(hi) + "]");
      }
      dst = static_cast<std::remove_reference_t<decltype(dst)>>(*v);
    }
  };
  auto real_in = [&](const char* sec, const char* key, double& dst, double lo, double hi) {
    if (auto v = doc.get_double(sec, key)) {
      if (!(*v >= lo && *v <= hi)) {
        throw ConfigError(doc.line_of(sec, key), std::string("'") + key + "' must be in [" +
                                                     num(lo) + ", " + num(hi) + "]");
      }
      dst = *v;
    }
  };
  auto positive_ints = [&](const char* sec, const char* key, std::vector<int>& dst) {
    if (auto v = doc.get_list(sec, key)) {
      dst.clear();
      for (double x : *v) {
        if (x < 1 || x != static_cast<int>(x) || x > 4096) {
          throw ConfigError(doc.line_of(sec, key),
                            std::string("'") + key + "' entries must be positive integers");
        }
        dst.push_back(static_cast<int>(x));
      }
      if (dst.empty()) throw ConfigError(doc.line_of(sec, key), std::string("'") + key + "' is empty");
    }
  };
  auto action = [&](const char* sec, const char* key, world::Action& dst, bool positive) {
    if (auto v = doc.get_list(sec, key)) {
      if (v->size() != 3) {
        throw ConfigError(doc.line_of(sec, key), std::string("'") + key + "' expects dx, dy, dyaw");
      }
      if (positive && !((*v)[0] > 0 && (*v)[1] > 0 && (*v)[2] > 0)) {
        throw ConfigError(doc.line_of(sec, key), std::string("'") + key + "' must be positive");
      }
      dst = {(*v)[0], (*v)[1], (*v)[2]};
    }
  };

  if (auto v = doc.get_int("experiment", "seed")) {
    if (*v < 0) throw ConfigError(doc.line_of("experiment", "seed"), "'seed' must be >= 0");
    c.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto v = doc.get_string("experiment", "output")) c.output_dir = *v;

  int_in("world", "points", c.scene_points, 8, 1000000);
  real_in("world", "noise_px", c.noise_px, 0.0, 100.0);
  real_in("world", "outlier_rate", c.outlier_rate, 0.0, 0.95);
  real_in("world", "invalid_rate", c.invalid_rate, 0.0, 0.95);
  int_in("world", "max_pairs", c.max_pairs, 0, 1000000);
  action("world", "motion", c.motion, false);

  int_in("grid", "width", c.grid.image_w, 1, 8192);
  int_in("grid", "height", c.grid.image_h, 1, 8192);
  int_in("grid", "side", c.grid.side, 1, 256);

  real_in("masks", "tau_match", c.mask_params.tau_match, 0.0, 1.0);
  real_in("masks", "threshold_px", c.mask_params.ransac_threshold_px, 1e-6, 1000.0);
  int_in("masks", "ransac_iters", c.mask_params.ransac_iters, 1, 1000000);
  int_in("masks", "n_min", c.mask_params.n_min, 0, 100000);
  int_in("masks", "n_sat", c.mask_params.n_sat, 1, 100000);
  real_in("masks", "tau_rel", c.mask_params.tau_rel, 0.0, 1.0);
  real_in("masks", "alpha", c.mask_params.alpha, 0.0, 1.0);
  real_in("masks", "tau_temp", c.mask_params.tau_temp, 0.0, 1.0);
  if (c.mask_params.n_sat <= c.mask_params.n_min) {
    throw ConfigError(std::max(doc.line_of("masks", "n_sat"), doc.line_of("masks", "n_min")),
                      "'n_sat' must exceed 'n_min'");
  }

  int_in("rollout", "history", c.history, 1, 64);
  int_in("rollout", "steps_per_second", c.steps_per_second, 1, 64);
  positive_ints("rollout", "horizons", c.horizons_s);
  positive_ints("rollout", "intervals", c.intervals);
  int_in("rollout", "seeds", c.seeds, 1, 100000);

  real_in("generator", "sigma_base", c.sigma_base, 0.0, 10.0);
  real_in("generator", "lambda", c.lambda, 0.0, 1000.0);

  if (auto v = doc.get_bool("ablation", "future_anchor")) c.future_anchor = *v;
  if (auto v = doc.get_bool("ablation", "epi_mask")) c.epi_mask = *v;
  if (auto v = doc.get_bool("ablation", "chunk")) c.chunk = *v;
  int_in("ablation", "interval", c.ablation_interval, 1, 4096);

  int_in("planner", "population", c.planner.population, 1, 100000);
  int_in("planner", "elites", c.planner.elites, 1, 100000);
  int_in("planner", "iterations", c.planner.iterations, 1, 10000);
  int_in("planner", "horizon", c.planner.horizon, 1, 4096);
  action("planner", "init_mean", c.planner.init_mean, false);
  action("planner", "init_std", c.planner.init_std, true);
  real_in("planner", "std_floor", c.planner.std_floor, 1e-12, 10.0);
  real_in("planner", "std_smoothing", c.planner.std_smoothing, 0.0, 0.999);
  int_in("planner", "anchor_interval", c.plan_anchor_interval, 1, 4096);
  if (auto v = doc.get_string("planner", "strategies")) {
    c.plan_strategies.clear();
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        c.plan_strategies.push_back(planner::strategy_from_string(trim(item)));
      } catch (const InvalidArgument& e) {
        throw ConfigError(doc.line_of("planner", "strategies"), e.what());
      }
    }
  }
  if (c.planner.elites > c.planner.population) {
    throw ConfigError(doc.line_of("planner", "elites"), "'elites' must not exceed 'population'");
  }

  doc.reject_unused();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(0, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace drnwm::config
