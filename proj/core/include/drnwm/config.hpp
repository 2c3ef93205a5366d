// Experiment configuration: `[section]` headers and `key = value` lines,
// `#` or `;` comments. Every parse or validation error carries its line.
#pragma once

#include "drnwm/mask_builder.hpp"
#include "drnwm/planner.hpp"
#include "drnwm/synthetic_world.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace drnwm::config {

struct Entry {
  std::string value;
  std::size_t line = 0;
  bool used = false;
};

class Document {
 public:
  static Document parse(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::size_t line_of(const std::string& section, const std::string& key) const;

  std::optional<std::string> get_string(const std::string& section, const std::string& key);
  std::optional<double> get_double(const std::string& section, const std::string& key);
  std::optional<std::int64_t> get_int(const std::string& section, const std::string& key);
  std::optional<bool> get_bool(const std::string& section, const std::string& key);
  std::optional<std::vector<double>> get_list(const std::string& section, const std::string& key);

  /// Throws ConfigError for the first key that no getter consumed.
  void reject_unused() const;

 private:
  Entry* find(const std::string& section, const std::string& key);
  std::map<std::string, std::map<std::string, Entry>> sections_;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;

  // world
  std::size_t scene_points = 600;
  double noise_px = 0.5;
  double outlier_rate = 0.2;
  double invalid_rate = 0.05;
  std::size_t max_pairs = 200;
  world::Action motion{0.25, 0.0, 0.03};  // ground-truth per-step action

  masks::TokenGrid grid;
  masks::MaskParams mask_params;

  // rollout
  int history = 4;
  int steps_per_second = 1;
  std::vector<int> horizons_s{1, 2, 4, 8, 16};
  std::vector<int> intervals{1, 2, 3};
  int seeds = 10;

  // generator
  double sigma_base = 0.01;
  double lambda = 0.5;

  // toggles of the main anchor-guided run
  bool future_anchor = true;
  bool epi_mask = true;
  bool chunk = true;
  int ablation_interval = 3;

  planner::CemConfig planner;
  std::vector<planner::Strategy> plan_strategies{planner::Strategy::autoregressive,
                                                 planner::Strategy::anchor};
  int plan_anchor_interval = 2;

  std::filesystem::path output_dir = "drnwm_out";

  std::vector<int> horizon_steps() const;
  int max_horizon() const;
  void validate() const;
  /// Canonical `key = value` dump; the config hash is taken over this text.
  std::string canonical() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace drnwm::config
