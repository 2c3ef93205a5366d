// Deterministic experiment pipeline over the synthetic world.
#pragma once

#include "drnwm/config.hpp"
#include "drnwm/csv.hpp"
#include "drnwm/rollout.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace drnwm::experiment {

enum class Stage { simulate, masks, rollout, ablate, plan };

std::string to_string(Stage s);
const std::set<Stage>& all_stages();

/// Scene, camera and ground-truth motion shared by every stage.
struct World {
  world::Scene scene;
  world::CameraIntrinsics intr;
  world::Pose start;
  std::vector<world::Frame> history;
  std::vector<world::Action> actions;  // ground truth for steps 1..max horizon
  std::vector<world::Pose> path;       // poses at steps 1..max horizon
};

World make_world(const config::ExperimentConfig& cfg);

/// Per-seed rollout seed shared across strategies.
std::uint64_t rollout_seed(std::uint64_t base, int index);

/// Epipolar masks for chunk targets, memoized by (past, future, target)
/// step. Thread safe.
rollout::MaskProvider make_mask_provider(const config::ExperimentConfig& cfg, const World& w);

struct Outputs {
  std::map<std::string, std::string> files;  // relative name -> bytes
  csv::Table metrics;                         // rows appended by stages
};

inline const std::vector<std::string> kMetricsHeader{
    "strategy", "horizon", "mse", "psnr", "mean_ed", "mean_se", "ate", "fde", "rpe"};

Outputs run_stages(const config::ExperimentConfig& cfg, const std::set<Stage>& stages);

/// Writes every output plus metrics.csv and manifest.txt into `dir`.
/// Returns the written file names in manifest order.
std::vector<std::string> write_outputs(const std::filesystem::path& dir,
                                       const config::ExperimentConfig& cfg,
                                       const std::string& command, Outputs out);

/// All stages into cfg.output_dir.
std::filesystem::path run_experiment(const config::ExperimentConfig& cfg);
std::filesystem::path run_experiment(const std::filesystem::path& config_path);

struct Manifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> files;
};

std::string format_manifest(const Manifest& m);
Manifest parse_manifest(const std::string& text);

struct Report {
  std::string text;
  std::string summary_csv;  // group,key,strategy,mse,psnr
  std::string checks_csv;   // check,value,threshold,status
  bool all_pass = true;
};

/// Aggregates an artifact directory. Throws FormatError naming every missing
/// input.
Report emit_report(const std::filesystem::path& dir);

}  // namespace drnwm::experiment
