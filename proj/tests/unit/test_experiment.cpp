#include "drnwm/csv.hpp"
#include "drnwm/error.hpp"
#include "drnwm/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <set>

using namespace drnwm;
using namespace drnwm::experiment;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = DRNWM_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("drnwm_test_" + name);
  fs::remove_all(p);
  return p;
}

config::ExperimentConfig minimal(const fs::path& out) {
  auto cfg = config::load_config(kFixtures / "minimal.cfg");
  cfg.output_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("run_experiment: minimal config writes every expected file") {
  const auto dir = run_experiment(minimal(scratch("files")));
  const std::set<std::string> expected{
      "ablation.csv",  "config.canonical",        "drift.csv",        "manifest.txt",
      "masks.csv",     "masks.drnm",              "matches.csv",      "metrics.csv",
      "plan_anchor.csv", "plan_autoregressive.csv", "scene.txt",        "trace_anchor_i2.csv",
      "trace_autoregressive.csv"};
  std::set<std::string> found;
  for (const auto& e : fs::directory_iterator(dir)) found.insert(e.path().filename().string());
  CHECK(found == expected);

  const auto man = parse_manifest(csv::read_text(dir / "manifest.txt"));
  CHECK(man.command == "run");
  CHECK(man.seed == 11);
  CHECK(man.config_hash == config::fnv1a_hex(csv::read_text(dir / "config.canonical")));
  CHECK(man.files.size() + 1 == expected.size());

  const auto metrics = csv::read_table(dir / "metrics.csv");
  CHECK(metrics.header == kMetricsHeader);
  fs::remove_all(dir);
}

TEST_CASE("run_experiment: identical config and seed give byte-identical CSVs") {
  const auto a = run_experiment(minimal(scratch("det_a")));
  const auto b = run_experiment(minimal(scratch("det_b")));
  int compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    CHECK(csv::read_text(a / name) == csv::read_text(b / name));
    ++compared;
  }
  CHECK(compared == 13);
  auto cfg = minimal(scratch("det_c"));
  cfg.seed = 12;
  const auto c = run_experiment(cfg);
  CHECK(csv::read_text(a / "metrics.csv") != csv::read_text(c / "metrics.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("ablation: eight rows keyed by the toggle tuple") {
  auto cfg = minimal(scratch("ablate"));
  const auto out = run_stages(cfg, {Stage::ablate});
  const auto t = csv::parse_table(out.files.at("ablation.csv"));
  REQUIRE(t.rows.size() == 8);
  std::set<std::string> keys;
  const auto fa = t.column("future_anchor"), em = t.column("epi_mask"), ch = t.column("chunk");
  for (const auto& r : t.rows) keys.insert(r[fa] + r[em] + r[ch]);
  CHECK(keys.size() == 8);
  CHECK(t.rows.front()[fa] + t.rows.front()[em] + t.rows.front()[ch] == "111");
  CHECK(t.rows.back()[fa] + t.rows.back()[em] + t.rows.back()[ch] == "000");
}

TEST_CASE("run_stages: selected stages only") {
  auto cfg = minimal(scratch("stages"));
  const auto out = run_stages(cfg, {Stage::simulate});
  CHECK(out.files.count("scene.txt") == 1);
  CHECK(out.files.count("matches.csv") == 1);
  CHECK(out.files.count("drift.csv") == 0);
  CHECK(out.metrics.rows.size() == 2);
  for (const auto& r : out.metrics.rows) CHECK(r[0] == "geometry");
}

TEST_CASE("manifest: format and parse round trip, malformed input") {
  Manifest m{"plan", "0123456789abcdef", 42, {"a.csv", "b.csv"}};
  const auto back = parse_manifest(format_manifest(m));
  CHECK(back.command == "plan");
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.seed == 42);
  CHECK(back.files == m.files);
  CHECK_THROWS_AS(parse_manifest("command = run\n"), FormatError);
  CHECK_THROWS_AS(parse_manifest("config_hash = x\nbogus line\n"), FormatError);
  CHECK_THROWS_AS(parse_manifest("config_hash = x\ncolour = red\n"), FormatError);
}

TEST_CASE("emit_report: fixture matches the frozen golden output") {
  const auto r = emit_report(kFixtures / "report_input");
  CHECK(r.text == csv::read_text(kFixtures / "report_golden.txt"));
  CHECK(r.summary_csv == csv::read_text(kFixtures / "report_golden_summary.csv"));
  CHECK(r.checks_csv == csv::read_text(kFixtures / "report_golden_checks.csv"));
  CHECK(r.all_pass);
}

TEST_CASE("emit_report: flags follow the thresholds") {
  const auto dir = scratch("flags");
  fs::create_directories(dir);
  csv::write_text(dir / "manifest.txt", format_manifest({"run", "00", 1, {"metrics.csv"}}));
  csv::write_text(dir / "metrics.csv",
                  "strategy,horizon,mse,psnr,mean_ed,mean_se,ate,fde,rpe\n"
                  "autoregressive,4,0.01,20,,,,,\n"
                  "anchor_i2,4,0.02,17,,,,,\n"
                  "plan_anchor,2,0.1,10,,,0.2,0.7,0.1\n");
  const auto r = emit_report(dir);
  CHECK_FALSE(r.all_pass);
  CHECK(r.checks_csv ==
        "check,value,threshold,status\n"
        "terminal_mse_anchor_over_ar,2,< 1,FAIL\n"
        "plan_anchor_fde,0.7,< 0.5,FAIL\n");
  fs::remove_all(dir);
}

TEST_CASE("emit_report: missing inputs are listed by name") {
  const auto empty = scratch("empty");
  fs::create_directories(empty);
  try {
    emit_report(empty);
    FAIL("expected a missing-input error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("manifest.txt") != std::string::npos);
  }
  csv::write_text(empty / "manifest.txt",
                  format_manifest({"run", "00", 1, {"drift.csv", "plan_anchor.csv"}}));
  try {
    emit_report(empty);
    FAIL("expected a missing-input error");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("drift.csv") != std::string::npos);
    CHECK(msg.find("plan_anchor.csv") != std::string::npos);
    CHECK(msg.find("metrics.csv") != std::string::npos);
  }
  fs::remove_all(empty);
}

TEST_CASE("make_world: ground truth covers the planner horizon") {
  auto cfg = minimal(scratch("world"));
  cfg.planner.horizon = 9;
  const auto w = make_world(cfg);
  CHECK(w.path.size() == 9);
  CHECK(w.actions.size() == 9);
  CHECK(w.history.size() == static_cast<std::size_t>(cfg.history));
  CHECK_NOTHROW(run_stages(cfg, {Stage::plan}));
}
