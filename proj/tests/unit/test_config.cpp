#include "drnwm/config.hpp"
#include "drnwm/error.hpp"

#include <doctest.h>

#include <string>

using namespace drnwm;
using namespace drnwm::config;

namespace {

std::size_t error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("fnv1a_hex: published 64-bit test vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("Document: sections, comments and typed getters") {
  auto doc = Document::parse(
      "# leading comment\n"
      "[a]\n"
      "x = 1.5   ; trailing\n"
      "n=42\n"
      "flag = Yes\n"
      "list = 1, 2 ,3\n"
      "\n"
      "[b]\n"
      "name = hello world\n");
  CHECK(doc.has("a", "x"));
  CHECK_FALSE(doc.has("b", "x"));
  CHECK(doc.line_of("a", "n") == 4);
  CHECK(*doc.get_double("a", "x") == 1.5);
  CHECK(*doc.get_int("a", "n") == 42);
  CHECK(*doc.get_bool("a", "flag") == true);
  CHECK(*doc.get_list("a", "list") == std::vector<double>{1, 2, 3});
  CHECK(*doc.get_string("b", "name") == "hello world");
  CHECK_FALSE(doc.get_string("b", "missing").has_value());
  CHECK_NOTHROW(doc.reject_unused());
}

TEST_CASE("Document: syntax errors carry their line") {
  const auto line = [](const std::string& text) -> std::size_t {
    try {
      Document::parse(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line("[a]\nx = 1\n[b\n") == 3);
  CHECK(line("x = 1\n") == 1);
  CHECK(line("[a]\njunk\n") == 2);
  CHECK(line("[a]\nx =\n") == 2);
  CHECK(line("[a]\nx = 1\nx = 2\n") == 3);
  CHECK(line("[a b]\n") == 1);
}

TEST_CASE("Document: typed getter errors and unused keys") {
  auto doc = Document::parse("[a]\nx = abc\nn = 1.5\nb = maybe\nl = 1,,2\nextra = 1\n");
  CHECK_THROWS_AS(doc.get_double("a", "x"), ConfigError);
  CHECK_THROWS_AS(doc.get_int("a", "n"), ConfigError);
  CHECK_THROWS_AS(doc.get_bool("a", "b"), ConfigError);
  CHECK_THROWS_AS(doc.get_list("a", "l"), ConfigError);
  try {
    doc.reject_unused();
    FAIL("expected an unknown-key error");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 6);
    CHECK(std::string(e.what()).find("extra") != std::string::npos);
  }
}

TEST_CASE("parse_config: empty text gives the defaults") {
  const auto c = parse_config("");
  const ExperimentConfig d;
  CHECK(c.canonical() == d.canonical());
  CHECK(c.horizon_steps() == std::vector<int>{1, 2, 4, 8, 16});
  CHECK(c.max_horizon() == 16);
}

TEST_CASE("parse_config: values override defaults") {
  const auto c = parse_config(
      "[experiment]\nseed = 3\noutput = out_dir\n"
      "[world]\npoints = 200\nmotion = 0.3, 0.1, 0.0\n"
      "[rollout]\nhorizons = 1, 2\nintervals = 2\nsteps_per_second = 2\nseeds = 4\n"
      "[generator]\nsigma_base = 0.02\nlambda = 1\n"
      "[ablation]\nepi_mask = off\ninterval = 2\n"
      "[planner]\npopulation = 16\nelites = 4\nstrategies = anchor\nstd_smoothing = 0\n");
  CHECK(c.seed == 3);
  CHECK(c.output_dir == "out_dir");
  CHECK(c.scene_points == 200);
  CHECK(c.motion.dx == 0.3);
  CHECK(c.horizon_steps() == std::vector<int>{2, 4});
  CHECK(c.intervals == std::vector<int>{2});
  CHECK(c.seeds == 4);
  CHECK(c.sigma_base == 0.02);
  CHECK_FALSE(c.epi_mask);
  CHECK(c.ablation_interval == 2);
  CHECK(c.planner.population == 16);
  CHECK(c.planner.std_smoothing == 0.0);
  CHECK(c.plan_strategies == std::vector<planner::Strategy>{planner::Strategy::anchor});
}

TEST_CASE("parse_config: validation errors name the offending line") {
  CHECK(error_line("[world]\npoints = 3\n") == 2);
  CHECK(error_line("[world]\n\noutlier_rate = 1.0\n") == 3);
  CHECK(error_line("[rollout]\nhorizons = 1, 0\n") == 2);
  CHECK(error_line("[rollout]\nhorizons = 1.5\n") == 2);
  CHECK(error_line("[planner]\npopulation = 4\nelites = 5\n") == 3);
  CHECK(error_line("[planner]\nstrategies = anchor, greedy\n") == 2);
  CHECK(error_line("[planner]\ninit_std = 0.1, 0, 0.1\n") == 2);
  CHECK(error_line("[masks]\nn_min = 70\n") == 2);
  CHECK(error_line("[world]\npoints = 100\n[misc]\nfoo = 1\n") == 4);
  CHECK(error_line("[experiment]\nseed = -1\n") == 2);
}

TEST_CASE("canonical text and hash ignore formatting") {
  const auto a = parse_config("[world]\npoints=300\n[rollout]\nintervals=1,2\n");
  const auto b = parse_config("# c\n[rollout]\n  intervals = 1 , 2   \n\n[world]\npoints = 300 ; x\n");
  CHECK(a.canonical() == b.canonical());
  CHECK(fnv1a_hex(a.canonical()) == fnv1a_hex(b.canonical()));
  const auto c = parse_config("[world]\npoints=301\n[rollout]\nintervals=1,2\n");
  CHECK(fnv1a_hex(a.canonical()) != fnv1a_hex(c.canonical()));
}

TEST_CASE("load_config: missing file is a config error") {
  CHECK_THROWS_AS(load_config("/nonexistent/drnwm.cfg"), ConfigError);
}
