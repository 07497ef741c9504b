#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "marl/harness.hpp"

using namespace marl;

namespace {
ExperimentConfig small_chain() {
  ExperimentConfig cfg;
  cfg.env = "chain";
  cfg.chain.horizon = 12;
  cfg.chain.p_dead = std::vector<double>(12, 0.03);
  cfg.chain.p_goal = 0.1;
  cfg.chain.r_goal = 5.0;
  cfg.chain.step_rewards = std::vector<double>(12, 0.05);
  cfg.total_steps = 1500;
  cfg.eval_interval = 500;
  cfg.eval_episodes = 4;
  cfg.trainer.anneal_steps = 1000;
  return cfg;
}
}  // namespace

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == doctest::Approx(2.0));
  CHECK(median({4, 1, 3, 2}) == doctest::Approx(2.5));
  CHECK(median({7}) == doctest::Approx(7.0));
  CHECK(median({}) == doctest::Approx(0.0));
}

TEST_CASE("config file parsing with comments and types") {
  Config c = Config::from_string(
      "# a comment\n"
      "env = chain\n"
      "chain.horizon= 9\n"
      "aela.enabled = false\n"
      "trainer.lr=0.001\n"
      "chain.p_dead = 0.1, 0.2,0.3\n");
  CHECK(c.get_string("env", "") == "chain");
  CHECK(c.get_int("chain.horizon", 0) == 9);
  CHECK_FALSE(c.get_bool("aela.enabled", true));
  CHECK(c.get_double("trainer.lr", 0) == doctest::Approx(1e-3));
  auto list = c.get_list("chain.p_dead");
  REQUIRE(list.size() == 3);
  CHECK(list[1] == doctest::Approx(0.2));
  CHECK(c.get_int("missing", 42) == 42);
}

TEST_CASE("experiment config round-trips through text") {
  ExperimentConfig cfg = small_chain();
  cfg.algo = MixerKind::kQmix;
  cfg.aela_tau = 0.7;
  Config text = cfg.to_config();
  ExperimentConfig back = ExperimentConfig::from(Config::from_string(text.to_string()));
  CHECK(back.env == cfg.env);
  CHECK(back.algo == cfg.algo);
  CHECK(back.aela_tau == cfg.aela_tau);
  CHECK(back.total_steps == cfg.total_steps);
  CHECK(back.chain.horizon == cfg.chain.horizon);
}

TEST_CASE("scalar list shorthand broadcasts over the horizon") {
  Config c = Config::from_string(
      "env = chain\nchain.horizon = 5\nchain.p_dead = 0.2\nchain.step_rewards = 0.1\n");
  ExperimentConfig cfg = ExperimentConfig::from(c);
  REQUIRE(cfg.chain.p_dead.size() == 5);
  CHECK(cfg.chain.p_dead[4] == doctest::Approx(0.2));
}

TEST_CASE("window and initial-length resolution") {
  ExperimentConfig cfg;
  cfg.env = "mpp";
  cfg.total_steps = 200000;
  CHECK(cfg.resolve_e_l0() == 25);
  CHECK(cfg.resolve_window() == 35);  // ceil(1.6e5 / (62.5 * 75))
  cfg.aela_window = 150;
  CHECK(cfg.resolve_window() == 150);
  cfg.aela_window = 0;
  cfg.aela_enabled = false;  // inert schedule, nothing to pace
  CHECK(cfg.resolve_e_l0() == 100);
  CHECK(cfg.resolve_window() == 0);
}

TEST_CASE("run_training is deterministic per seed") {
  ExperimentConfig cfg = small_chain();
  RunLog a = run_training(cfg, 3);
  RunLog b = run_training(cfg, 3);
  CHECK(a.final_checksum == b.final_checksum);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i] == b.rows[i]);

  RunLog c = run_training(cfg, 4);
  CHECK(a.final_checksum != c.final_checksum);
}

TEST_CASE("fixed-limit controller equals disabled controller bit for bit") {
  ExperimentConfig on = small_chain();
  on.aela_enabled = true;
  on.aela_fraction = 1.0;  // start at the full horizon: nothing to extend
  ExperimentConfig off = small_chain();
  off.aela_enabled = false;

  RunLog la = run_training(on, 11);
  RunLog lb = run_training(off, 11);
  CHECK(la.final_checksum == lb.final_checksum);
  REQUIRE(la.rows.size() == lb.rows.size());
  for (std::size_t i = 0; i < la.rows.size(); ++i) CHECK(la.rows[i] == lb.rows[i]);
}

TEST_CASE("evaluation settings do not perturb training") {
  ExperimentConfig a = small_chain();
  ExperimentConfig b = small_chain();
  b.eval_episodes = 9;  // different eval load, same training stream
  CHECK(run_training(a, 5).final_checksum == run_training(b, 5).final_checksum);
}

TEST_CASE("episode limit binds training rollouts but not evaluation") {
  ExperimentConfig cfg = small_chain();
  cfg.chain.p_dead.assign(12, 0.0);
  cfg.chain.p_goal = 0.0;  // episodes always span the full horizon
  cfg.aela_fraction = 0.25;
  cfg.aela_window = 1000000;  // never extend during this short run
  RunLog log = run_training(cfg, 2);
  const int e_l0 = cfg.resolve_e_l0();
  for (const MetricRow& row : log.rows) {
    CHECK(row.e_l == e_l0);
    for (std::size_t l = static_cast<std::size_t>(e_l0); l < row.samples_hist.size(); ++l)
      CHECK(row.samples_hist[l] == 0);  // no training samples beyond the limit
    for (int end : row.end_steps) CHECK(end == cfg.chain.horizon);  // eval runs to e_max
  }
}

TEST_CASE("csv round trip preserves every row exactly") {
  ExperimentConfig cfg = small_chain();
  RunLog log = run_training(cfg, 6);
  const std::string path = std::filesystem::temp_directory_path() / "marl_csv_rt.csv";
  emit_csv(log, path);
  std::vector<MetricRow> rows = parse_csv(path);
  REQUIRE(rows.size() == log.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i] == log.rows[i]);
  std::remove(path.c_str());
}

TEST_CASE("svg plot is written and well formed enough") {
  ExperimentConfig cfg = small_chain();
  cfg.total_steps = 600;
  RunLog log = run_training(cfg, 1);
  const std::string path = std::filesystem::temp_directory_path() / "marl_plot.svg";
  emit_plot(log, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("<svg") != std::string::npos);
  CHECK(text.find("polyline") != std::string::npos);
  CHECK(text.find("</svg>") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("validation rejects bad configs") {
  ExperimentConfig cfg = small_chain();
  cfg.env = "minecraft";
  CHECK_THROWS(cfg.validate());
  cfg = small_chain();
  cfg.total_steps = 0;
  CHECK_THROWS(cfg.validate());
  CHECK_THROWS(ExperimentConfig::from(Config::from_string("algo = sarsa\n")));
}
