#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "marl/chain_env.hpp"
#include "marl/mpp_env.hpp"

using namespace marl;

TEST_CASE("mpp reset is deterministic per seed") {
  MppConfig cfg;
  MppEnv a(cfg), b(cfg);
  ResetResult ra = a.reset(7);
  ResetResult rb = b.reset(7);
  CHECK(ra.state == rb.state);
  REQUIRE(ra.obs.size() == rb.obs.size());
  for (std::size_t i = 0; i < ra.obs.size(); ++i) CHECK(ra.obs[i] == rb.obs[i]);
  CHECK(a.predator_positions() == b.predator_positions());

  ResetResult rc = b.reset(8);
  CHECK(ra.state != rc.state);
}

TEST_CASE("mpp trajectories replay bit-exactly") {
  MppConfig cfg;
  MppEnv a(cfg), b(cfg);
  a.reset(42);
  b.reset(42);
  Rng act(5, Rng::kOracle);
  for (int l = 0; l < 30; ++l) {
    std::vector<int> joint(cfg.n_predators);
    for (int& x : joint) x = act.uniform_int(6);
    StepResult sa = a.step(joint);
    StepResult sb = b.step(joint);
    CHECK(sa.reward == sb.reward);
    CHECK(sa.next_state == sb.next_state);
    CHECK(sa.terminal == sb.terminal);
    if (sa.terminal) break;
  }
}

TEST_CASE("cooperative capture pays +10 and removes the prey") {
  MppConfig cfg;
  cfg.n_predators = 2;
  cfg.n_prey = 1;
  MppEnv env(cfg);
  // both predators adjacent to the prey at (3,3)
  env.reset_with_positions({{3, 2}, {3, 4}}, {{3, 3}});
  StepResult sr = env.step({MppEnv::kCapture, MppEnv::kCapture});
  CHECK(sr.reward == doctest::Approx(10.0));
  CHECK(sr.captures == 1);
  CHECK(sr.terminal);  // last prey captured
  CHECK_FALSE(env.prey_alive()[0]);
}

TEST_CASE("solo capture attempt pays the penalty") {
  MppConfig cfg;
  cfg.n_predators = 2;
  cfg.n_prey = 1;
  cfg.penalty = -2.0;
  MppEnv env(cfg);
  env.reset_with_positions({{3, 2}, {0, 0}}, {{3, 3}});
  StepResult sr = env.step({MppEnv::kCapture, MppEnv::kStay});
  CHECK(sr.reward == doctest::Approx(-2.0));
  CHECK(sr.captures == 0);
  CHECK_FALSE(sr.terminal);
  CHECK(env.prey_alive()[0]);
}

TEST_CASE("capture out of range and plain moves pay zero") {
  MppConfig cfg;
  cfg.n_predators = 2;
  cfg.n_prey = 1;
  MppEnv env(cfg);
  env.reset_with_positions({{0, 0}, {1, 1}}, {{5, 5}});
  StepResult sr = env.step({MppEnv::kCapture, MppEnv::kNorth});
  // capture with no prey in range is a no-event (neither +10 nor P applies
  // since no prey was targeted)
  CHECK(sr.reward == doctest::Approx(0.0));
  sr = env.step({MppEnv::kEast, MppEnv::kWest});
  CHECK(sr.reward == doctest::Approx(0.0));
}

TEST_CASE("toroidal adjacency wraps the grid edge") {
  MppConfig cfg;
  cfg.n_predators = 2;
  cfg.n_prey = 1;
  MppEnv env(cfg);
  // (0,0) and (0,6) are adjacent to (0,0)-area prey across the wrap on a 7-grid
  env.reset_with_positions({{0, 6}, {1, 0}}, {{0, 0}});
  StepResult sr = env.step({MppEnv::kCapture, MppEnv::kCapture});
  CHECK(sr.reward == doctest::Approx(10.0));
}

TEST_CASE("mpp rejects invalid actions and stepping after terminal") {
  MppConfig cfg;
  cfg.n_predators = 2;
  cfg.n_prey = 1;
  MppEnv env(cfg);
  env.reset_with_positions({{3, 2}, {3, 4}}, {{3, 3}});
  CHECK_THROWS(env.step({6, 0}));
  CHECK_THROWS(env.step({0}));  // wrong arity
  env.step({MppEnv::kCapture, MppEnv::kCapture});
  CHECK_THROWS(env.step({0, 0}));
}

TEST_CASE("mpp legal actions and spec shape") {
  MppConfig cfg;
  MppEnv env(cfg);
  env.reset(1);
  auto mask = env.legal_actions(0);
  CHECK(mask.size() == 6);
  for (bool b : mask) CHECK(b);
  const auto& spec = env.spec();
  CHECK(spec.n_agents == 4);
  CHECK(spec.n_actions == 6);
  ResetResult rr = env.reset(2);
  CHECK(rr.state.size() == spec.state_dim);
  CHECK(static_cast<int>(rr.obs.size()) == spec.n_agents);
  CHECK(rr.obs[0].size() == spec.obs_dim);
}

TEST_CASE("chain env starts secure at l=0") {
  ChainEnvConfig cfg;
  cfg.horizon = 10;
  ChainEnv env(cfg);
  env.reset(3);
  CHECK(env.current_step() == 0);
  CHECK_FALSE(env.in_dead_end());
  CHECK_FALSE(env.reached_goal());
}

TEST_CASE("chain without lotteries walks to the horizon collecting rewards") {
  ChainEnvConfig cfg;
  cfg.horizon = 4;
  cfg.step_rewards = {1, 2, 3, 4};
  ChainEnv env(cfg);
  env.reset(3);
  double total = 0.0;
  StepResult sr;
  for (int l = 0; l < 4; ++l) {
    sr = env.step({0});
    total += sr.reward;
  }
  CHECK(total == doctest::Approx(10.0));
  CHECK(sr.terminal);
  CHECK_FALSE(env.in_dead_end());
}

TEST_CASE("certain dead-end absorbs with zero reward") {
  ChainEnvConfig cfg;
  cfg.horizon = 5;
  cfg.p_dead = {1, 1, 1, 1, 1};
  cfg.step_rewards = {9, 9, 9, 9, 9};
  ChainEnv env(cfg);
  env.reset(11);
  StepResult sr = env.step({0});
  CHECK(sr.reward == doctest::Approx(0.0));
  CHECK(sr.terminal);
  CHECK(env.in_dead_end());
  CHECK_FALSE(env.reached_goal());
}

TEST_CASE("certain goal pays r_goal and flags success") {
  ChainEnvConfig cfg;
  cfg.horizon = 5;
  cfg.p_goal = 1.0;
  cfg.r_goal = 7.5;
  ChainEnv env(cfg);
  env.reset(11);
  StepResult sr = env.step({1});
  CHECK(sr.reward == doctest::Approx(7.5));
  CHECK(sr.terminal);
  CHECK(env.reached_goal());
}

TEST_CASE("chain empirical secure probabilities match the closed form") {
  // p_goal = 0 so episodes only end by dead-end absorption or the horizon
  ChainEnvConfig cfg;
  cfg.horizon = 6;
  cfg.p_dead = {0.05, 0.15, 0.1, 0.3, 0.2, 0.25};
  ChainEnv env(cfg);
  theory::ChainModel model = cfg.to_model();

  const int episodes = 100000;
  std::vector<long> reached(cfg.horizon + 1, 0);
  Rng seeds(404, Rng::kOracle);
  for (int e = 0; e < episodes; ++e) {
    env.reset(seeds.next_u64());
    for (int l = 1; l <= cfg.horizon; ++l) {
      StepResult sr = env.step({0});
      if (env.in_dead_end()) break;
      ++reached[l];  // survived the step-l lottery: secure at step l
      if (sr.terminal) break;
    }
  }
  for (int l = 1; l <= cfg.horizon; ++l) {
    double p = theory::secure_prob(model, l);
    double se = std::sqrt(p * (1 - p) / episodes);
    double emp = static_cast<double>(reached[l]) / episodes;
    INFO("l=", l, " emp=", emp, " closed=", p);
    CHECK(std::abs(emp - p) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("chain env legal actions and config validation") {
  ChainEnvConfig cfg;
  cfg.horizon = 3;
  ChainEnv env(cfg);
  env.reset(0);
  auto mask = env.legal_actions(0);
  CHECK(mask.size() == 2);
  CHECK(mask[0]);
  CHECK(mask[1]);

  ChainEnvConfig bad;
  bad.horizon = 3;
  bad.p_dead = {0.5, 1.5, 0.2};
  CHECK_THROWS(bad.validate());
}
