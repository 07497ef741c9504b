#pragma once

#include "marl/env.hpp"
#include "marl/rng.hpp"
#include "marl/theory.hpp"

namespace marl {

// Synthetic dead-end chain: a single agent walks a step-indexed lottery.
// At step l it falls into an absorbing dead-end with probability p_dead[l-1];
// otherwise, with probability p_goal it reaches the goal (reward r_goal,
// terminal), else it collects step_rewards[l-1] and continues. Actions do
// not influence the lottery. Dead-end absorption yields reward 0.
struct ChainEnvConfig {
  int horizon = 50;
  std::vector<double> p_dead;  // length horizon; empty = all zero
  double p_goal = 0.0;
  double r_goal = 10.0;
  std::vector<double> step_rewards;  // length horizon; empty = all zero
  double gamma = 0.99;

  void validate() const;
  theory::ChainModel to_model() const;
};

class ChainEnv : public Env {
 public:
  explicit ChainEnv(const ChainEnvConfig& cfg);

  const DecPomdpSpec& spec() const override { return spec_; }
  ResetResult reset(std::uint64_t seed) override;
  StepResult step(const std::vector<int>& joint_action) override;
  std::vector<bool> legal_actions(int agent_id) const override;

  bool in_dead_end() const { return dead_; }
  bool reached_goal() const { return goal_; }
  int current_step() const { return l_; }

 private:
  Eigen::VectorXd encode() const;

  ChainEnvConfig cfg_;
  DecPomdpSpec spec_;
  Rng rng_;
  int l_ = 0;
  bool dead_ = false;
  bool goal_ = false;
  bool active_ = false;
};

}  // namespace marl
