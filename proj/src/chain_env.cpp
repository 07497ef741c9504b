#include "marl/chain_env.hpp"

#include <stdexcept>

namespace marl {

void ChainEnvConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("ChainEnvConfig: horizon must be >= 1");
  if (!p_dead.empty() && static_cast<int>(p_dead.size()) != horizon)
    throw std::invalid_argument("ChainEnvConfig: p_dead length must equal horizon");
  for (double p : p_dead)
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("ChainEnvConfig: p_dead out of [0,1]");
  if (p_goal < 0.0 || p_goal > 1.0)
    throw std::invalid_argument("ChainEnvConfig: p_goal out of [0,1]");
  if (!step_rewards.empty() && static_cast<int>(step_rewards.size()) != horizon)
    throw std::invalid_argument("ChainEnvConfig: step_rewards length must equal horizon");
}

theory::ChainModel ChainEnvConfig::to_model() const {
  theory::ChainModel m;
  m.horizon = horizon;
  m.p_dead = p_dead.empty() ? std::vector<double>(horizon, 0.0) : p_dead;
  m.p_goal = p_goal;
  m.r_goal = r_goal;
  m.step_rewards = step_rewards.empty() ? std::vector<double>(horizon, 0.0) : step_rewards;
  m.optimal_rewards = m.step_rewards;
  return m;
}

ChainEnv::ChainEnv(const ChainEnvConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.p_dead.empty()) cfg_.p_dead.assign(cfg_.horizon, 0.0);
  if (cfg_.step_rewards.empty()) cfg_.step_rewards.assign(cfg_.horizon, 0.0);
  spec_.n_agents = 1;
  spec_.n_actions = 2;
  spec_.obs_dim = 3;  // normalized step, secure flag, dead flag
  spec_.state_dim = 3;
  spec_.gamma = cfg_.gamma;
  spec_.e_max = cfg_.horizon;
  spec_.validate();
}

ResetResult ChainEnv::reset(std::uint64_t seed) {
  rng_.reseed(seed, Rng::kEnv);
  l_ = 0;
  dead_ = false;
  goal_ = false;
  active_ = true;
  ResetResult r;
  r.state = encode();
  r.obs = {encode()};
  return r;
}

StepResult ChainEnv::step(const std::vector<int>& joint_action) {
  if (!active_) throw std::logic_error("ChainEnv::step: episode not active");
  if (joint_action.size() != 1) throw std::invalid_argument("ChainEnv::step: one agent expected");
  if (joint_action[0] < 0 || joint_action[0] >= 2)
    throw std::invalid_argument("ChainEnv::step: action id out of range");

  ++l_;
  StepResult out;
  if (rng_.uniform() < cfg_.p_dead[l_ - 1]) {
    dead_ = true;
    out.terminal = true;  // absorbed
  } else if (cfg_.p_goal > 0.0 && rng_.uniform() < cfg_.p_goal) {
    goal_ = true;
    out.reward = cfg_.r_goal;
    out.terminal = true;
  } else {
    out.reward = cfg_.step_rewards[l_ - 1];
    out.terminal = l_ >= cfg_.horizon;
  }
  out.next_state = encode();
  out.next_obs = {encode()};
  if (out.terminal) active_ = false;
  return out;
}

std::vector<bool> ChainEnv::legal_actions(int agent_id) const {
  if (agent_id != 0) throw std::invalid_argument("ChainEnv::legal_actions: bad agent id");
  return {true, true};
}

Eigen::VectorXd ChainEnv::encode() const {
  Eigen::VectorXd v(3);
  v << static_cast<double>(l_) / cfg_.horizon, dead_ ? 0.0 : 1.0, dead_ ? 1.0 : 0.0;
  return v;
}

}  // namespace marl
