#include "marl/mpp_env.hpp"

#include <stdexcept>

namespace marl {

void DecPomdpSpec::validate() const {
  if (n_agents < 1) throw std::invalid_argument("DecPomdpSpec: n_agents must be >= 1");
  if (n_actions < 2) throw std::invalid_argument("DecPomdpSpec: n_actions must be >= 2");
  if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("DecPomdpSpec: gamma out of [0,1)");
  if (e_max < 1) throw std::invalid_argument("DecPomdpSpec: e_max must be >= 1");
}

void MppConfig::validate() const {
  if (grid_size < 3) throw std::invalid_argument("MppConfig: grid_size must be >= 3");
  if (n_predators < 2) throw std::invalid_argument("MppConfig: n_predators must be >= 2");
  if (n_prey < 1) throw std::invalid_argument("MppConfig: n_prey must be >= 1");
  if (penalty > 0.0) throw std::invalid_argument("MppConfig: penalty must be <= 0");
  if (capture_reward <= 0.0) throw std::invalid_argument("MppConfig: capture_reward must be > 0");
  if (obs_radius < 1) throw std::invalid_argument("MppConfig: obs_radius must be >= 1");
  if (2 * obs_radius + 1 > grid_size)
    throw std::invalid_argument("MppConfig: observation window larger than the grid");
}

MppEnv::MppEnv(const MppConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int window = 2 * cfg_.obs_radius + 1;
  spec_.n_agents = cfg_.n_predators;
  spec_.n_actions = 6;  // stay/N/S/E/W/capture
  spec_.obs_dim = 2 * window * window + 2;
  spec_.state_dim = 2 * cfg_.grid_size * cfg_.grid_size;
  spec_.gamma = cfg_.gamma;
  spec_.e_max = cfg_.e_max;
  spec_.validate();
}

ResetResult MppEnv::reset(std::uint64_t seed) {
  rng_.reseed(seed, Rng::kEnv);
  pred_.resize(cfg_.n_predators);
  prey_.resize(cfg_.n_prey);
  alive_.assign(cfg_.n_prey, true);
  const int g = cfg_.grid_size;
  for (auto& p : pred_) p = {rng_.uniform_int(g), rng_.uniform_int(g)};
  for (auto& p : prey_) p = {rng_.uniform_int(g), rng_.uniform_int(g)};
  active_ = true;
  return snapshot();
}

ResetResult MppEnv::reset_with_positions(const std::vector<std::pair<int, int>>& predators,
                                         const std::vector<std::pair<int, int>>& prey) {
  if (static_cast<int>(predators.size()) != cfg_.n_predators ||
      static_cast<int>(prey.size()) != cfg_.n_prey)
    throw std::invalid_argument("reset_with_positions: placement count mismatch");
  rng_.reseed(0, Rng::kEnv);
  pred_ = predators;
  prey_ = prey;
  alive_.assign(cfg_.n_prey, true);
  active_ = true;
  return snapshot();
}

ResetResult MppEnv::snapshot() const {
  ResetResult r;
  r.state = global_state();
  r.obs.reserve(cfg_.n_predators);
  for (int i = 0; i < cfg_.n_predators; ++i) r.obs.push_back(observe(i));
  return r;
}

namespace {
inline int wrap(int x, int g) { return ((x % g) + g) % g; }

// toroidal Manhattan distance along one axis
inline int axis_dist(int a, int b, int g) {
  int d = std::abs(a - b);
  return std::min(d, g - d);
}
}  // namespace

StepResult MppEnv::step(const std::vector<int>& joint_action) {
  if (!active_) throw std::logic_error("MppEnv::step: episode not active");
  if (static_cast<int>(joint_action.size()) != cfg_.n_predators)
    throw std::invalid_argument("MppEnv::step: wrong joint action size");
  for (int a : joint_action)
    if (a < 0 || a >= spec_.n_actions)
      throw std::invalid_argument("MppEnv::step: action id out of range");

  const int g = cfg_.grid_size;
  auto move = [g](std::pair<int, int>& pos, int action) {
    switch (action) {
      case kNorth: pos.second = wrap(pos.second - 1, g); break;
      case kSouth: pos.second = wrap(pos.second + 1, g); break;
      case kEast: pos.first = wrap(pos.first + 1, g); break;
      case kWest: pos.first = wrap(pos.first - 1, g); break;
      default: break;  // stay / capture: no movement
    }
  };

  // 1. predators move
  for (int i = 0; i < cfg_.n_predators; ++i) move(pred_[i], joint_action[i]);

  // 2. capture resolution: each capturing predator targets the lowest-index
  //    live prey on its own cell or 4-neighborhood
  StepResult out;
  std::vector<int> attempts(cfg_.n_prey, 0);
  for (int i = 0; i < cfg_.n_predators; ++i) {
    if (joint_action[i] != kCapture) continue;
    for (int j = 0; j < cfg_.n_prey; ++j) {
      if (!alive_[j]) continue;
      int d = axis_dist(pred_[i].first, prey_[j].first, g) +
              axis_dist(pred_[i].second, prey_[j].second, g);
      if (d <= 1) {
        ++attempts[j];
        break;
      }
    }
  }
  for (int j = 0; j < cfg_.n_prey; ++j) {
    if (attempts[j] >= 2) {
      out.reward += cfg_.capture_reward;
      alive_[j] = false;
      ++out.captures;
    } else if (attempts[j] == 1) {
      out.reward += cfg_.penalty;
    }
  }

  // 3. surviving prey move uniformly at random
  for (int j = 0; j < cfg_.n_prey; ++j) {
    if (!alive_[j]) continue;
    move(prey_[j], rng_.uniform_int(5));  // stay/N/S/E/W
  }

  // 4. natural terminal: all prey captured
  out.terminal = true;
  for (bool a : alive_)
    if (a) out.terminal = false;

  out.next_state = global_state();
  out.next_obs.reserve(cfg_.n_predators);
  for (int i = 0; i < cfg_.n_predators; ++i) out.next_obs.push_back(observe(i));
  if (out.terminal) active_ = false;
  return out;
}

std::vector<bool> MppEnv::legal_actions(int agent_id) const {
  if (agent_id < 0 || agent_id >= cfg_.n_predators)
    throw std::invalid_argument("MppEnv::legal_actions: bad agent id");
  return std::vector<bool>(spec_.n_actions, true);  // toroidal grid: no walls
}

Eigen::VectorXd MppEnv::global_state() const {
  const int g = cfg_.grid_size;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(spec_.state_dim);
  for (const auto& p : pred_) s(p.second * g + p.first) += 1.0;
  for (int j = 0; j < cfg_.n_prey; ++j)
    if (alive_[j]) s(g * g + prey_[j].second * g + prey_[j].first) += 1.0;
  return s;
}

Eigen::VectorXd MppEnv::observe(int agent) const {
  const int g = cfg_.grid_size;
  const int r = cfg_.obs_radius;
  const int window = 2 * r + 1;
  Eigen::VectorXd o = Eigen::VectorXd::Zero(spec_.obs_dim);
  const auto [ax, ay] = pred_[agent];
  auto cell = [&](int x, int y) {
    int dx = wrap(x - ax + r, g);  // wrapped offset
    int dy = wrap(y - ay + r, g);
    if (dx >= window || dy >= window) return -1;
    return dy * window + dx;
  };
  for (int i = 0; i < cfg_.n_predators; ++i) {
    if (i == agent) continue;
    int c = cell(pred_[i].first, pred_[i].second);
    if (c >= 0) o(c) += 1.0;
  }
  for (int j = 0; j < cfg_.n_prey; ++j) {
    if (!alive_[j]) continue;
    int c = cell(prey_[j].first, prey_[j].second);
    if (c >= 0) o(window * window + c) += 1.0;
  }
  o(2 * window * window) = static_cast<double>(ax) / g;
  o(2 * window * window + 1) = static_cast<double>(ay) / g;
  return o;
}

}  // namespace marl
