#pragma once

#include "marl/env.hpp"
#include "marl/rng.hpp"

namespace marl {

// Modified predator-prey on a toroidal grid. Cooperative captures (two or
// more adjacent predators issuing the capture action on the same prey) pay
// +capture_reward; a solo capture attempt pays the penalty P; everything
// else pays 0. Captured prey are removed; the episode ends naturally when
// no prey remain.
struct MppConfig {
  int grid_size = 7;
  int n_predators = 4;
  int n_prey = 4;
  double penalty = -2.0;  // P, <= 0
  int obs_radius = 2;
  double capture_reward = 10.0;
  double gamma = 0.99;
  int e_max = 100;

  void validate() const;
};

class MppEnv : public Env {
 public:
  // action ids
  static constexpr int kStay = 0, kNorth = 1, kSouth = 2, kEast = 3, kWest = 4, kCapture = 5;

  explicit MppEnv(const MppConfig& cfg);

  const DecPomdpSpec& spec() const override { return spec_; }
  ResetResult reset(std::uint64_t seed) override;
  StepResult step(const std::vector<int>& joint_action) override;
  std::vector<bool> legal_actions(int agent_id) const override;

  // test hook: fixed placements instead of seeded random ones
  ResetResult reset_with_positions(const std::vector<std::pair<int, int>>& predators,
                                   const std::vector<std::pair<int, int>>& prey);

  const std::vector<std::pair<int, int>>& predator_positions() const { return pred_; }
  const std::vector<std::pair<int, int>>& prey_positions() const { return prey_; }
  const std::vector<bool>& prey_alive() const { return alive_; }

 private:
  Eigen::VectorXd global_state() const;
  Eigen::VectorXd observe(int agent) const;
  ResetResult snapshot() const;

  MppConfig cfg_;
  DecPomdpSpec spec_;
  Rng rng_;
  std::vector<std::pair<int, int>> pred_;
  std::vector<std::pair<int, int>> prey_;
  std::vector<bool> alive_;
  bool active_ = false;
};

}  // namespace marl
