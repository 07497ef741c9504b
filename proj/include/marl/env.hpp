#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace marl {

struct DecPomdpSpec {
  int n_agents = 0;
  int n_actions = 0;
  int obs_dim = 0;
  int state_dim = 0;
  double gamma = 0.99;
  int e_max = 1;

  void validate() const;
};

struct StepResult {
  double reward = 0.0;
  std::vector<Eigen::VectorXd> next_obs;
  Eigen::VectorXd next_state;
  bool terminal = false;
  int captures = 0;  // capture events this step (MPP), 0 elsewhere
};

struct ResetResult {
  Eigen::VectorXd state;
  std::vector<Eigen::VectorXd> obs;
};

// Dec-POMDP environment. Instances are single-threaded; truncation at the
// training length limit is the caller's job, the env only signals natural
// terminals.
class Env {
 public:
  virtual ~Env() = default;
  virtual const DecPomdpSpec& spec() const = 0;
  virtual ResetResult reset(std::uint64_t seed) = 0;
  virtual StepResult step(const std::vector<int>& joint_action) = 0;
  virtual std::vector<bool> legal_actions(int agent_id) const = 0;
};

}  // namespace marl
