#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <vector>

#include "marl/rng.hpp"

namespace marl {

// One padded rollout. Storage is float to keep a 5000-episode buffer in
// memory; values are widened back to double when a batch is assembled.
struct Episode {
  int length = 0;      // filled steps
  bool terminal = false;  // natural end (false = truncated at the limit)
  int n_agents = 0;
  int obs_dim = 0;
  int state_dim = 0;
  // states[0..length], obs[0..length][agent], actions/rewards[0..length-1]
  std::vector<Eigen::VectorXf> states;
  std::vector<std::vector<Eigen::VectorXf>> obs;
  std::vector<std::vector<std::uint8_t>> actions;
  std::vector<float> rewards;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity, int e_max) : capacity_(capacity), e_max_(e_max) {}

  void store(Episode ep);
  // uniform without replacement within one call
  std::vector<const Episode*> sample(int batch, Rng& rng) const;

  int size() const { return static_cast<int>(episodes_.size()); }
  int capacity() const { return capacity_; }
  const Episode& at(int i) const { return episodes_[i]; }

 private:
  int capacity_;
  int e_max_;
  std::deque<Episode> episodes_;
};

}  // namespace marl
