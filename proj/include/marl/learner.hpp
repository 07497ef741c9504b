#pragma once

#include <cstdint>
#include <vector>

#include "marl/env.hpp"
#include "marl/replay.hpp"
#include "marl/rng.hpp"
#include "marl/tensor.hpp"

namespace marl {

enum class MixerKind { kVdn, kQmix };

struct TrainerConfig {
  double gamma = 0.99;
  int batch_size = 32;               // episodes per update
  int target_update_interval = 200;  // environment steps (T_U)
  double eps_start = 1.0;
  double eps_end = 0.05;
  long anneal_steps = 50000;
  int learn_start = 32;  // min buffer episodes before updates (> B guard)
  int buffer_capacity = 5000;
  int updates_per_episode = 1;
  int hidden = 64;
  int mix_embed = 32;
  int hyper_hidden = 64;
  ad::OptimizerConfig opt;
};

// Shared recurrent agent network: FC(in -> H) ReLU -> GRU(H) -> FC(H -> A).
// Input is obs ++ last-action one-hot ++ agent-id one-hot.
struct AgentParams {
  ad::Param w1, b1;  // FC in
  ad::Param wx, bx;  // GRU input weights (H x 3H, gates z|r|n)
  ad::Param u;       // GRU recurrent weights
  ad::Param w2, b2;  // FC out

  void init(Rng& rng, int in_dim, int hidden, int n_actions);
  void copy_from(const AgentParams& other);
  std::vector<ad::Param*> all();
};

// QMIX mixing parameters: hypernetworks from the global state produce the
// (absolute-valued) mixing weights; a state value head supplies the bias.
struct QmixParams {
  ad::Param hw1_l1, hw1_l1b, hw1_l2, hw1_l2b;  // state -> |W1| blocks (I*E)
  ad::Param hb1, hb1b;                         // state -> b1 (E)
  ad::Param hw2_l1, hw2_l1b, hw2_l2, hw2_l2b;  // state -> |w2| (E)
  ad::Param v_l1, v_l1b, v_l2, v_l2b;          // state -> scalar bias

  void init(Rng& rng, int state_dim, int n_agents, int embed, int hyper_hidden);
  void copy_from(const QmixParams& other);
  std::vector<ad::Param*> all();
};

// Tape-bound views of the parameter sets (trainable or frozen).
struct AgentVars {
  ad::Var w1, b1, wx, bx, u, w2, b2;
  static AgentVars bind(ad::Tape& t, AgentParams& p, bool trainable);
};
struct QmixVars {
  ad::Var hw1_l1, hw1_l1b, hw1_l2, hw1_l2b, hb1, hb1b;
  ad::Var hw2_l1, hw2_l1b, hw2_l2, hw2_l2b, v_l1, v_l1b, v_l2, v_l2b;
  static QmixVars bind(ad::Tape& t, QmixParams& p, bool trainable);
};

// Unrolls the recurrent network over `steps` time slices of `rows` rows
// each (x has steps*rows rows, ordered step-major). h0 is rows x H.
// Returns q over all slices (steps*rows x A) and the final hidden state.
std::pair<ad::Var, ad::Var> agent_forward(ad::Tape& t, const AgentVars& p, const ad::Mat& x,
                                          int steps, int rows, const ad::Mat& h0);

// Monotonic mixing: Q_jt = |w2(s)| . elu(bvm(|W1(s)|, q) + b1(s)) + V(s).
ad::Var qmix_forward(ad::Tape& t, const QmixVars& p, ad::Var chosen_q, const ad::Mat& state,
                     int embed);

// sum of per-agent chosen values
double vdn_mix(const std::vector<double>& chosen_q);

// With prob eps uniform over legal actions, otherwise argmax of q restricted
// to legal (ties broken by lowest index).
int epsilon_greedy(const Eigen::VectorXd& q, double eps, const std::vector<bool>& legal,
                   Rng& rng);

// piecewise-linear from eps_start at t=0 to eps_end at anneal_steps
double epsilon_at(long t, const TrainerConfig& cfg);

class Learner {
 public:
  Learner(const DecPomdpSpec& spec, MixerKind mixer, const TrainerConfig& cfg, Rng& init_rng);

  // One Q evaluation for all agents at the current step; updates `hidden`
  // (n_agents x H, zero at episode start). Returns n_agents x n_actions.
  ad::Mat agent_q(const std::vector<Eigen::VectorXd>& obs, const std::vector<int>& last_actions,
                  ad::Mat& hidden) const;
  ad::Mat target_agent_q(const std::vector<Eigen::VectorXd>& obs,
                         const std::vector<int>& last_actions, ad::Mat& hidden) const;

  ad::Mat zero_hidden() const { return ad::Mat::Zero(spec_.n_agents, cfg_.hidden); }

  struct TdResult {
    double loss = 0.0;
    ad::Mat q_values;         // (steps*B*I) x A, online, pre-update
    Eigen::VectorXd filled;   // per-row 0/1 mask aligned with q_values
  };
  // One TD step on a batch of episodes: builds targets from the target
  // networks (bootstrapping through truncated, non-terminal final steps),
  // minimizes the masked squared error, applies one optimizer step.
  TdResult td_update(const std::vector<const Episode*>& batch);

  void sync_targets();

  // scalar QMIX mix for a single (q, state) point, online parameters
  double qmix_mix(const Eigen::VectorXd& chosen_q, const Eigen::VectorXd& state);

  const DecPomdpSpec& spec() const { return spec_; }
  const TrainerConfig& config() const { return cfg_; }
  MixerKind mixer() const { return mixer_; }
  int input_dim() const { return in_dim_; }

  AgentParams& agent_params() { return agent_; }
  AgentParams& target_agent_params() { return target_agent_; }
  QmixParams& qmix_params() { return mix_; }

  std::uint64_t checksum() const;  // FNV-1a over all online parameters

  // batch assembly helper shared with target computation
  ad::Mat build_inputs(const std::vector<const Episode*>& batch, int steps, int first_step) const;

 private:
  ad::Mat q_step(const AgentVars& vars_src, bool target, const std::vector<Eigen::VectorXd>& obs,
                 const std::vector<int>& last_actions, ad::Mat& hidden) const;

  DecPomdpSpec spec_;
  MixerKind mixer_;
  TrainerConfig cfg_;
  int in_dim_;
  AgentParams agent_, target_agent_;
  QmixParams mix_, target_mix_;
};

}  // namespace marl
