#pragma once

#include <string>
#include <vector>

#include "marl/rng.hpp"

// Closed-form dead-end/secure-state analysis for parametric chain processes,
// plus Monte Carlo oracles that validate the closed forms by simulation.
namespace marl::theory {

// Parametric dead-end process. p_dead[l-1] is the probability of falling
// into a dead-end at interaction step l; step_rewards[t-1] the per-step
// reward; optimal_rewards the optimal policy's per-step rewards.
struct ChainModel {
  int horizon = 0;
  std::vector<double> p_dead;
  double p_goal = 0.0;
  double r_goal = 0.0;
  std::vector<double> step_rewards;
  std::vector<double> optimal_rewards;

  void validate() const;
};

struct VisitStats {
  std::vector<double> p_s;  // empirical P_s(l), l = 1..e_l
  double n_s = 0.0;         // secure visits (expected or empirical)
  double n_total = 0.0;
  double e_n = 0.0;      // episode count n_total / e_l
  double p_d_agg = 0.0;  // 1 - n_s / n_total
};

// P_s(l) = prod_{k<=l} (1 - P_d(k))
double secure_prob(const ChainModel& model, int l);

// N_s = (n_total / e_l) * sum_{l<=e_l} P_s(l)
double expected_secure_visits(const ChainModel& model, int e_l, double n_total);

// closed-form N_s(e_l + 1) - N_s(e_l)
double delta_Ns(const ChainModel& model, int e_l, double n_total);

// Regret expansion with constant dead-end/goal probabilities:
// sum(r* - r) + sum_k (1-p_d)^{k-1} p_g (sum_T r - sum_k r - r_g) + r_g
double regret(const ChainModel& model, int T, double p_d, double p_g);

// d/dPd of the expansion above.
double regret_derivative(const ChainModel& model, int T, double p_d, double p_g);

// true iff every contiguous reward sum is < r_g
bool assumption_check(const std::vector<double>& step_rewards, double r_g);

// Simulates the per-step dead-end lottery over fixed-length episodes and
// counts secure-state visits.
VisitStats mc_visit_oracle(const ChainModel& model, int e_l, int episodes, Rng& rng);

// One row of the validation-suite report.
struct CheckRow {
  std::string name;
  double computed = 0.0;
  double bound = 0.0;
  bool pass = false;
};

// Runs the full randomized validation suite (monotonicity, visit-count
// identities, regret derivative, Monte Carlo agreement).
std::vector<CheckRow> run_validation_suite(std::uint64_t seed);

// helper shared with tests: a random model with horizon <= max_horizon
ChainModel random_model(Rng& rng, int max_horizon, bool satisfy_assumption);

}  // namespace marl::theory
