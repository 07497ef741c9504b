#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "marl/aela.hpp"
#include "marl/chain_env.hpp"
#include "marl/config.hpp"
#include "marl/learner.hpp"
#include "marl/mpp_env.hpp"

namespace marl {

struct ExperimentConfig {
  std::string env = "mpp";  // mpp | chain
  MppConfig mpp;
  ChainEnvConfig chain;
  MixerKind algo = MixerKind::kVdn;
  TrainerConfig trainer;

  bool aela_enabled = true;
  double aela_tau = 1.0;
  double aela_fraction = 0.25;
  int aela_window = 0;  // 0 = auto (budget-based recommendation)

  long total_steps = 200000;
  long eval_interval = 10000;
  int eval_episodes = 32;
  std::string out_dir = "out";

  static ExperimentConfig from(const Config& cfg);
  Config to_config() const;
  void validate() const;

  std::unique_ptr<Env> make_env() const;
  // effective initial episode limit / trend window for this config
  int resolve_e_l0() const;
  int resolve_window() const;
};

struct MetricRow {
  long step = 0;
  int e_l = 0;
  double h_total = 0.0;
  double alpha = 0.0;
  double train_return = 0.0;
  double test_return_median = 0.0;
  double success_rate = 0.0;
  std::vector<int> end_steps;        // eval episode end interaction steps
  std::vector<long> samples_hist;    // stored samples per interaction step (1..e_max)

  bool operator==(const MetricRow&) const = default;
};

struct RunLog {
  std::string config_text;
  std::uint64_t seed = 0;
  std::vector<MetricRow> rows;
  std::uint64_t final_checksum = 0;
  bool diverged = false;
};

struct EvalResult {
  double median_return = 0.0;
  double success_rate = 0.0;
  std::vector<int> end_steps;
};

// Greedy evaluation: episodes run to the natural terminal or e_max, never
// the training limit. Uses its own env instance and rng stream; does not
// touch the replay buffer.
EvalResult evaluate(const Learner& learner, Env& env, int n_episodes, std::uint64_t seed);

// Algorithm-1 outer loop: rollouts truncated at the controller's limit,
// one TD update per collected episode, entropy-trend length extension,
// periodic target sync and greedy evaluation.
RunLog run_training(const ExperimentConfig& cfg, std::uint64_t seed);

void emit_csv(const RunLog& log, const std::string& path);
std::vector<MetricRow> parse_csv(const std::string& path);
void emit_plot(const RunLog& log, const std::string& path);  // SVG line chart

double median(std::vector<double> v);

}  // namespace marl
