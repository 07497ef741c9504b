#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

// Adaptive episode-length controller: softmax entropy of Q-values over a
// sampled batch, windowed entropy history, least-squares trend slope, and
// the clamped length extension rule.
namespace marl::aela {

struct LengthSchedule {
  int e_l = 0;    // current limit
  int e_l0 = 0;   // initial limit
  int e_max = 0;  // task horizon

  int delta_l() const { return e_max - e_l0; }
};

struct TrendFit {
  double alpha = 0.0;  // slope
  double beta = 0.0;   // intercept
};

// Softmax with max-subtraction; tau must be > 0.
Eigen::VectorXd softmax_policy(const Eigen::VectorXd& q, double tau);

// H = -sum p log p in nats, with 0 log 0 := 0. Entries must be >= 0.
double action_entropy(const Eigen::VectorXd& p);

// q has one row per (episode, step, agent) sample, one column per action;
// filled is 0/1 per row. Returns the summed entropy over filled rows.
double batch_total_entropy(const Eigen::MatrixXd& q, const Eigen::VectorXd& filled, double tau);

// Ordinary least squares over x = 0..w-1; requires at least 2 values.
TrendFit fit_trend(const std::vector<double>& values);

// E_L += 1 iff alpha < 0 and E_L < E_max.
void maybe_extend(LengthSchedule& schedule, double alpha);

// max(1, floor(fraction * e_max))
int initial_length(int e_max, double fraction);

// Window-size lower bound: ceil(t_budget / (L_bar * Delta_L)) with
// L_bar = (e_max + e_l0) / 2 and Delta_L = e_max - e_l0.
int recommend_window(double t_budget, int e_max, int e_l0);

// Controller state: appends H_total per update, fits the trend on every
// full non-overlapping window, extends the schedule on a negative slope.
class Controller {
 public:
  Controller(LengthSchedule schedule, int window, double tau, bool enabled)
      : schedule_(schedule), window_(window), tau_(tau), enabled_(enabled) {}

  // Returns the fitted slope when this update completed a window.
  std::optional<double> on_update(double h_total);

  const LengthSchedule& schedule() const { return schedule_; }
  int episode_limit() const { return enabled_ ? schedule_.e_l : schedule_.e_max; }
  double tau() const { return tau_; }
  bool enabled() const { return enabled_; }
  int window() const { return window_; }
  const std::vector<double>& history() const { return history_; }

 private:
  LengthSchedule schedule_;
  int window_;
  double tau_;
  bool enabled_;
  std::vector<double> history_;
};

}  // namespace marl::aela
