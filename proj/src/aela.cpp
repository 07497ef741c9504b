#include "marl/aela.hpp"

#include <cmath>
#include <stdexcept>

namespace marl::aela {

Eigen::VectorXd softmax_policy(const Eigen::VectorXd& q, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("softmax_policy: tau must be > 0");
  if (!q.allFinite()) throw std::invalid_argument("softmax_policy: q must be finite");
  Eigen::ArrayXd a = q.array() / tau;
  a -= a.maxCoeff();
  Eigen::ArrayXd e = a.exp();
  return (e / e.sum()).matrix();
}

double action_entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    const double pi = p(i);
    if (pi < 0.0) throw std::invalid_argument("action_entropy: negative probability");
    if (pi > 0.0) h -= pi * std::log(pi);
  }
  return h;
}

double batch_total_entropy(const Eigen::MatrixXd& q, const Eigen::VectorXd& filled, double tau) {
  if (filled.size() != q.rows())
    throw std::invalid_argument("batch_total_entropy: mask/q shape mismatch");
  double total = 0.0;
  for (int r = 0; r < q.rows(); ++r) {
    if (filled(r) == 0.0) continue;
    total += action_entropy(softmax_policy(q.row(r).transpose(), tau));
  }
  return total;
}

TrendFit fit_trend(const std::vector<double>& values) {
  const int w = static_cast<int>(values.size());
  if (w < 2) throw std::invalid_argument("fit_trend: need at least 2 values");
  const double x_mean = (w - 1) / 2.0;
  double y_mean = 0.0;
  for (double v : values) y_mean += v;
  y_mean /= w;
  double num = 0.0, den = 0.0;
  for (int x = 0; x < w; ++x) {
    num += (x - x_mean) * (values[x] - y_mean);
    den += (x - x_mean) * (x - x_mean);
  }
  TrendFit fit;
  fit.alpha = num / den;
  fit.beta = y_mean - fit.alpha * x_mean;
  return fit;
}

void maybe_extend(LengthSchedule& schedule, double alpha) {
  if (alpha < 0.0 && schedule.e_l < schedule.e_max) schedule.e_l += 1;
}

int initial_length(int e_max, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("initial_length: fraction must be in (0, 1]");
  return std::max(1, static_cast<int>(std::floor(fraction * e_max)));
}

int recommend_window(double t_budget, int e_max, int e_l0) {
  if (e_l0 >= e_max) throw std::invalid_argument("recommend_window: need e_l0 < e_max");
  if (t_budget <= 0.0) throw std::invalid_argument("recommend_window: t_budget must be > 0");
  const double l_bar = (e_max + e_l0) / 2.0;
  const double delta_l = e_max - e_l0;
  return std::max(1, static_cast<int>(std::ceil(t_budget / (l_bar * delta_l))));
}

std::optional<double> Controller::on_update(double h_total) {
  history_.push_back(h_total);
  if (window_ < 2 || static_cast<int>(history_.size()) % window_ != 0) return std::nullopt;
  std::vector<double> last(history_.end() - window_, history_.end());
  TrendFit fit = fit_trend(last);
  if (enabled_) maybe_extend(schedule_, fit.alpha);
  return fit.alpha;
}

}  // namespace marl::aela
