#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "marl/rng.hpp"

// Minimal reverse-mode autodiff over 2-D double tensors. Every value on a
// Tape is an Eigen matrix; batching over (episode, step, agent) is done by
// stacking rows so the heavy lifting stays inside GEMM calls.
namespace marl::ad {

using Mat = Eigen::MatrixXd;

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Persistent trainable parameter. `ms` is the RMS accumulator owned by the
// optimizer, kept alongside the value so a parameter set is self-contained.
struct Param {
  Mat v;
  Mat ms;
  std::string name;

  Param() = default;
  Param(int rows, int cols, std::string n)
      : v(Mat::Zero(rows, cols)), ms(Mat::Zero(rows, cols)), name(std::move(n)) {}

  // uniform in +-1/sqrt(fan_in)
  void init_uniform(Rng& rng, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int c = 0; c < v.cols(); ++c)
      for (int r = 0; r < v.rows(); ++r) v(r, c) = rng.uniform(-bound, bound);
  }
};

class Tape {
 public:
  struct Node {
    Mat val;
    Mat grad;                         // allocated only when requires_grad
    bool rg = false;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Var leaf(Mat v, bool requires_grad = false);
  Var param(Param& p);  // leaf bound to a persistent parameter

  Var make(Mat v, bool rg);
  void set_back(Var v, std::function<void(Tape&)> back) { nodes_[v.idx].back = std::move(back); }

  const Mat& val(Var x) const { return nodes_[x.idx].val; }
  Mat& grad(Var x) { return nodes_[x.idx].grad; }
  bool rg(Var x) const { return nodes_[x.idx].rg; }

  // Accumulates dloss/dnode into every requires_grad node. `loss` must be
  // 1x1. Disconnected parameters keep zero gradient. The tape stays intact
  // and may be re-run (gradients accumulate across calls).
  void backward(Var loss);

  // Gradients of registered parameters, aligned with `params()`.
  const std::vector<std::pair<Param*, Var>>& params() const { return params_; }

  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<Param*, Var>> params_;
  friend class NodeAccess;
};

// --- forward primitives ----------------------------------------------------

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);          // same shape
Var add_rowvec(Tape& t, Var a, Var bias);  // bias is 1xC, broadcast over rows
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);  // elementwise
Var scale(Tape& t, Var a, double s);
Var relu(Tape& t, Var a);
Var elu(Tape& t, Var a);
Var tanh_op(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var abs_op(Tape& t, Var a);
Var square(Tape& t, Var a);
// softmax along axis: 1 = within each row, 0 = within each column
Var softmax(Tape& t, Var a, int axis = 1);
Var sum(Tape& t, Var a);                       // 1x1
Var masked_sum(Tape& t, Var a, const Mat& mask);  // 1x1; mask entries 0/1
Var rowsum(Tape& t, Var a);                    // Rx1
Var reshape(Tape& t, Var a, int rows, int cols);  // row-major remap
Var slice_rows(Tape& t, Var a, int r0, int n);
Var concat_rows(Tape& t, const std::vector<Var>& parts);

// Batched vector-matrix product: W is Rx(I*E), row-major blocks of shape
// (I,E); x is RxI. Output RxE with y[r,e] = sum_i W[r, i*E+e] * x[r,i].
Var bvm(Tape& t, Var w, Var x, int embed);

// Fused GRU step. gates = x*Wx + bx (Rx3H, blocks [z | r | n]); h is RxH;
// u is the recurrent weight (Hx3H). Returns the next hidden state RxH:
//   z = sigmoid(gz + hU_z), r = sigmoid(gr + hU_r),
//   n = tanh(gn + r .* hU_n), h' = (1-z).*n + z.*h
Var gru_step(Tape& t, Var gates, Var h, Var u);


// --- optimizer ---------------------------------------------------------------

// Adaptive RMS-scaled gradient descent.
struct OptimizerConfig {
  double lr = 5e-4;
  double smoothing = 0.99;
  double eps = 1e-5;
};

// Applies one update to a single parameter: ms = a*ms + (1-a)*g^2,
// p -= lr * g / (sqrt(ms) + eps). Throws on non-finite gradients.
void optimizer_step(Param& p, const Mat& grad, const OptimizerConfig& cfg);

// Updates every parameter registered on the tape from its accumulated grad.
void optimizer_step(Tape& t, const OptimizerConfig& cfg);

// --- gradient checking -------------------------------------------------------

// f builds a scalar loss on a fresh tape (registering params via
// Tape::param). Returns max over parameter entries of
// |analytic - numeric| / max(1, |numeric|), central differences.
double grad_check(const std::function<Var(Tape&)>& f, const std::vector<Param*>& params,
                  double eps = 1e-5);

}  // namespace marl::ad
