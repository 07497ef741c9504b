#include "marl/tensor.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace marl::ad {

namespace {
void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

#ifdef __GLIBC__
// Tape values are multi-megabyte matrices allocated and freed every update;
// keep glibc from serving them via mmap/munmap round trips.
const bool g_malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  return true;
}();
#endif
}  // namespace

Var Tape::leaf(Mat v, bool requires_grad) {
  Node n;
  n.val = std::move(v);
  n.rg = requires_grad;
  if (n.rg) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Param& p) {
  Var v = leaf(p.v, true);
  params_.emplace_back(&p, v);
  return v;
}

Var Tape::make(Mat v, bool rg) {
  Node n;
  n.val = std::move(v);
  n.rg = rg;
  if (rg) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  require(loss.valid() && loss.idx < static_cast<int>(nodes_.size()), "backward: bad var");
  require(nodes_[loss.idx].val.size() == 1, "backward: loss must be scalar");
  if (!nodes_[loss.idx].rg) return;  // loss disconnected from all parameters
  nodes_[loss.idx].grad(0, 0) += 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.rg && n.back) n.back(*this);
  }
}

void Tape::reset() {
  nodes_.clear();
  params_.clear();
}

Var matmul(Tape& t, Var a, Var b) {
  const Mat& A = t.val(a);
  const Mat& B = t.val(b);
  require(A.cols() == B.rows(), "matmul: inner dimensions differ");
  Var y = t.make(A * B, t.rg(a) || t.rg(b));
  if (t.rg(y)) {
    t.set_back(y, [y, a, b](Tape& tp) {
      const Mat& g = tp.grad(y);
      if (tp.rg(a)) tp.grad(a).noalias() += g * tp.val(b).transpose();
      if (tp.rg(b)) tp.grad(b).noalias() += tp.val(a).transpose() * g;
    });
  }
  return y;
}

Var add(Tape& t, Var a, Var b) {
  const Mat& A = t.val(a);
  const Mat& B = t.val(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
  Var y = t.make(A + B, t.rg(a) || t.rg(b));
  if (t.rg(y)) {
    t.set_back(y, [y, a, b](Tape& tp) {
      if (tp.rg(a)) tp.grad(a) += tp.grad(y);
      if (tp.rg(b)) tp.grad(b) += tp.grad(y);
    });
  }
  return y;
}

Var add_rowvec(Tape& t, Var a, Var bias) {
  const Mat& A = t.val(a);
  const Mat& B = t.val(bias);
  require(B.rows() == 1 && B.cols() == A.cols(), "add_rowvec: bias must be 1 x cols(a)");
  Var y = t.make(A.rowwise() + B.row(0), t.rg(a) || t.rg(bias));
  if (t.rg(y)) {
    t.set_back(y, [y, a, bias](Tape& tp) {
      if (tp.rg(a)) tp.grad(a) += tp.grad(y);
      if (tp.rg(bias)) tp.grad(bias).row(0) += tp.grad(y).colwise().sum();
    });
  }
  return y;
}

Var sub(Tape& t, Var a, Var b) {
  const Mat& A = t.val(a);
  const Mat& B = t.val(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "sub: shape mismatch");
  Var y = t.make(A - B, t.rg(a) || t.rg(b));
  if (t.rg(y)) {
    t.set_back(y, [y, a, b](Tape& tp) {
      if (tp.rg(a)) tp.grad(a) += tp.grad(y);
      if (tp.rg(b)) tp.grad(b) -= tp.grad(y);
    });
  }
  return y;
}

Var mul(Tape& t, Var a, Var b) {
  const Mat& A = t.val(a);
  const Mat& B = t.val(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "mul: shape mismatch");
  Var y = t.make(A.cwiseProduct(B), t.rg(a) || t.rg(b));
  if (t.rg(y)) {
    t.set_back(y, [y, a, b](Tape& tp) {
      if (tp.rg(a)) tp.grad(a) += tp.grad(y).cwiseProduct(tp.val(b));
      if (tp.rg(b)) tp.grad(b) += tp.grad(y).cwiseProduct(tp.val(a));
    });
  }
  return y;
}

Var scale(Tape& t, Var a, double s) {
  Var y = t.make(t.val(a) * s, t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a, s](Tape& tp) { tp.grad(a) += tp.grad(y) * s; });
  }
  return y;
}

Var relu(Tape& t, Var a) {
  Var y = t.make(t.val(a).cwiseMax(0.0), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a](Tape& tp) {
      tp.grad(a).array() += tp.grad(y).array() * (tp.val(a).array() > 0.0).cast<double>();
    });
  }
  return y;
}

Var elu(Tape& t, Var a) {
  const Mat& A = t.val(a);
  Mat v = A.unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  Var y = t.make(std::move(v), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a](Tape& tp) {
      // d/dx elu = 1 for x>0, exp(x) = elu(x)+1 otherwise
      const auto& A_ = tp.val(a).array();
      const auto& Y_ = tp.val(y).array();
      tp.grad(a).array() += tp.grad(y).array() * (A_ > 0.0).select(1.0, Y_ + 1.0);
    });
  }
  return y;
}

Var tanh_op(Tape& t, Var a) {
  Var y = t.make(t.val(a).array().tanh().matrix(), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a](Tape& tp) {
      tp.grad(a).array() += tp.grad(y).array() * (1.0 - tp.val(y).array().square());
    });
  }
  return y;
}

Var sigmoid(Tape& t, Var a) {
  Mat v = t.val(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Var y = t.make(std::move(v), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a](Tape& tp) {
      const auto& Y_ = tp.val(y).array();
      tp.grad(a).array() += tp.grad(y).array() * Y_ * (1.0 - Y_);
    });
  }
  return y;
}

Var abs_op(Tape& t, Var a) {
  Var y = t.make(t.val(a).cwiseAbs(), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a](Tape& tp) {
      tp.grad(a).array() += tp.grad(y).array() * tp.val(a).array().sign();
    });
  }
  return y;
}

Var square(Tape& t, Var a) {
  Var y = t.make(t.val(a).array().square().matrix(), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a](Tape& tp) {
      tp.grad(a).array() += tp.grad(y).array() * 2.0 * tp.val(a).array();
    });
  }
  return y;
}

Var softmax(Tape& t, Var a, int axis) {
  require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  const Mat& A = t.val(a);
  Mat v(A.rows(), A.cols());
  if (axis == 1) {
    for (int r = 0; r < A.rows(); ++r) {
      Eigen::ArrayXd row = A.row(r).array();
      row -= row.maxCoeff();  // max-subtraction for stability
      Eigen::ArrayXd e = row.exp();
      v.row(r) = (e / e.sum()).matrix().transpose();
    }
  } else {
    for (int c = 0; c < A.cols(); ++c) {
      Eigen::ArrayXd col = A.col(c).array();
      col -= col.maxCoeff();
      Eigen::ArrayXd e = col.exp();
      v.col(c) = (e / e.sum()).matrix();
    }
  }
  Var y = t.make(std::move(v), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a, axis](Tape& tp) {
      const Mat& P = tp.val(y);
      const Mat& G = tp.grad(y);
      Mat& ga = tp.grad(a);
      if (axis == 1) {
        for (int r = 0; r < P.rows(); ++r) {
          double dot = P.row(r).dot(G.row(r));
          ga.row(r).array() += P.row(r).array() * (G.row(r).array() - dot);
        }
      } else {
        for (int c = 0; c < P.cols(); ++c) {
          double dot = P.col(c).dot(G.col(c));
          ga.col(c).array() += P.col(c).array() * (G.col(c).array() - dot);
        }
      }
    });
  }
  return y;
}

Var sum(Tape& t, Var a) {
  Mat v(1, 1);
  v(0, 0) = t.val(a).sum();
  Var y = t.make(std::move(v), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a](Tape& tp) { tp.grad(a).array() += tp.grad(y)(0, 0); });
  }
  return y;
}

Var masked_sum(Tape& t, Var a, const Mat& mask) {
  const Mat& A = t.val(a);
  require(mask.rows() == A.rows() && mask.cols() == A.cols(), "masked_sum: mask shape mismatch");
  Mat v(1, 1);
  v(0, 0) = A.cwiseProduct(mask).sum();
  Var y = t.make(std::move(v), t.rg(a));
  if (t.rg(y)) {
    Mat m = mask;
    t.set_back(y, [y, a, m](Tape& tp) { tp.grad(a) += tp.grad(y)(0, 0) * m; });
  }
  return y;
}

Var rowsum(Tape& t, Var a) {
  Var y = t.make(t.val(a).rowwise().sum(), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a](Tape& tp) {
      tp.grad(a).colwise() += tp.grad(y).col(0);
    });
  }
  return y;
}

Var reshape(Tape& t, Var a, int rows, int cols) {
  const Mat& A = t.val(a);
  require(static_cast<long>(rows) * cols == A.size(), "reshape: size mismatch");
  // row-major remap
  Mat v(rows, cols);
  const int ac = static_cast<int>(A.cols());
  for (long k = 0; k < A.size(); ++k) {
    v(static_cast<int>(k / cols), static_cast<int>(k % cols)) =
        A(static_cast<int>(k / ac), static_cast<int>(k % ac));
  }
  Var y = t.make(std::move(v), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a, cols, ac](Tape& tp) {
      const Mat& g = tp.grad(y);
      Mat& ga = tp.grad(a);
      for (long k = 0; k < g.size(); ++k) {
        ga(static_cast<int>(k / ac), static_cast<int>(k % ac)) +=
            g(static_cast<int>(k / cols), static_cast<int>(k % cols));
      }
    });
  }
  return y;
}

Var slice_rows(Tape& t, Var a, int r0, int n) {
  const Mat& A = t.val(a);
  require(r0 >= 0 && n >= 0 && r0 + n <= A.rows(), "slice_rows: out of range");
  Var y = t.make(A.middleRows(r0, n), t.rg(a));
  if (t.rg(y)) {
    t.set_back(y, [y, a, r0, n](Tape& tp) {
      tp.grad(a).middleRows(r0, n) += tp.grad(y);
    });
  }
  return y;
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const int cols = static_cast<int>(t.val(parts[0]).cols());
  int rows = 0;
  bool rg = false;
  for (Var p : parts) {
    require(t.val(p).cols() == cols, "concat_rows: column mismatch");
    rows += static_cast<int>(t.val(p).rows());
    rg = rg || t.rg(p);
  }
  Mat v(rows, cols);
  int r = 0;
  for (Var p : parts) {
    const Mat& P = t.val(p);
    v.middleRows(r, P.rows()) = P;
    r += static_cast<int>(P.rows());
  }
  Var y = t.make(std::move(v), rg);
  if (rg) {
    std::vector<Var> ps = parts;
    t.set_back(y, [y, ps](Tape& tp) {
      int r0 = 0;
      for (Var p : ps) {
        const int n = static_cast<int>(tp.val(p).rows());
        if (tp.rg(p)) tp.grad(p) += tp.grad(y).middleRows(r0, n);
        r0 += n;
      }
    });
  }
  return y;
}

Var bvm(Tape& t, Var w, Var x, int embed) {
  const Mat& W = t.val(w);
  const Mat& X = t.val(x);
  const int R = static_cast<int>(X.rows());
  const int I = static_cast<int>(X.cols());
  require(W.rows() == R && W.cols() == static_cast<long>(I) * embed, "bvm: shape mismatch");
  Mat v = Mat::Zero(R, embed);
  for (int r = 0; r < R; ++r)
    for (int i = 0; i < I; ++i)
      for (int e = 0; e < embed; ++e) v(r, e) += W(r, i * embed + e) * X(r, i);
  Var y = t.make(std::move(v), t.rg(w) || t.rg(x));
  if (t.rg(y)) {
    t.set_back(y, [y, w, x, embed, R, I](Tape& tp) {
      const Mat& g = tp.grad(y);
      const Mat& W_ = tp.val(w);
      const Mat& X_ = tp.val(x);
      for (int r = 0; r < R; ++r)
        for (int i = 0; i < I; ++i)
          for (int e = 0; e < embed; ++e) {
            if (tp.rg(w)) tp.grad(w)(r, i * embed + e) += g(r, e) * X_(r, i);
            if (tp.rg(x)) tp.grad(x)(r, i) += g(r, e) * W_(r, i * embed + e);
          }
    });
  }
  return y;
}

Var gru_step(Tape& t, Var gates, Var h, Var u) {
  const Mat& G = t.val(gates);
  const Mat& H = t.val(h);
  const Mat& U = t.val(u);
  const int R = static_cast<int>(H.rows());
  const int n = static_cast<int>(H.cols());
  require(G.rows() == R && G.cols() == 3 * n, "gru_step: gates must be R x 3H");
  require(U.rows() == n && U.cols() == 3 * n, "gru_step: recurrent weight must be H x 3H");

  Mat HG = H * U;  // R x 3H
  Mat z = (1.0 / (1.0 + (-(G.leftCols(n) + HG.leftCols(n))).array().exp())).matrix();
  Mat r = (1.0 / (1.0 + (-(G.middleCols(n, n) + HG.middleCols(n, n))).array().exp())).matrix();
  Mat nn = (1.0 - 2.0 / ((2.0 * (G.rightCols(n) + r.cwiseProduct(HG.rightCols(n))).array()).exp() + 1.0)).matrix();
  Mat hn = (1.0 - z.array()) * nn.array() + z.array() * H.array();

  bool rg = t.rg(gates) || t.rg(h) || t.rg(u);
  Var y = t.make(std::move(hn), rg);
  if (rg) {
    // keep intermediates for the backward pass
    auto st = std::make_shared<std::array<Mat, 4>>();
    (*st)[0] = std::move(z);
    (*st)[1] = std::move(r);
    (*st)[2] = std::move(nn);
    (*st)[3] = std::move(HG);
    t.set_back(y, [y, gates, h, u, st, n](Tape& tp) {
      const Mat& g = tp.grad(y);
      const Mat& z_ = (*st)[0];
      const Mat& r_ = (*st)[1];
      const Mat& n_ = (*st)[2];
      const Mat& HG_ = (*st)[3];
      const Mat& H_ = tp.val(h);
      const Mat& U_ = tp.val(u);
      const int R = static_cast<int>(g.rows());

      Mat dn = g.cwiseProduct(Mat::Ones(R, n) - z_);
      Mat dz = g.cwiseProduct(H_ - n_);
      Mat dh_direct = g.cwiseProduct(z_);

      Mat dan = dn.array() * (1.0 - n_.array().square());
      Mat dr = dan.cwiseProduct(HG_.rightCols(n));
      Mat dHGn = dan.cwiseProduct(r_);
      Mat daz = dz.array() * z_.array() * (1.0 - z_.array());
      Mat dar = dr.array() * r_.array() * (1.0 - r_.array());

      Mat dHG(R, 3 * n);
      dHG.leftCols(n) = daz;
      dHG.middleCols(n, n) = dar;
      dHG.rightCols(n) = dHGn;

      if (tp.rg(gates)) {
        Mat& gg = tp.grad(gates);
        gg.leftCols(n) += daz;
        gg.middleCols(n, n) += dar;
        gg.rightCols(n) += dan;
      }
      if (tp.rg(h)) tp.grad(h).noalias() += dh_direct + dHG * U_.transpose();
      if (tp.rg(u)) tp.grad(u).noalias() += H_.transpose() * dHG;
    });
  }
  return y;
}

void optimizer_step(Param& p, const Mat& grad, const OptimizerConfig& cfg) {
  if (grad.rows() != p.v.rows() || grad.cols() != p.v.cols())
    throw std::invalid_argument("optimizer_step: gradient shape mismatch");
  if (!grad.allFinite())
    throw std::runtime_error("optimizer_step: non-finite gradient in parameter '" + p.name + "'");
  p.ms = cfg.smoothing * p.ms + (1.0 - cfg.smoothing) * grad.array().square().matrix();
  p.v.array() -= cfg.lr * grad.array() / (p.ms.array().sqrt() + cfg.eps);
}

void optimizer_step(Tape& t, const OptimizerConfig& cfg) {
  for (auto& [p, v] : t.params()) optimizer_step(*p, t.grad(v), cfg);
}

double grad_check(const std::function<Var(Tape&)>& f, const std::vector<Param*>& params,
                  double eps) {
  Tape tape;
  Var loss = f(tape);
  tape.backward(loss);

  // analytic grads aligned with `params`
  std::vector<Mat> analytic(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    analytic[i] = Mat::Zero(params[i]->v.rows(), params[i]->v.cols());
    for (auto& [p, v] : tape.params())
      if (p == params[i]) analytic[i] += tape.grad(v);
  }

  auto eval = [&]() {
    Tape tp;
    Var l = f(tp);
    return tp.val(l)(0, 0);
  };

  double max_err = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& v = params[i]->v;
    for (int c = 0; c < v.cols(); ++c)
      for (int r = 0; r < v.rows(); ++r) {
        const double orig = v(r, c);
        v(r, c) = orig + eps;
        const double up = eval();
        v(r, c) = orig - eps;
        const double dn = eval();
        v(r, c) = orig;
        const double numeric = (up - dn) / (2.0 * eps);
        const double err =
            std::abs(analytic[i](r, c) - numeric) / std::max(1.0, std::abs(numeric));
        if (!std::isfinite(err)) return std::numeric_limits<double>::infinity();
        if (err > max_err) max_err = err;
      }
  }
  return max_err;
}

}  // namespace marl::ad
