#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "marl/tensor.hpp"

using namespace marl;
using ad::Mat;

namespace {
Mat randm(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}
}  // namespace

TEST_CASE("matmul forward and hand gradient") {
  ad::Tape t;
  Mat a(2, 3), b(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  b << 1, 0, 0, 1, 1, 1;
  auto va = t.leaf(a, true);
  auto vb = t.leaf(b, true);
  auto y = ad::sum(t, ad::matmul(t, va, vb));
  CHECK(t.val(y)(0, 0) == doctest::Approx(4 + 5 + 10 + 11).epsilon(1e-12));
  t.backward(y);
  // d(sum(AB))/dA = ones * B^T
  Mat ga = Mat::Ones(2, 2) * b.transpose();
  CHECK((t.grad(va) - ga).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  Mat gb = a.transpose() * Mat::Ones(2, 2);
  CHECK((t.grad(vb) - gb).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("gradients are linear in the loss scale") {
  Rng rng(11, Rng::kOracle);
  Mat a = randm(rng, 3, 4);
  ad::Tape t;
  auto va = t.leaf(a, true);
  auto l1 = ad::sum(t, ad::tanh_op(t, va));
  t.backward(l1);
  Mat g1 = t.grad(va);

  ad::Tape t2;
  auto vb = t2.leaf(a, true);
  auto l2 = ad::scale(t2, ad::sum(t2, ad::tanh_op(t2, vb)), 3.0);
  t2.backward(l2);
  CHECK((t2.grad(vb) - 3.0 * g1).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("finite-difference checks across the primitive set") {
  Rng rng(5, Rng::kOracle);
  ad::Param a, b;
  a.v = randm(rng, 4, 6);
  b.v = randm(rng, 6, 3);

  SUBCASE("fc relu") {
    double err = ad::grad_check(
        [&](ad::Tape& t) {
          return ad::sum(t, ad::relu(t, ad::matmul(t, t.param(a), t.param(b))));
        },
        {&a, &b});
    CHECK(err < 1e-4);
  }
  SUBCASE("elu sigmoid square") {
    double err = ad::grad_check(
        [&](ad::Tape& t) {
          auto x = t.param(a);
          return ad::sum(t, ad::square(t, ad::sigmoid(t, ad::elu(t, x))));
        },
        {&a});
    CHECK(err < 1e-4);
  }
  SUBCASE("abs") {
    // keep entries away from the kink
    ad::Param c;
    c.v = randm(rng, 3, 3);
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i)
        if (std::abs(c.v(i, j)) < 0.1) c.v(i, j) = 0.5;
    double err = ad::grad_check(
        [&](ad::Tape& t) { return ad::sum(t, ad::abs_op(t, t.param(c))); }, {&c});
    CHECK(err < 1e-4);
  }
  SUBCASE("softmax rows and cols") {
    for (int axis : {0, 1}) {
      double err = ad::grad_check(
          [&](ad::Tape& t) {
            auto p = ad::softmax(t, t.param(a), axis);
            return ad::sum(t, ad::square(t, p));
          },
          {&a});
      CHECK(err < 1e-4);
    }
  }
  SUBCASE("reshape slice concat rowsum") {
    double err = ad::grad_check(
        [&](ad::Tape& t) {
          auto x = t.param(a);  // 4x6
          auto r = ad::reshape(t, x, 8, 3);
          auto s1 = ad::slice_rows(t, r, 0, 4);
          auto s2 = ad::slice_rows(t, r, 4, 4);
          auto c = ad::concat_rows(t, {s2, s1});
          return ad::sum(t, ad::square(t, ad::rowsum(t, c)));
        },
        {&a});
    CHECK(err < 1e-4);
  }
  SUBCASE("bvm") {
    ad::Param w, x;
    w.v = randm(rng, 5, 3 * 4);  // R=5, I=3, E=4
    x.v = randm(rng, 5, 3);
    double err = ad::grad_check(
        [&](ad::Tape& t) {
          return ad::sum(t, ad::square(t, ad::bvm(t, t.param(w), t.param(x), 4)));
        },
        {&w, &x});
    CHECK(err < 1e-4);
  }
  SUBCASE("gru step chain of two") {
    ad::Param wx, u;
    const int H = 5, R = 3, IN = 4;
    wx.v = randm(rng, IN, 3 * H);
    u.v = randm(rng, H, 3 * H);
    Mat x1 = randm(rng, R, IN), x2 = randm(rng, R, IN);
    double err = ad::grad_check(
        [&](ad::Tape& t) {
          auto vwx = t.param(wx);
          auto vu = t.param(u);
          auto h0 = t.leaf(Mat::Zero(R, H));
          auto g1 = ad::matmul(t, t.leaf(x1), vwx);
          auto h1 = ad::gru_step(t, g1, h0, vu);
          auto g2 = ad::matmul(t, t.leaf(x2), vwx);
          auto h2 = ad::gru_step(t, g2, h1, vu);
          return ad::sum(t, ad::square(t, h2));
        },
        {&wx, &u});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("bvm matches an explicit per-row loop") {
  Rng rng(17, Rng::kOracle);
  const int R = 4, I = 3, E = 2;
  Mat w = randm(rng, R, I * E), x = randm(rng, R, I);
  ad::Tape t;
  auto y = ad::bvm(t, t.leaf(w), t.leaf(x), E);
  for (int r = 0; r < R; ++r)
    for (int e = 0; e < E; ++e) {
      double expect = 0.0;
      for (int i = 0; i < I; ++i) expect += w(r, i * E + e) * x(r, i);
      CHECK(t.val(y)(r, e) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("gru_step matches a scalar reference implementation") {
  Rng rng(23, Rng::kOracle);
  const int H = 4, R = 2;
  Mat gates = randm(rng, R, 3 * H), h = randm(rng, R, H), u = randm(rng, H, 3 * H);
  ad::Tape t;
  auto out = ad::gru_step(t, t.leaf(gates), t.leaf(h), t.leaf(u));
  Mat hu = h * u;
  for (int r = 0; r < R; ++r)
    for (int k = 0; k < H; ++k) {
      double z = 1.0 / (1.0 + std::exp(-(gates(r, k) + hu(r, k))));
      double rr = 1.0 / (1.0 + std::exp(-(gates(r, H + k) + hu(r, H + k))));
      double n = std::tanh(gates(r, 2 * H + k) + rr * hu(r, 2 * H + k));
      double expect = (1.0 - z) * n + z * h(r, k);
      CHECK(t.val(out)(r, k) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("masked_sum ignores unfilled rows completely") {
  Mat a(3, 2);
  a << 1, 2, 100, 200, 3, 4;
  Mat mask(3, 2);
  mask << 1, 1, 0, 0, 1, 1;
  ad::Tape t;
  auto va = t.leaf(a, true);
  auto y = ad::masked_sum(t, ad::square(t, va), mask);
  CHECK(t.val(y)(0, 0) == doctest::Approx(1 + 4 + 9 + 16));
  t.backward(y);
  CHECK(t.grad(va)(1, 0) == 0.0);
  CHECK(t.grad(va)(1, 1) == 0.0);
  CHECK(t.grad(va)(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("optimizer single step matches a hand computation") {
  ad::Param p(1, 2, "p");
  p.v << 1.0, -2.0;
  Mat g(1, 2);
  g << 0.5, -1.0;
  ad::OptimizerConfig cfg;  // lr 5e-4, smoothing 0.99, eps 1e-5
  ad::optimizer_step(p, g, cfg);
  // ms = 0.01 * g^2; step = lr * g / (sqrt(ms) + eps)
  double ms0 = 0.01 * 0.25, ms1 = 0.01 * 1.0;
  CHECK(p.ms(0, 0) == doctest::Approx(ms0).epsilon(1e-15));
  CHECK(p.v(0, 0) == doctest::Approx(1.0 - 5e-4 * 0.5 / (std::sqrt(ms0) + 1e-5)).epsilon(1e-12));
  CHECK(p.v(0, 1) == doctest::Approx(-2.0 - 5e-4 * -1.0 / (std::sqrt(ms1) + 1e-5)).epsilon(1e-12));
}

TEST_CASE("optimizer rejects non-finite gradients") {
  ad::Param p(1, 1, "p");
  Mat g(1, 1);
  g << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ad::optimizer_step(p, g, {}), std::runtime_error);
}

TEST_CASE("two-layer recurrent network end-to-end gradient") {
  Rng rng(31, Rng::kOracle);
  const int IN = 5, H = 6, A = 3, R = 2;
  ad::Param w1, b1, wx, u, w2, b2;
  w1.v = randm(rng, IN, H);
  b1.v = randm(rng, 1, H);
  wx.v = randm(rng, H, 3 * H);
  u.v = randm(rng, H, 3 * H);
  w2.v = randm(rng, H, A);
  b2.v = randm(rng, 1, A);
  Mat x = randm(rng, R, IN), h0 = randm(rng, R, H);

  double err = ad::grad_check(
      [&](ad::Tape& t) {
        auto f1 = ad::relu(t, ad::add_rowvec(t, ad::matmul(t, t.leaf(x), t.param(w1)),
                                             t.param(b1)));
        auto g = ad::matmul(t, f1, t.param(wx));
        auto h1 = ad::gru_step(t, g, t.leaf(h0), t.param(u));
        auto q = ad::add_rowvec(t, ad::matmul(t, h1, t.param(w2)), t.param(b2));
        return ad::sum(t, ad::square(t, q));
      },
      {&w1, &b1, &wx, &u, &w2, &b2});
  CHECK(err < 1e-4);
}

TEST_CASE("backward accumulates through shared subexpressions") {
  Mat a(1, 1);
  a << 2.0;
  ad::Tape t;
  auto x = t.leaf(a, true);
  auto y = ad::mul(t, x, x);  // x^2 -> dy/dx = 2x = 4
  t.backward(ad::sum(t, y));
  CHECK(t.grad(x)(0, 0) == doctest::Approx(4.0));
}
