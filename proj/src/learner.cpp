#include "marl/learner.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace marl {

using ad::Mat;
using ad::Tape;
using ad::Var;

void AgentParams::init(Rng& rng, int in_dim, int hidden, int n_actions) {
  w1 = ad::Param(in_dim, hidden, "agent.w1");
  b1 = ad::Param(1, hidden, "agent.b1");
  wx = ad::Param(hidden, 3 * hidden, "agent.wx");
  bx = ad::Param(1, 3 * hidden, "agent.bx");
  u = ad::Param(hidden, 3 * hidden, "agent.u");
  w2 = ad::Param(hidden, n_actions, "agent.w2");
  b2 = ad::Param(1, n_actions, "agent.b2");
  w1.init_uniform(rng, in_dim);
  b1.init_uniform(rng, in_dim);
  wx.init_uniform(rng, hidden);
  bx.init_uniform(rng, hidden);
  u.init_uniform(rng, hidden);
  w2.init_uniform(rng, hidden);
  b2.init_uniform(rng, hidden);
}

void AgentParams::copy_from(const AgentParams& o) {
  w1.v = o.w1.v; b1.v = o.b1.v; wx.v = o.wx.v; bx.v = o.bx.v;
  u.v = o.u.v; w2.v = o.w2.v; b2.v = o.b2.v;
}

std::vector<ad::Param*> AgentParams::all() { return {&w1, &b1, &wx, &bx, &u, &w2, &b2}; }

void QmixParams::init(Rng& rng, int state_dim, int n_agents, int embed, int hyper_hidden) {
  auto mk = [&](ad::Param& p, int r, int c, const char* n, int fan) {
    p = ad::Param(r, c, n);
    p.init_uniform(rng, fan);
  };
  mk(hw1_l1, state_dim, hyper_hidden, "mix.hw1_l1", state_dim);
  mk(hw1_l1b, 1, hyper_hidden, "mix.hw1_l1b", state_dim);
  mk(hw1_l2, hyper_hidden, n_agents * embed, "mix.hw1_l2", hyper_hidden);
  mk(hw1_l2b, 1, n_agents * embed, "mix.hw1_l2b", hyper_hidden);
  mk(hb1, state_dim, embed, "mix.hb1", state_dim);
  mk(hb1b, 1, embed, "mix.hb1b", state_dim);
  mk(hw2_l1, state_dim, hyper_hidden, "mix.hw2_l1", state_dim);
  mk(hw2_l1b, 1, hyper_hidden, "mix.hw2_l1b", state_dim);
  mk(hw2_l2, hyper_hidden, embed, "mix.hw2_l2", hyper_hidden);
  mk(hw2_l2b, 1, embed, "mix.hw2_l2b", hyper_hidden);
  mk(v_l1, state_dim, hyper_hidden, "mix.v_l1", state_dim);
  mk(v_l1b, 1, hyper_hidden, "mix.v_l1b", state_dim);
  mk(v_l2, hyper_hidden, 1, "mix.v_l2", hyper_hidden);
  mk(v_l2b, 1, 1, "mix.v_l2b", hyper_hidden);
}

void QmixParams::copy_from(const QmixParams& o) {
  QmixParams& s = *this;
  const QmixParams& t = o;
  ad::Param* sp[] = {&s.hw1_l1, &s.hw1_l1b, &s.hw1_l2, &s.hw1_l2b, &s.hb1, &s.hb1b,
                     &s.hw2_l1, &s.hw2_l1b, &s.hw2_l2, &s.hw2_l2b,
                     &s.v_l1, &s.v_l1b, &s.v_l2, &s.v_l2b};
  const ad::Param* tp[] = {&t.hw1_l1, &t.hw1_l1b, &t.hw1_l2, &t.hw1_l2b, &t.hb1, &t.hb1b,
                           &t.hw2_l1, &t.hw2_l1b, &t.hw2_l2, &t.hw2_l2b,
                           &t.v_l1, &t.v_l1b, &t.v_l2, &t.v_l2b};
  for (int i = 0; i < 14; ++i) sp[i]->v = tp[i]->v;
}

std::vector<ad::Param*> QmixParams::all() {
  return {&hw1_l1, &hw1_l1b, &hw1_l2, &hw1_l2b, &hb1, &hb1b,
          &hw2_l1, &hw2_l1b, &hw2_l2, &hw2_l2b, &v_l1, &v_l1b, &v_l2, &v_l2b};
}

AgentVars AgentVars::bind(Tape& t, AgentParams& p, bool trainable) {
  AgentVars v;
  if (trainable) {
    v.w1 = t.param(p.w1); v.b1 = t.param(p.b1); v.wx = t.param(p.wx); v.bx = t.param(p.bx);
    v.u = t.param(p.u); v.w2 = t.param(p.w2); v.b2 = t.param(p.b2);
  } else {
    v.w1 = t.leaf(p.w1.v); v.b1 = t.leaf(p.b1.v); v.wx = t.leaf(p.wx.v);
    v.bx = t.leaf(p.bx.v); v.u = t.leaf(p.u.v); v.w2 = t.leaf(p.w2.v); v.b2 = t.leaf(p.b2.v);
  }
  return v;
}

QmixVars QmixVars::bind(Tape& t, QmixParams& p, bool trainable) {
  QmixVars v;
  auto b = [&](ad::Param& q) { return trainable ? t.param(q) : t.leaf(q.v); };
  v.hw1_l1 = b(p.hw1_l1); v.hw1_l1b = b(p.hw1_l1b); v.hw1_l2 = b(p.hw1_l2);
  v.hw1_l2b = b(p.hw1_l2b); v.hb1 = b(p.hb1); v.hb1b = b(p.hb1b);
  v.hw2_l1 = b(p.hw2_l1); v.hw2_l1b = b(p.hw2_l1b); v.hw2_l2 = b(p.hw2_l2);
  v.hw2_l2b = b(p.hw2_l2b); v.v_l1 = b(p.v_l1); v.v_l1b = b(p.v_l1b);
  v.v_l2 = b(p.v_l2); v.v_l2b = b(p.v_l2b);
  return v;
}

namespace {

// Values-only forward of the agent network (no tape): used for action
// selection and the target pass, which never need gradients.
Mat plain_agent_forward(const AgentParams& p, const Mat& x, int steps, int rows, Mat* h_end) {
  const int H = static_cast<int>(p.u.v.rows());
  Mat x1 = ((x * p.w1.v).rowwise() + p.b1.v.row(0)).cwiseMax(0.0);
  Mat gates = (x1 * p.wx.v).rowwise() + p.bx.v.row(0);
  Mat h = h_end && h_end->rows() == rows ? *h_end : Mat::Zero(rows, H);
  Mat hist(static_cast<long>(steps) * rows, H);
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int s = 0; s < steps; ++s) {
    Mat hu = h * p.u.v;
    Mat g = gates.middleRows(static_cast<long>(s) * rows, rows);
    Mat z = (1.0 / (1.0 + (-(g.leftCols(H) + hu.leftCols(H))).array().exp())).matrix();
    Mat r = (1.0 / (1.0 + (-(g.middleCols(H, H) + hu.middleCols(H, H))).array().exp())).matrix();
    Mat n = (1.0 - 2.0 / ((2.0 * (g.rightCols(H) + r.cwiseProduct(hu.rightCols(H))).array()).exp() + 1.0)).matrix();
    h = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
    hist.middleRows(static_cast<long>(s) * rows, rows) = h;
  }
  if (h_end) *h_end = h;
  return (hist * p.w2.v).rowwise() + p.b2.v.row(0);
}

// Values-only QMIX mixing for the target side.
Eigen::VectorXd plain_qmix_forward(const QmixParams& p, const Mat& chosen, const Mat& state,
                                   int embed) {
  auto elu = [](double v) { return v > 0.0 ? v : std::expm1(v); };
  auto hyper = [&](const ad::Param& l1, const ad::Param& l1b, const ad::Param& l2,
                   const ad::Param& l2b) -> Mat {
    Mat hid = ((state * l1.v).rowwise() +l1b.v.row(0)).unaryExpr(elu);
    return (hid * l2.v).rowwise() + l2b.v.row(0);
  };
  Mat w1 = hyper(p.hw1_l1, p.hw1_l1b, p.hw1_l2, p.hw1_l2b).cwiseAbs();
  Mat b1 = (state * p.hb1.v).rowwise() + p.hb1b.v.row(0);
  const long R = chosen.rows();
  const int I = static_cast<int>(chosen.cols());
  Mat hid = Mat::Zero(R, embed);
  for (long r = 0; r < R; ++r)
    for (int e = 0; e < embed; ++e) {
      double acc = 0.0;
      for (int i = 0; i < I; ++i) acc += w1(r, static_cast<long>(i) * embed + e) * chosen(r, i);
      hid(r, e) = acc;
    }
  hid = (hid + b1).unaryExpr(elu);
  Mat w2 = hyper(p.hw2_l1, p.hw2_l1b, p.hw2_l2, p.hw2_l2b).cwiseAbs();
  Eigen::VectorXd v = hyper(p.v_l1, p.v_l1b, p.v_l2, p.v_l2b).col(0);
  return hid.cwiseProduct(w2).rowwise().sum() + v;
}

}  // namespace

std::pair<Var, Var> agent_forward(Tape& t, const AgentVars& p, const Mat& x, int steps, int rows,
                                  const Mat& h0) {
  if (x.rows() != static_cast<long>(steps) * rows)
    throw std::invalid_argument("agent_forward: x rows must be steps*rows");
  Var X = t.leaf(x);
  Var x1 = relu(t, add_rowvec(t, matmul(t, X, p.w1), p.b1));
  Var gates = add_rowvec(t, matmul(t, x1, p.wx), p.bx);  // all steps at once
  Var h = t.leaf(h0);
  std::vector<Var> hs;
  hs.reserve(steps);
  for (int s = 0; s < steps; ++s) {
    Var g = slice_rows(t, gates, s * rows, rows);
    h = gru_step(t, g, h, p.u);
    hs.push_back(h);
  }
  Var hist = steps == 1 ? hs[0] : concat_rows(t, hs);
  Var q = add_rowvec(t, matmul(t, hist, p.w2), p.b2);
  return {q, h};
}

Var qmix_forward(Tape& t, const QmixVars& p, Var chosen_q, const Mat& state, int embed) {
  Var S = t.leaf(state);
  auto hyper = [&](Var l1, Var l1b, Var l2, Var l2b) {
    return add_rowvec(t, matmul(t, elu(t, add_rowvec(t, matmul(t, S, l1), l1b)), l2), l2b);
  };
  Var w1 = abs_op(t, hyper(p.hw1_l1, p.hw1_l1b, p.hw1_l2, p.hw1_l2b));
  Var b1 = add_rowvec(t, matmul(t, S, p.hb1), p.hb1b);
  Var hid = elu(t, add(t, bvm(t, w1, chosen_q, embed), b1));
  Var w2 = abs_op(t, hyper(p.hw2_l1, p.hw2_l1b, p.hw2_l2, p.hw2_l2b));
  Var v = hyper(p.v_l1, p.v_l1b, p.v_l2, p.v_l2b);
  return add(t, rowsum(t, mul(t, hid, w2)), v);
}

double vdn_mix(const std::vector<double>& chosen_q) {
  double s = 0.0;
  for (double q : chosen_q) s += q;
  return s;
}

int epsilon_greedy(const Eigen::VectorXd& q, double eps, const std::vector<bool>& legal,
                   Rng& rng) {
  if (static_cast<long>(legal.size()) != q.size())
    throw std::invalid_argument("epsilon_greedy: mask size mismatch");
  int n_legal = 0;
  for (bool b : legal) n_legal += b ? 1 : 0;
  if (n_legal == 0) throw std::invalid_argument("epsilon_greedy: no legal action");
  if (rng.uniform() < eps) {
    int k = rng.uniform_int(n_legal);
    for (int a = 0; a < q.size(); ++a) {
      if (!legal[a]) continue;
      if (k == 0) return a;
      --k;
    }
  }
  int best = -1;
  for (int a = 0; a < q.size(); ++a) {
    if (!legal[a]) continue;
    if (best < 0 || q(a) > q(best)) best = a;  // ties keep the lowest index
  }
  return best;
}

double epsilon_at(long t, const TrainerConfig& cfg) {
  if (cfg.anneal_steps <= 0 || t >= cfg.anneal_steps) return cfg.eps_end;
  double frac = static_cast<double>(t) / static_cast<double>(cfg.anneal_steps);
  return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start);
}

Learner::Learner(const DecPomdpSpec& spec, MixerKind mixer, const TrainerConfig& cfg,
                 Rng& init_rng)
    : spec_(spec), mixer_(mixer), cfg_(cfg) {
  spec_.validate();
  in_dim_ = spec_.obs_dim + spec_.n_actions + spec_.n_agents;
  agent_.init(init_rng, in_dim_, cfg_.hidden, spec_.n_actions);
  if (mixer_ == MixerKind::kQmix)
    mix_.init(init_rng, spec_.state_dim, spec_.n_agents, cfg_.mix_embed, cfg_.hyper_hidden);
  sync_targets();
}

void Learner::sync_targets() {
  target_agent_.copy_from(agent_);
  if (mixer_ == MixerKind::kQmix) target_mix_.copy_from(mix_);
}

Mat Learner::q_step(const AgentVars&, bool target, const std::vector<Eigen::VectorXd>& obs,
                    const std::vector<int>& last_actions, Mat& hidden) const {
  const int I = spec_.n_agents;
  if (static_cast<int>(obs.size()) != I || static_cast<int>(last_actions.size()) != I)
    throw std::invalid_argument("agent_q: need one obs and last action per agent");
  Mat x = Mat::Zero(I, in_dim_);
  for (int i = 0; i < I; ++i) {
    if (obs[i].size() != spec_.obs_dim) throw std::invalid_argument("agent_q: bad obs size");
    x.row(i).head(spec_.obs_dim) = obs[i].transpose();
    if (last_actions[i] >= 0) x(i, spec_.obs_dim + last_actions[i]) = 1.0;
    x(i, spec_.obs_dim + spec_.n_actions + i) = 1.0;
  }
  return plain_agent_forward(target ? target_agent_ : agent_, x, 1, I, &hidden);
}

Mat Learner::agent_q(const std::vector<Eigen::VectorXd>& obs, const std::vector<int>& last_actions,
                     Mat& hidden) const {
  return q_step(AgentVars{}, false, obs, last_actions, hidden);
}

Mat Learner::target_agent_q(const std::vector<Eigen::VectorXd>& obs,
                            const std::vector<int>& last_actions, Mat& hidden) const {
  return q_step(AgentVars{}, true, obs, last_actions, hidden);
}

Mat Learner::build_inputs(const std::vector<const Episode*>& batch, int steps,
                          int first_step) const {
  const int B = static_cast<int>(batch.size());
  const int I = spec_.n_agents;
  // fill a row-major staging matrix so each row write is contiguous, then
  // convert once; values are identical to filling the result directly
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(
          static_cast<long>(steps) * B * I, in_dim_);
  for (int s = 0; s < steps; ++s) {
    const int step = first_step + s;
    for (int b = 0; b < B; ++b) {
      const Episode& ep = *batch[b];
      if (step > ep.length) continue;  // padded
      for (int i = 0; i < I; ++i) {
        long r = static_cast<long>(s) * B * I + static_cast<long>(b) * I + i;
        x.row(r).head(spec_.obs_dim) = ep.obs[step][i].cast<double>().transpose();
        if (step > 0) x(r, spec_.obs_dim + ep.actions[step - 1][i]) = 1.0;
        x(r, spec_.obs_dim + spec_.n_actions + i) = 1.0;
      }
    }
  }
  return x;
}

Learner::TdResult Learner::td_update(const std::vector<const Episode*>& batch) {
  if (batch.empty()) throw std::invalid_argument("td_update: empty batch");
  const int B = static_cast<int>(batch.size());
  const int I = spec_.n_agents;
  const int A = spec_.n_actions;
  int T = 0;
  for (const Episode* ep : batch) T = std::max(T, ep->length);
  const int R = B * I;  // rows per time slice

  Tape tape;
  const Mat h0 = Mat::Zero(R, cfg_.hidden);

  // online pass over steps 0..T-1
  AgentVars on = AgentVars::bind(tape, agent_, true);
  // inputs for steps 0..T; the online pass reads the first T slices, the
  // target pass all T+1 (slices 1..T feed the bootstrap)
  Mat x_tg = build_inputs(batch, T + 1, 0);
  Mat x_on = x_tg.topRows(static_cast<long>(T) * R);
  auto [q_all, h_last] = agent_forward(tape, on, x_on, T, R, h0);
  (void)h_last;

  // chosen-action values, grouped per (step, episode)
  Mat onehot = Mat::Zero(static_cast<long>(T) * R, A);
  for (int s = 0; s < T; ++s)
    for (int b = 0; b < B; ++b) {
      const Episode& ep = *batch[b];
      if (s >= ep.length) continue;
      for (int i = 0; i < I; ++i)
        onehot(static_cast<long>(s) * R + static_cast<long>(b) * I + i, ep.actions[s][i]) = 1.0;
    }
  Var chosen = reshape(tape, rowsum(tape, mul(tape, q_all, tape.leaf(onehot))), T * B, I);

  // mix to Q_jt
  Var q_jt;
  Mat states;
  if (mixer_ == MixerKind::kQmix) {
    states = Mat::Zero(static_cast<long>(T) * B, spec_.state_dim);
    for (int s = 0; s < T; ++s)
      for (int b = 0; b < B; ++b)
        if (s <= batch[b]->length)
          states.row(static_cast<long>(s) * B + b) =
              batch[b]->states[s].cast<double>().transpose();
    QmixVars mv = QmixVars::bind(tape, mix_, true);
    q_jt = qmix_forward(tape, mv, chosen, states, cfg_.mix_embed);
  } else {
    q_jt = rowsum(tape, chosen);
  }

  // target pass over steps 0..T (values only)
  Mat tq = plain_agent_forward(target_agent_, x_tg, T + 1, R, nullptr);

  Mat tmax(static_cast<long>(T) * B, I);  // per-agent max of target q at s+1
  for (int s = 1; s <= T; ++s)
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < I; ++i)
        tmax(static_cast<long>(s - 1) * B + b, i) =
            tq.row(static_cast<long>(s) * R + static_cast<long>(b) * I + i).maxCoeff();

  Eigen::VectorXd t_qjt(static_cast<long>(T) * B);
  if (mixer_ == MixerKind::kQmix) {
    Mat next_states = Mat::Zero(static_cast<long>(T) * B, spec_.state_dim);
    for (int s = 1; s <= T; ++s)
      for (int b = 0; b < B; ++b)
        if (s <= batch[b]->length)
          next_states.row(static_cast<long>(s - 1) * B + b) =
              batch[b]->states[s].cast<double>().transpose();
    t_qjt = plain_qmix_forward(target_mix_, tmax, next_states, cfg_.mix_embed);
  } else {
    t_qjt = tmax.rowwise().sum();
  }

  // TD targets and filled mask over (step, episode)
  Mat y = Mat::Zero(static_cast<long>(T) * B, 1);
  Mat mask = Mat::Zero(static_cast<long>(T) * B, 1);
  double n_filled = 0.0;
  for (int s = 0; s < T; ++s)
    for (int b = 0; b < B; ++b) {
      const Episode& ep = *batch[b];
      if (s >= ep.length) continue;
      const long r = static_cast<long>(s) * B + b;
      const bool term = (s == ep.length - 1) && ep.terminal;
      y(r, 0) = ep.rewards[s] + cfg_.gamma * (term ? 0.0 : 1.0) * t_qjt(r);
      mask(r, 0) = 1.0;
      n_filled += 1.0;
    }

  Var loss = scale(tape, masked_sum(tape, square(tape, sub(tape, q_jt, tape.leaf(y))), mask),
                   1.0 / n_filled);

  TdResult out;
  out.loss = tape.val(loss)(0, 0);
  if (!std::isfinite(out.loss)) throw std::runtime_error("td_update: loss diverged (non-finite)");
  out.q_values = tape.val(q_all);
  out.filled.resize(static_cast<long>(T) * R);
  for (int s = 0; s < T; ++s)
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < I; ++i)
        out.filled(static_cast<long>(s) * R + static_cast<long>(b) * I + i) =
            s < batch[b]->length ? 1.0 : 0.0;

  tape.backward(loss);
  ad::optimizer_step(tape, cfg_.opt);
  return out;
}

double Learner::qmix_mix(const Eigen::VectorXd& chosen_q, const Eigen::VectorXd& state) {
  if (mixer_ != MixerKind::kQmix) throw std::logic_error("qmix_mix: learner is VDN");
  if (chosen_q.size() != spec_.n_agents || state.size() != spec_.state_dim)
    throw std::invalid_argument("qmix_mix: shape mismatch");
  Tape t;
  QmixVars mv = QmixVars::bind(t, mix_, false);
  Var q = t.leaf(chosen_q.transpose());
  Var out = qmix_forward(t, mv, q, state.transpose(), cfg_.mix_embed);
  return t.val(out)(0, 0);
}

std::uint64_t Learner::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto feed = [&h](const Mat& m) {
    for (long c = 0; c < m.cols(); ++c)
      for (long r = 0; r < m.rows(); ++r) {
        std::uint64_t bits;
        double v = m(r, c);
        std::memcpy(&bits, &v, 8);
        for (int k = 0; k < 8; ++k) {
          h ^= (bits >> (8 * k)) & 0xff;
          h *= 1099511628211ULL;
        }
      }
  };
  AgentParams& a = const_cast<AgentParams&>(agent_);
  for (ad::Param* p : a.all()) feed(p->v);
  if (mixer_ == MixerKind::kQmix) {
    QmixParams& m = const_cast<QmixParams&>(mix_);
    for (ad::Param* p : m.all()) feed(p->v);
  }
  return h;
}

}  // namespace marl
