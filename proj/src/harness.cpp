#include "marl/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace marl {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ExperimentConfig ExperimentConfig::from(const Config& c) {
  ExperimentConfig e;
  e.env = c.get_string("env", e.env);
  e.mpp.grid_size = c.get_int("mpp.grid_size", e.mpp.grid_size);
  e.mpp.n_predators = c.get_int("mpp.n_predators", e.mpp.n_predators);
  e.mpp.n_prey = c.get_int("mpp.n_prey", e.mpp.n_prey);
  e.mpp.penalty = c.get_double("mpp.penalty", e.mpp.penalty);
  e.mpp.obs_radius = c.get_int("mpp.obs_radius", e.mpp.obs_radius);
  e.mpp.capture_reward = c.get_double("mpp.capture_reward", e.mpp.capture_reward);
  e.mpp.gamma = c.get_double("gamma", e.mpp.gamma);
  e.mpp.e_max = c.get_int("mpp.e_max", e.mpp.e_max);
  e.chain.horizon = c.get_int("chain.horizon", e.chain.horizon);
  e.chain.p_dead = c.get_list("chain.p_dead");
  if (e.chain.p_dead.size() == 1) e.chain.p_dead.assign(e.chain.horizon, e.chain.p_dead[0]);
  e.chain.p_goal = c.get_double("chain.p_goal", e.chain.p_goal);
  e.chain.r_goal = c.get_double("chain.r_goal", e.chain.r_goal);
  e.chain.step_rewards = c.get_list("chain.step_rewards");
  if (e.chain.step_rewards.size() == 1)
    e.chain.step_rewards.assign(e.chain.horizon, e.chain.step_rewards[0]);
  e.chain.gamma = c.get_double("gamma", e.chain.gamma);
  std::string algo = c.get_string("algo", "vdn");
  if (algo == "vdn") e.algo = MixerKind::kVdn;
  else if (algo == "qmix") e.algo = MixerKind::kQmix;
  else throw std::runtime_error("config: unknown algo '" + algo + "'");
  e.trainer.batch_size = c.get_int("trainer.batch_size", e.trainer.batch_size);
  e.trainer.target_update_interval =
      c.get_int("trainer.target_update_interval", e.trainer.target_update_interval);
  e.trainer.eps_start = c.get_double("trainer.eps_start", e.trainer.eps_start);
  e.trainer.eps_end = c.get_double("trainer.eps_end", e.trainer.eps_end);
  e.trainer.anneal_steps = c.get_long("trainer.anneal_steps", e.trainer.anneal_steps);
  e.trainer.buffer_capacity = c.get_int("trainer.buffer_capacity", e.trainer.buffer_capacity);
  e.trainer.updates_per_episode =
      c.get_int("trainer.updates_per_episode", e.trainer.updates_per_episode);
  e.trainer.hidden = c.get_int("trainer.hidden", e.trainer.hidden);
  e.trainer.mix_embed = c.get_int("trainer.mix_embed", e.trainer.mix_embed);
  e.trainer.opt.lr = c.get_double("trainer.lr", e.trainer.opt.lr);
  e.trainer.learn_start = c.get_int("trainer.learn_start", e.trainer.batch_size);
  e.aela_enabled = c.get_bool("aela.enabled", e.aela_enabled);
  e.aela_tau = c.get_double("aela.tau", e.aela_tau);
  e.aela_fraction = c.get_double("aela.initial_fraction", e.aela_fraction);
  std::string w = c.get_string("aela.window", "auto");
  e.aela_window = (w == "auto") ? 0 : std::stoi(w);
  e.total_steps = c.get_long("total_steps", e.total_steps);
  e.eval_interval = c.get_long("eval_interval", e.eval_interval);
  e.eval_episodes = c.get_int("eval_episodes", e.eval_episodes);
  e.out_dir = c.get_string("out_dir", e.out_dir);
  e.validate();
  return e;
}

Config ExperimentConfig::to_config() const {
  Config c;
  auto d = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  c.set("env", env);
  c.set("algo", algo == MixerKind::kVdn ? "vdn" : "qmix");
  c.set("mpp.grid_size", std::to_string(mpp.grid_size));
  c.set("mpp.n_predators", std::to_string(mpp.n_predators));
  c.set("mpp.n_prey", std::to_string(mpp.n_prey));
  c.set("mpp.penalty", d(mpp.penalty));
  c.set("mpp.obs_radius", std::to_string(mpp.obs_radius));
  c.set("mpp.capture_reward", d(mpp.capture_reward));
  c.set("mpp.e_max", std::to_string(mpp.e_max));
  c.set("chain.horizon", std::to_string(chain.horizon));
  c.set("chain.p_goal", d(chain.p_goal));
  c.set("chain.r_goal", d(chain.r_goal));
  c.set("gamma", d(env == "mpp" ? mpp.gamma : chain.gamma));
  c.set("trainer.batch_size", std::to_string(trainer.batch_size));
  c.set("trainer.target_update_interval", std::to_string(trainer.target_update_interval));
  c.set("trainer.eps_start", d(trainer.eps_start));
  c.set("trainer.eps_end", d(trainer.eps_end));
  c.set("trainer.anneal_steps", std::to_string(trainer.anneal_steps));
  c.set("trainer.buffer_capacity", std::to_string(trainer.buffer_capacity));
  c.set("trainer.updates_per_episode", std::to_string(trainer.updates_per_episode));
  c.set("trainer.hidden", std::to_string(trainer.hidden));
  c.set("trainer.lr", d(trainer.opt.lr));
  c.set("aela.enabled", aela_enabled ? "true" : "false");
  c.set("aela.tau", d(aela_tau));
  c.set("aela.initial_fraction", d(aela_fraction));
  c.set("aela.window", aela_window == 0 ? "auto" : std::to_string(aela_window));
  c.set("total_steps", std::to_string(total_steps));
  c.set("eval_interval", std::to_string(eval_interval));
  c.set("eval_episodes", std::to_string(eval_episodes));
  c.set("out_dir", out_dir);
  return c;
}

void ExperimentConfig::validate() const {
  if (env != "mpp" && env != "chain")
    throw std::runtime_error("config: env must be 'mpp' or 'chain'");
  if (total_steps <= 0) throw std::runtime_error("config: total_steps must be > 0");
  if (eval_interval <= 0) throw std::runtime_error("config: eval_interval must be > 0");
  if (eval_episodes < 1) throw std::runtime_error("config: eval_episodes must be >= 1");
  if (env == "mpp") mpp.validate();
  else chain.validate();
}

std::unique_ptr<Env> ExperimentConfig::make_env() const {
  if (env == "mpp") return std::make_unique<MppEnv>(mpp);
  return std::make_unique<ChainEnv>(chain);
}

int ExperimentConfig::resolve_e_l0() const {
  const int e_max = env == "mpp" ? mpp.e_max : chain.horizon;
  return aela_enabled ? aela::initial_length(e_max, aela_fraction) : e_max;
}

int ExperimentConfig::resolve_window() const {
  if (aela_window > 0) return aela_window;
  const int e_max = env == "mpp" ? mpp.e_max : chain.horizon;
  const int e_l0 = resolve_e_l0();
  if (e_l0 >= e_max) return 0;  // inert schedule: nothing to pace
  return aela::recommend_window(0.8 * static_cast<double>(total_steps), e_max, e_l0);
}

EvalResult evaluate(const Learner& learner, Env& env, int n_episodes, std::uint64_t seed) {
  Rng rng(seed, Rng::kEval);
  const auto& spec = env.spec();
  auto* chain = dynamic_cast<ChainEnv*>(&env);
  std::vector<double> returns;
  EvalResult out;
  int successes = 0;
  for (int e = 0; e < n_episodes; ++e) {
    auto rr = env.reset(rng.next_u64());
    ad::Mat hidden = learner.zero_hidden();
    std::vector<int> last(spec.n_agents, -1);
    std::vector<Eigen::VectorXd> obs = rr.obs;
    double ret = 0.0;
    int end_step = spec.e_max;
    bool success = false;
    for (int l = 0; l < spec.e_max; ++l) {
      ad::Mat q = learner.agent_q(obs, last, hidden);
      std::vector<int> acts(spec.n_agents);
      for (int i = 0; i < spec.n_agents; ++i)
        acts[i] = epsilon_greedy(q.row(i).transpose(), 0.0, env.legal_actions(i), rng);
      StepResult sr = env.step(acts);
      ret += sr.reward;
      obs = sr.next_obs;
      last = acts;
      if (sr.terminal) {
        end_step = l + 1;
        success = chain ? chain->reached_goal() : true;
        break;
      }
    }
    returns.push_back(ret);
    out.end_steps.push_back(end_step);
    if (success) ++successes;
  }
  out.median_return = median(returns);
  out.success_rate = static_cast<double>(successes) / n_episodes;
  return out;
}

RunLog run_training(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto env = cfg.make_env();
  auto eval_env = cfg.make_env();
  const DecPomdpSpec& spec = env->spec();
  TrainerConfig tc = cfg.trainer;
  tc.gamma = spec.gamma;

  Rng init_rng(seed, Rng::kInit);
  Rng explore_rng(seed, Rng::kExplore);
  Rng sample_rng(seed, Rng::kSample);
  Rng env_seed_rng(seed, Rng::kEnv);
  Rng eval_seed_rng(seed, Rng::kEval);

  Learner learner(spec, cfg.algo, tc, init_rng);
  ReplayBuffer buffer(tc.buffer_capacity, spec.e_max);
  const int e_l0 = cfg.resolve_e_l0();
  aela::Controller controller({e_l0, e_l0, spec.e_max}, cfg.resolve_window(), cfg.aela_tau,
                              cfg.aela_enabled);

  RunLog log;
  log.config_text = cfg.to_config().to_string();
  log.seed = seed;

  long t = 0, t_p = 0, next_eval = cfg.eval_interval;
  std::vector<long> samples_hist(spec.e_max, 0);
  double h_last = 0.0, alpha_last = 0.0, train_return_last = 0.0;

  auto record = [&](long step_value) {
    EvalResult ev = evaluate(learner, *eval_env, cfg.eval_episodes, eval_seed_rng.next_u64());
    MetricRow row;
    row.step = step_value;
    row.e_l = controller.episode_limit();
    row.h_total = h_last;
    row.alpha = alpha_last;
    row.train_return = train_return_last;
    row.test_return_median = ev.median_return;
    row.success_rate = ev.success_rate;
    row.end_steps = ev.end_steps;
    row.samples_hist = samples_hist;
    log.rows.push_back(std::move(row));
  };

  record(0);
  while (t < cfg.total_steps) {
    // --- rollout, truncated at the controller's current limit
    ResetResult rr = env->reset(env_seed_rng.next_u64());
    ad::Mat hidden = learner.zero_hidden();
    std::vector<int> last(spec.n_agents, -1);
    std::vector<Eigen::VectorXd> obs = rr.obs;

    Episode ep;
    ep.n_agents = spec.n_agents;
    ep.obs_dim = spec.obs_dim;
    ep.state_dim = spec.state_dim;
    ep.states.push_back(rr.state.cast<float>());
    {
      std::vector<Eigen::VectorXf> o0;
      for (const auto& o : obs) o0.push_back(o.cast<float>());
      ep.obs.push_back(std::move(o0));
    }
    double ret = 0.0;
    const int limit = controller.episode_limit();
    for (int l = 0; l < limit; ++l) {
      ad::Mat q = learner.agent_q(obs, last, hidden);
      const double eps = epsilon_at(t, tc);
      std::vector<int> acts(spec.n_agents);
      for (int i = 0; i < spec.n_agents; ++i)
        acts[i] = epsilon_greedy(q.row(i).transpose(), eps, env->legal_actions(i), explore_rng);
      StepResult sr = env->step(acts);

      std::vector<std::uint8_t> a8(spec.n_agents);
      for (int i = 0; i < spec.n_agents; ++i) a8[i] = static_cast<std::uint8_t>(acts[i]);
      ep.actions.push_back(std::move(a8));
      ep.rewards.push_back(static_cast<float>(sr.reward));
      ep.states.push_back(sr.next_state.cast<float>());
      std::vector<Eigen::VectorXf> of;
      for (const auto& o : sr.next_obs) of.push_back(o.cast<float>());
      ep.obs.push_back(std::move(of));

      ret += sr.reward;
      ++samples_hist[l];
      ++t;
      obs = sr.next_obs;
      last = acts;
      if (sr.terminal) {
        ep.terminal = true;
        break;
      }
    }
    ep.length = static_cast<int>(ep.rewards.size());
    buffer.store(std::move(ep));
    train_return_last = ret;

    // --- learn
    if (buffer.size() > tc.learn_start) {
      for (int u = 0; u < tc.updates_per_episode; ++u) {
        auto batch = buffer.sample(tc.batch_size, sample_rng);
        Learner::TdResult res;
        try {
          res = learner.td_update(batch);
        } catch (const std::runtime_error&) {
          log.diverged = true;
          log.final_checksum = learner.checksum();
          return log;
        }
        h_last = aela::batch_total_entropy(res.q_values, res.filled, cfg.aela_tau);
        if (auto a = controller.on_update(h_last)) alpha_last = *a;
        if (t - t_p > tc.target_update_interval) {
          learner.sync_targets();
          t_p = t;
        }
      }
    }

    while (t >= next_eval && next_eval <= cfg.total_steps) {
      record(next_eval);
      next_eval += cfg.eval_interval;
    }
  }

  log.final_checksum = learner.checksum();
  return log;
}

// --- CSV / plot --------------------------------------------------------------

namespace {
std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join_pipe(const std::vector<T>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << '|';
    out << v[i];
  }
  return out.str();
}
}  // namespace

void emit_csv(const RunLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_csv: cannot write " + path);
  out << "# marl-csv v1 seed=" << log.seed << " checksum=" << log.final_checksum
      << (log.diverged ? " diverged=1" : "") << "\n";
  out << "step,e_l,h_total,alpha,train_return,test_return_median,success_rate,end_steps,"
         "samples_hist\n";
  for (const MetricRow& r : log.rows) {
    out << r.step << ',' << r.e_l << ',' << fmt_double(r.h_total) << ',' << fmt_double(r.alpha)
        << ',' << fmt_double(r.train_return) << ',' << fmt_double(r.test_return_median) << ','
        << fmt_double(r.success_rate) << ',' << join_pipe(r.end_steps) << ','
        << join_pipe(r.samples_hist) << "\n";
  }
}

std::vector<MetricRow> parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_csv: cannot open " + path);
  std::vector<MetricRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("step,", 0) == 0) continue;
    std::istringstream ls(line);
    std::string tok;
    MetricRow r;
    std::getline(ls, tok, ','); r.step = std::stol(tok);
    std::getline(ls, tok, ','); r.e_l = std::stoi(tok);
    std::getline(ls, tok, ','); r.h_total = std::stod(tok);
    std::getline(ls, tok, ','); r.alpha = std::stod(tok);
    std::getline(ls, tok, ','); r.train_return = std::stod(tok);
    std::getline(ls, tok, ','); r.test_return_median = std::stod(tok);
    std::getline(ls, tok, ','); r.success_rate = std::stod(tok);
    std::getline(ls, tok, ',');
    {
      std::istringstream ps(tok);
      std::string p;
      while (std::getline(ps, p, '|'))
        if (!p.empty()) r.end_steps.push_back(std::stoi(p));
    }
    std::getline(ls, tok, ',');
    {
      std::istringstream ps(tok);
      std::string p;
      while (std::getline(ps, p, '|'))
        if (!p.empty()) r.samples_hist.push_back(std::stol(p));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_plot(const RunLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_plot: cannot write " + path);
  const int W = 900, H = 420, ML = 60, MR = 60, MT = 30, MB = 40;
  double max_step = 1.0, min_ret = 0.0, max_ret = 1.0, max_el = 1.0;
  for (const MetricRow& r : log.rows) {
    max_step = std::max(max_step, static_cast<double>(r.step));
    min_ret = std::min(min_ret, r.test_return_median);
    max_ret = std::max(max_ret, r.test_return_median);
    max_el = std::max(max_el, static_cast<double>(r.e_l));
  }
  auto sx = [&](double s) { return ML + s / max_step * (W - ML - MR); };
  auto sy_ret = [&](double v) {
    return MT + (max_ret - v) / std::max(1e-12, max_ret - min_ret) * (H - MT - MB);
  };
  auto sy_el = [&](double v) { return MT + (max_el - v) / max_el * (H - MT - MB); };

  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  auto poly = [&](const std::string& color, bool use_el) {
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (const MetricRow& r : log.rows)
      out << sx(static_cast<double>(r.step)) << ','
          << (use_el ? sy_el(r.e_l) : sy_ret(r.test_return_median)) << ' ';
    out << "'/>\n";
  };
  if (!log.rows.empty()) {
    poly("steelblue", false);
    poly("darkorange", true);
  }
  out << "<text x='" << ML + 10 << "' y='" << MT + 14
      << "' fill='steelblue' font-size='12'>test return (median)</text>\n";
  out << "<text x='" << ML + 10 << "' y='" << MT + 30
      << "' fill='darkorange' font-size='12'>episode length limit</text>\n";
  out << "<text x='" << (W / 2 - 20) << "' y='" << H - 8 << "' font-size='12'>step</text>\n";
  out << "</svg>\n";
}

}  // namespace marl
