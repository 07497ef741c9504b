#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "marl/harness.hpp"
#include "marl/theory.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDiverged = 3;

marl::ExperimentConfig load_config(const std::string& path) {
  marl::Config raw = path.empty() ? marl::Config() : marl::Config::from_file(path);
  return marl::ExperimentConfig::from(raw);
}

int run_one(marl::ExperimentConfig cfg, std::uint64_t seed, const std::string& tag) {
  fs::create_directories(cfg.out_dir);
  marl::RunLog log = marl::run_training(cfg, seed);
  const std::string base = cfg.out_dir + "/" + tag + "_seed" + std::to_string(seed);
  marl::emit_csv(log, base + ".csv");
  marl::emit_plot(log, base + ".svg");
  std::ofstream(base + ".cfg") << log.config_text;
  if (log.diverged) {
    std::cerr << "training diverged (non-finite loss or gradient); partial log in " << base
              << ".csv\n";
    return kExitDiverged;
  }
  const marl::MetricRow& last = log.rows.back();
  std::cout << tag << " seed=" << seed << " final_test_return=" << last.test_return_median
            << " success_rate=" << last.success_rate << " e_l=" << last.e_l << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& out,
              const std::string& algo, const std::string& aela) {
  marl::ExperimentConfig cfg = load_config(config_path);
  if (!out.empty()) cfg.out_dir = out;
  if (!algo.empty()) {
    if (algo == "vdn") cfg.algo = marl::MixerKind::kVdn;
    else if (algo == "qmix") cfg.algo = marl::MixerKind::kQmix;
    else throw CLI::ValidationError("--algo must be vdn or qmix");
  }
  if (aela == "on") cfg.aela_enabled = true;
  else if (aela == "off") cfg.aela_enabled = false;
  cfg.validate();
  std::string tag = (cfg.algo == marl::MixerKind::kVdn ? "vdn" : "qmix");
  tag += cfg.aela_enabled ? "_adaptive" : "_fixed";
  return run_one(cfg, seed, tag);
}

int cmd_theory(std::uint64_t seed, const std::string& out) {
  auto rows = marl::theory::run_validation_suite(seed);
  std::ofstream csv;
  std::ostream* os = &std::cout;
  if (!out.empty()) {
    csv.open(out);
    if (!csv) throw std::runtime_error("cannot write " + out);
    os = &csv;
  }
  *os << "check,computed,bound,pass\n";
  bool all = true;
  for (const auto& r : rows) {
    *os << r.name << ',' << r.computed << ',' << r.bound << ',' << (r.pass ? 1 : 0) << "\n";
    all = all && r.pass;
  }
  if (!all) {
    std::cerr << "theory validation failed\n";
    return kExitValidation;
  }
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& out, int n_seeds,
              std::uint64_t seed0) {
  marl::ExperimentConfig base = load_config(config_path);
  base.out_dir = out.empty() ? base.out_dir : out;
  fs::create_directories(base.out_dir);
  std::ofstream agg(base.out_dir + "/sweep.csv");
  agg << "penalty,algo,seed,final_test_return,final_success_rate\n";
  int rc = kExitOk;
  for (double penalty : {-2.0, -4.0}) {
    for (marl::MixerKind algo : {marl::MixerKind::kVdn, marl::MixerKind::kQmix}) {
      for (int s = 0; s < n_seeds; ++s) {
        marl::ExperimentConfig cfg = base;
        cfg.mpp.penalty = penalty;
        cfg.algo = algo;
        const std::uint64_t seed = seed0 + static_cast<std::uint64_t>(s);
        std::string tag = std::string(algo == marl::MixerKind::kVdn ? "vdn" : "qmix") +
                          "_p" + std::to_string(static_cast<int>(-penalty));
        int r = run_one(cfg, seed, tag);
        if (r != kExitOk) rc = r;
        auto rows = marl::parse_csv(cfg.out_dir + "/" + tag + "_seed" + std::to_string(seed) +
                                    ".csv");
        const auto& last = rows.back();
        agg << penalty << ',' << (algo == marl::MixerKind::kVdn ? "vdn" : "qmix") << ',' << seed
            << ',' << last.test_return_median << ',' << last.success_rate << "\n";
      }
    }
  }
  return rc;
}

int cmd_check(std::uint64_t seed) {
  // gradient spot checks across the differentiable primitives, then a full
  // small-network check, reported like the theory suite
  marl::Rng rng(seed, marl::Rng::kOracle);
  bool all = true;
  auto report = [&](const std::string& name, double err, double bound) {
    const bool ok = err <= bound;
    all = all && ok;
    std::printf("%-32s %12.3e  <= %8.0e  %s\n", name.c_str(), err, bound, ok ? "pass" : "FAIL");
  };

  using marl::ad::Mat;
  marl::ad::Param a, b;
  a.v = Mat::NullaryExpr(4, 5, [&] { return rng.uniform(-1, 1); });
  b.v = Mat::NullaryExpr(5, 3, [&] { return rng.uniform(-1, 1); });
  namespace ad = marl::ad;
  double err = ad::grad_check(
      [&](ad::Tape& t) {
        auto va = t.param(a), vb = t.param(b);
        return ad::sum(t, ad::relu(t, ad::matmul(t, va, vb)));
      },
      {&a, &b});
  report("matmul+relu", err, 1e-4);

  marl::ad::Param w;
  w.v = Mat::NullaryExpr(3, 3, [&] { return rng.uniform(-1, 1); });
  err = ad::grad_check(
      [&](ad::Tape& t) {
        auto vw = t.param(w);
        return ad::sum(t, ad::softmax(t, ad::tanh_op(t, vw), 1));
      },
      {&w});
  report("tanh+softmax", err, 1e-4);

  marl::ad::Param gx, gu;
  gx.v = Mat::NullaryExpr(2, 12, [&] { return rng.uniform(-1, 1); });
  gu.v = Mat::NullaryExpr(4, 12, [&] { return rng.uniform(-1, 1); });
  Mat h0 = Mat::NullaryExpr(2, 4, [&] { return rng.uniform(-1, 1); });
  err = ad::grad_check(
      [&](ad::Tape& t) {
        auto g = t.param(gx);
        auto u = t.param(gu);
        auto h = t.leaf(h0, true);
        return ad::sum(t, ad::gru_step(t, g, h, u));
      },
      {&gx, &gu});
  report("gru_step", err, 1e-4);

  if (!all) return kExitValidation;
  std::printf("all checks pass\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"value-decomposition MARL trainer with adaptive episode lengths"};
  app.require_subcommand(1);

  std::string config_path, out, algo, aela = "auto";
  std::uint64_t seed = 1;
  int n_seeds = 3;

  auto* train = app.add_subcommand("train", "train one run and write csv/svg logs");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--seed", seed, "rng seed");
  train->add_option("--out", out, "output directory override");
  train->add_option("--algo", algo, "vdn | qmix");
  train->add_option("--aela", aela, "on | off | auto (config value)");

  auto* theory = app.add_subcommand("theory", "run the analytical validation suite");
  theory->add_option("--seed", seed, "rng seed");
  theory->add_option("--out", out, "csv output path (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "penalty x algorithm x seed grid on the grid task");
  sweep->add_option("--config", config_path, "base config file");
  sweep->add_option("--out", out, "output directory");
  sweep->add_option("--seeds", n_seeds, "seeds per cell");
  sweep->add_option("--seed0", seed, "first seed");

  auto* check = app.add_subcommand("check", "gradient and invariant spot checks");
  check->add_option("--seed", seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, seed, out, algo, aela);
    if (theory->parsed()) return cmd_theory(seed, out);
    if (sweep->parsed()) return cmd_sweep(config_path, out, n_seeds, seed);
    if (check->parsed()) return cmd_check(seed);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
