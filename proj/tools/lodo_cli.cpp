// Command-line benchmark harness. Subcommands:
//   bench bowl | bench rosenbrock   optimizer suites with per-run CSV curves
//   bench sweep                     momentum sweep of the learned optimizer
//   theory dynamics                 dense-preconditioner error recurrence
//   theory entropy                  permutation entropy-deficit estimates
//   tune                            genetic hyperparameter search
// The master seed can be overridden with the LODO_MASTER_SEED env var.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lodo/bench.hpp"
#include "lodo/theory.hpp"
#include "lodo/tuner.hpp"

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void print_summary(const lodo::ExperimentConfig& cfg,
                   const std::vector<lodo::RunRecord>& records) {
  std::printf("%-16s %12s %12s %10s %9s\n", "optimizer", "last10% mean", "stddev",
              "steps/s", "diverged");
  for (std::size_t oi = 0; oi < cfg.optimizers.size(); ++oi) {
    std::vector<const lodo::RunRecord*> runs;
    for (int si = 0; si < cfg.seeds; ++si)
      runs.push_back(&records[oi * static_cast<std::size_t>(cfg.seeds) +
                              static_cast<std::size_t>(si)]);
    const lodo::SummaryRow row = lodo::summarize(cfg.optimizers[oi].name, runs);
    if (row.diverged_runs == row.runs)
      std::printf("%-16s %12s %12s %10s %6d/%d\n", row.optimizer.c_str(), "diverged",
                  "-", "-", row.diverged_runs, row.runs);
    else
      std::printf("%-16s %12.4f %12.4f %10.1f %6d/%d\n", row.optimizer.c_str(),
                  row.mean_last_tenth, row.std_last_tenth, row.steps_per_sec,
                  row.diverged_runs, row.runs);
  }
}

struct BenchFlags {
  std::string config_path;
  std::string out_dir;
  std::string optimizers;
  long steps = -1;
  int seeds = -1;
  std::uint64_t master_seed = 0;
  bool master_seed_set = false;
  int sigma_every = -1;
  int sigma_probes = -1;
  bool use_defaults = false;
  int threads = lodo::hardware_threads();
};

void add_bench_flags(CLI::App* cmd, BenchFlags& f) {
  cmd->add_option("--config", f.config_path, "config file ([task]/[run]/[optimizer] sections)");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--optimizers", f.optimizers, "comma-separated optimizer names");
  cmd->add_option("--steps", f.steps, "steps per run");
  cmd->add_option("--seeds", f.seeds, "number of seeds per optimizer");
  cmd->add_option("--master-seed", f.master_seed, "master seed for the run grid")
      ->envname("LODO_MASTER_SEED")
      ->each([&](const std::string&) { f.master_seed_set = true; });
  cmd->add_option("--sigma-every", f.sigma_every, "steps between sigma estimates (0 = off)");
  cmd->add_option("--sigma-probes", f.sigma_probes, "probes per sigma estimate");
  cmd->add_flag("--defaults", f.use_defaults, "use default instead of tuned hyperparameters");
  cmd->add_option("--threads", f.threads, "worker threads");
}

lodo::ExperimentConfig build_config(const BenchFlags& f, const std::string& task_kind) {
  lodo::ExperimentConfig cfg;
  if (!f.config_path.empty()) {
    cfg = lodo::load_config(f.config_path);
  } else {
    cfg.task.kind = task_kind;
    cfg.steps = task_kind == "rosenbrock" ? 200 : 100000;
    cfg.out_dir = "results_" + task_kind;
    const char* names[] = {"lodo", "adam", "momentum", "rmsprop", "yogi"};
    for (const char* n : names)
      cfg.optimizers.push_back(
          {n, f.use_defaults ? lodo::default_hyperparams(n)
                             : lodo::preset_hyperparams(task_kind, n)});
  }
  if (!f.optimizers.empty()) {
    cfg.optimizers.clear();
    for (const auto& n : split_list(f.optimizers))
      cfg.optimizers.push_back(
          {n, f.use_defaults ? lodo::default_hyperparams(n)
                             : lodo::preset_hyperparams(cfg.task.kind, n)});
  }
  if (f.steps >= 0) cfg.steps = f.steps;
  if (f.seeds >= 0) cfg.seeds = f.seeds;
  if (f.master_seed_set) cfg.master_seed = f.master_seed;
  if (f.sigma_every >= 0) cfg.sigma_every = f.sigma_every;
  if (f.sigma_probes >= 0) cfg.sigma_probes = f.sigma_probes;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learned quasi-Newton optimizer benchmark harness"};
  app.require_subcommand(1);

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "run optimizer suites");
  bench->require_subcommand(1);

  BenchFlags bowl_flags, rosen_flags;
  auto* bowl = bench->add_subcommand("bowl", "noisy quadratic bowl suite");
  add_bench_flags(bowl, bowl_flags);
  auto* rosen = bench->add_subcommand("rosenbrock", "rescaled Rosenbrock suite");
  add_bench_flags(rosen, rosen_flags);

  BenchFlags sweep_flags;
  int sweep_count = 8;
  double sweep_beta_max = 0.9343;
  std::string sweep_betas;
  auto* sweep = bench->add_subcommand("sweep", "momentum decay sweep (one run per beta)");
  add_bench_flags(sweep, sweep_flags);
  sweep->add_option("--count", sweep_count, "number of grid points");
  sweep->add_option("--beta-max", sweep_beta_max, "largest momentum decay in the grid");
  sweep->add_option("--betas", sweep_betas, "explicit comma-separated beta values");

  // ---- theory ----
  auto* theory = app.add_subcommand("theory", "numerical checks of the analysis");
  theory->require_subcommand(1);

  int dyn_n = 5, dyn_seeds = 5;
  long dyn_steps = 50000;
  double dyn_alpha = 1e-4, dyn_dmin = 0.2, dyn_dmax = 1.0, dyn_a0 = 0.5;
  std::uint64_t dyn_seed = 1;
  std::string dyn_out = "results_dynamics";
  auto* dynamics = theory->add_subcommand("dynamics", "error-recurrence trace");
  dynamics->add_option("--n", dyn_n, "dimension");
  dynamics->add_option("--steps", dyn_steps, "steps");
  dynamics->add_option("--alpha", dyn_alpha, "meta learning rate");
  dynamics->add_option("--dmin", dyn_dmin, "smallest Hessian eigenvalue");
  dynamics->add_option("--dmax", dyn_dmax, "largest Hessian eigenvalue");
  dynamics->add_option("--a0", dyn_a0, "initial A = a0 * I (|a0| < 1)");
  dynamics->add_option("--seed", dyn_seed, "base seed");
  dynamics->add_option("--seeds", dyn_seeds, "number of independent traces");
  dynamics->add_option("--out", dyn_out, "output directory");

  int ent_n = 4;
  long ent_trials = 200;
  std::uint64_t ent_seed = 1;
  std::string ent_mlist = "1,2,4,8,16";
  std::string ent_out = "entropy.csv";
  auto* entropy = theory->add_subcommand("entropy", "permutation entropy deficit");
  entropy->add_option("--n-tilde", ent_n, "permutation size (even, <= 6)");
  entropy->add_option("--m-list", ent_mlist, "comma-separated block counts");
  entropy->add_option("--trials", ent_trials, "Monte-Carlo trials per point");
  entropy->add_option("--seed", ent_seed, "seed");
  entropy->add_option("--out", ent_out, "output CSV path");

  // ---- tune ----
  std::string tune_optimizer = "adam", tune_task = "bowl", tune_schedule = "bowl";
  std::string tune_out = "lineage.json";
  int tune_pop = 32, tune_threads = lodo::hardware_threads();
  std::uint64_t tune_seed = 1;
  auto* tune_cmd = app.add_subcommand("tune", "genetic hyperparameter search");
  tune_cmd->add_option("--optimizer", tune_optimizer, "optimizer family to tune");
  tune_cmd->add_option("--task", tune_task, "bowl | rosenbrock");
  tune_cmd->add_option("--schedule", tune_schedule,
                       "bowl | rosenbrock | path to file with 'noise steps' lines");
  tune_cmd->add_option("--population", tune_pop, "individuals per generation");
  tune_cmd->add_option("--seed", tune_seed, "tuner seed")->envname("LODO_MASTER_SEED");
  tune_cmd->add_option("--threads", tune_threads, "worker threads");
  tune_cmd->add_option("--out", tune_out, "lineage JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (bowl->parsed() || rosen->parsed()) {
      const BenchFlags& f = bowl->parsed() ? bowl_flags : rosen_flags;
      lodo::ExperimentConfig cfg =
          build_config(f, bowl->parsed() ? "bowl" : "rosenbrock");
      cfg.validate();
      const auto records = lodo::run_suite(cfg, f.threads);
      print_summary(cfg, records);
      std::printf("wrote %s\n", cfg.out_dir.c_str());
    } else if (sweep->parsed()) {
      lodo::ExperimentConfig cfg = build_config(sweep_flags, "bowl");
      std::vector<double> betas;
      if (!sweep_betas.empty())
        for (const auto& tok : split_list(sweep_betas)) betas.push_back(std::stod(tok));
      else
        betas = lodo::momentum_beta_grid(sweep_count, sweep_beta_max);
      lodo::OptimizerSpec base{"lodo", lodo::preset_hyperparams(cfg.task.kind, "lodo")};
      if (!cfg.optimizers.empty()) base = cfg.optimizers.front();
      const auto points = lodo::momentum_sweep(base, cfg.task, betas, cfg.steps,
                                               cfg.master_seed, sweep_flags.threads);
      std::filesystem::create_directories(cfg.out_dir);
      const auto path = std::filesystem::path(cfg.out_dir) / "momentum_sweep.csv";
      std::ofstream os(path);
      if (!os) throw std::runtime_error("cannot write " + path.string());
      lodo::write_sweep_csv(os, points, cfg.echo_text());
      for (const auto& p : points)
        std::printf("beta=%.6f  last10%%=%s\n", p.beta,
                    p.diverged ? "diverged" : std::to_string(p.last_tenth_loss).c_str());
      std::printf("wrote %s\n", path.string().c_str());
    } else if (dynamics->parsed()) {
      std::filesystem::create_directories(dyn_out);
      for (int s = 0; s < dyn_seeds; ++s) {
        const auto h = lodo::random_spd(dyn_n, dyn_dmin, dyn_dmax,
                                        lodo::derive_seed(dyn_seed, 0));
        lodo::DynamicsOptions opt;
        opt.alpha = dyn_alpha;
        opt.steps = dyn_steps;
        opt.seed = lodo::derive_seed(dyn_seed, static_cast<std::uint64_t>(s) + 1);
        opt.a0 = lodo::Matrix::scaled_identity(dyn_n, dyn_a0);
        const auto trace = lodo::simulate_dense_dynamics(h, opt);
        const auto path = std::filesystem::path(dyn_out) /
                          ("dynamics_s" + std::to_string(s) + ".csv");
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot write " + path.string());
        os << "t,frob_a,frob_b_dinv,loss\n";
        char buf[160];
        for (std::size_t t = 0; t < trace.rows.size(); ++t) {
          std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", t,
                        trace.rows[t].frob_a, trace.rows[t].frob_b_dinv,
                        trace.rows[t].loss);
          os << buf;
        }
      }
      std::printf("wrote %s\n", dyn_out.c_str());
    } else if (entropy->parsed()) {
      std::ofstream os(ent_out);
      if (!os) throw std::runtime_error("cannot write " + ent_out);
      os << "m_blocks,epsilon_hat,std_err\n";
      for (const auto& tok : split_list(ent_mlist)) {
        const int m = std::stoi(tok);
        const auto est = lodo::estimate_permutation_entropy(ent_n, m, ent_trials, ent_seed);
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", m, est.epsilon_hat,
                      est.std_err);
        os << buf;
        std::printf("M=%-3d  eps=%.6f  se=%.6f\n", m, est.epsilon_hat, est.std_err);
      }
      std::printf("wrote %s\n", ent_out.c_str());
    } else if (tune_cmd->parsed()) {
      lodo::Schedule schedule;
      if (tune_schedule == "bowl") schedule = lodo::bowl_schedule();
      else if (tune_schedule == "rosenbrock") schedule = lodo::rosenbrock_schedule();
      else {
        std::ifstream is(tune_schedule);
        if (!is) throw std::runtime_error("cannot open schedule file: " + tune_schedule);
        double noise;
        long steps;
        while (is >> noise >> steps) schedule.push_back({noise, steps});
        if (schedule.empty()) throw std::runtime_error("empty schedule file");
      }
      lodo::TaskSpec task;
      task.kind = tune_task;
      lodo::TuneOptions opt;
      opt.population = tune_pop;
      opt.seed = tune_seed;
      opt.threads = tune_threads;
      const auto result = lodo::tune(tune_optimizer, task, schedule, opt);
      std::ofstream os(tune_out);
      if (!os) throw std::runtime_error("cannot write " + tune_out);
      os << lodo::lineage_json(result).dump(2) << '\n';
      std::printf("tuned %s on %s:\n", tune_optimizer.c_str(), tune_task.c_str());
      for (const auto& [key, value] : result.best)
        std::printf("  %s = %.6g\n", key.c_str(), value);
      std::printf("wrote %s\n", tune_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
