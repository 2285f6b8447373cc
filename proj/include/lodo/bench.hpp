#pragma once

// Experiment harness: builds (task, optimizer, seed) grids from a config,
// runs them over a worker pool, and writes per-run loss curves (CSV) plus an
// aggregate summary (JSON). Curve files contain only reproducible columns,
// so a rerun with the same seeds is byte-identical; timing lives in the
// summary.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lodo/optimizers.hpp"
#include "lodo/parallel.hpp"
#include "lodo/tuner.hpp"

namespace lodo {

struct ExperimentConfig {
  TaskSpec task;
  std::vector<OptimizerSpec> optimizers;
  long steps = 100000;
  int seeds = 8;
  std::uint64_t master_seed = 1;
  std::string out_dir = "results";
  int sigma_every = 1000;   // 0 disables sigma diagnostics
  int sigma_probes = 100;

  void validate() const {
    if (task.kind != "bowl" && task.kind != "rosenbrock")
      throw std::runtime_error("config: unknown task kind '" + task.kind + "'");
    if (optimizers.empty()) throw std::runtime_error("config: no optimizers given");
    for (const auto& o : optimizers) default_hyperparams(o.name);  // throws on unknown
    if (steps < 1) throw std::runtime_error("config: steps must be >= 1");
    if (seeds < 1) throw std::runtime_error("config: seeds must be >= 1");
    if (sigma_every < 0 || sigma_probes < 1)
      throw std::runtime_error("config: bad sigma diagnostics settings");
  }

  // Canonical key=value form, echoed into every output file.
  std::string echo_text() const {
    std::ostringstream os;
    os << "[task]\n";
    os << "kind = " << task.kind << '\n';
    if (task.kind == "bowl") {
      os << "dim = " << task.dim << '\n';
      os << "spectrum_min = " << task.spectrum_min << '\n';
      os << "spectrum_max = " << task.spectrum_max << '\n';
      os << "hessian_seed = " << task.hessian_seed << '\n';
    }
    os << "[run]\n";
    os << "steps = " << steps << '\n';
    os << "seeds = " << seeds << '\n';
    os << "master_seed = " << master_seed << '\n';
    os << "sigma_every = " << sigma_every << '\n';
    os << "sigma_probes = " << sigma_probes << '\n';
    // out_dir is deliberately not echoed: it does not affect the results and
    // would make relocated reruns compare unequal.
    for (const auto& o : optimizers) {
      os << "[optimizer]\n";
      os << "name = " << o.name << '\n';
      for (const auto& [key, value] : o.params) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.17g", value);
        os << key << " = " << buf << '\n';
      }
    }
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Plain-text config files: [section] headers, key = value lines, '#'
// comments. Sections: [task], [run], and one [optimizer] per optimizer;
// an optimizer's `preset = bowl|rosenbrock` loads the tuned values before
// applying explicit keys.

inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  cfg.optimizers.clear();
  std::string line, section;
  OptimizerSpec* current_opt = nullptr;
  int lineno = 0;

  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };

  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("config line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      if (section == "optimizer") {
        cfg.optimizers.emplace_back();
        current_opt = &cfg.optimizers.back();
      } else if (section != "task" && section != "run") {
        throw std::runtime_error("config line " + std::to_string(lineno) +
                                 ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key or value");

    auto as_double = [&] { return std::stod(value); };
    auto as_long = [&] { return std::stol(value); };
    auto as_u64 = [&] { return static_cast<std::uint64_t>(std::stoull(value)); };

    if (section == "task") {
      if (key == "kind") cfg.task.kind = value;
      else if (key == "dim") cfg.task.dim = static_cast<int>(as_long());
      else if (key == "spectrum_min") cfg.task.spectrum_min = as_double();
      else if (key == "spectrum_max") cfg.task.spectrum_max = as_double();
      else if (key == "hessian_seed") cfg.task.hessian_seed = as_u64();
      else throw std::runtime_error("config: unknown task key '" + key + "'");
    } else if (section == "run") {
      if (key == "steps") cfg.steps = as_long();
      else if (key == "seeds") cfg.seeds = static_cast<int>(as_long());
      else if (key == "master_seed") cfg.master_seed = as_u64();
      else if (key == "sigma_every") cfg.sigma_every = static_cast<int>(as_long());
      else if (key == "sigma_probes") cfg.sigma_probes = static_cast<int>(as_long());
      else if (key == "out_dir") cfg.out_dir = value;
      else throw std::runtime_error("config: unknown run key '" + key + "'");
    } else if (section == "optimizer") {
      if (!current_opt)
        throw std::runtime_error("config line " + std::to_string(lineno) +
                                 ": key outside a section");
      if (key == "name") current_opt->name = value;
      else if (key == "preset") {
        if (current_opt->name.empty())
          throw std::runtime_error("config: preset must follow the optimizer name");
        current_opt->params = preset_hyperparams(value, current_opt->name);
      } else current_opt->params[key] = as_double();
    } else {
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": key outside a section");
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  return parse_config(is);
}

// ---------------------------------------------------------------------------

struct SummaryRow {
  std::string optimizer;
  int runs = 0;
  int diverged_runs = 0;
  // across-run statistics of per-run last-tenth means (surviving runs only)
  double mean_last_tenth = std::numeric_limits<double>::infinity();
  double std_last_tenth = 0.0;
  double steps_per_sec = 0.0;
};

inline SummaryRow summarize(const std::string& name,
                            const std::vector<const RunRecord*>& runs) {
  SummaryRow row;
  row.optimizer = name;
  row.runs = static_cast<int>(runs.size());
  std::vector<double> means;
  double sps = 0.0;
  for (const RunRecord* r : runs) {
    if (r->diverged_at >= 0) {
      ++row.diverged_runs;
      continue;
    }
    means.push_back(r->last_tenth_mean());
    sps += r->steps_per_sec;
  }
  if (!means.empty()) {
    double m = 0.0;
    for (double x : means) m += x;
    m /= static_cast<double>(means.size());
    double var = 0.0;
    for (double x : means) var += (x - m) * (x - m);
    row.mean_last_tenth = m;
    row.std_last_tenth =
        means.size() > 1 ? std::sqrt(var / static_cast<double>(means.size() - 1)) : 0.0;
    row.steps_per_sec = sps / static_cast<double>(means.size());
  }
  return row;
}

// Runs the optimizer x seed grid in memory. Run seeds depend only on
// (master_seed, seed index), so every optimizer faces the same task noise
// stream at a given seed index.
inline std::vector<RunRecord> run_grid(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  const std::size_t jobs = cfg.optimizers.size() * static_cast<std::size_t>(cfg.seeds);
  std::vector<RunRecord> records(jobs);
  parallel_for(jobs, threads, [&](std::size_t j) {
    const std::size_t oi = j / static_cast<std::size_t>(cfg.seeds);
    const int si = static_cast<int>(j % static_cast<std::size_t>(cfg.seeds));
    RunOptions ro;
    ro.steps = cfg.steps;
    ro.seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(si));
    ro.sigma_every = cfg.sigma_every;
    ro.sigma_probes = cfg.sigma_probes;
    records[j] = run(cfg.optimizers[oi], cfg.task, ro);
  });
  return records;
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg,
                                   const std::vector<RunRecord>& records) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t oi = 0; oi < cfg.optimizers.size(); ++oi) {
    std::vector<const RunRecord*> runs;
    for (int si = 0; si < cfg.seeds; ++si)
      runs.push_back(&records[oi * static_cast<std::size_t>(cfg.seeds) +
                              static_cast<std::size_t>(si)]);
    const SummaryRow row = summarize(cfg.optimizers[oi].name, runs);
    nlohmann::json jr;
    jr["optimizer"] = row.optimizer;
    jr["runs"] = row.runs;
    jr["diverged_runs"] = row.diverged_runs;
    if (std::isfinite(row.mean_last_tenth)) {
      jr["mean_last_tenth"] = row.mean_last_tenth;
      jr["std_last_tenth"] = row.std_last_tenth;
    } else {
      jr["mean_last_tenth"] = nullptr;
      jr["std_last_tenth"] = nullptr;
    }
    jr["steps_per_sec"] = row.steps_per_sec;
    rows.push_back(jr);
  }
  nlohmann::json out;
  out["schema_version"] = 1;
  out["config"] = cfg.echo_text();
  out["rows"] = rows;
  return out;
}

// Runs the grid and writes <out>/curves/<name>_s<i>.csv plus <out>/summary.json.
// Returns the records. IO failures throw.
inline std::vector<RunRecord> run_suite(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "curves");

  std::vector<RunRecord> records = run_grid(cfg, threads);
  const std::string echo = cfg.echo_text();
  for (std::size_t oi = 0; oi < cfg.optimizers.size(); ++oi)
    for (int si = 0; si < cfg.seeds; ++si) {
      const auto& rec = records[oi * static_cast<std::size_t>(cfg.seeds) +
                                static_cast<std::size_t>(si)];
      const fs::path path =
          out / "curves" / (cfg.optimizers[oi].name + "_s" + std::to_string(si) + ".csv");
      std::ofstream os(path);
      if (!os) throw std::runtime_error("cannot write " + path.string());
      rec.write_csv(os, /*include_wall=*/false, echo);
      if (!os) throw std::runtime_error("write failed: " + path.string());
    }

  std::ofstream js(out / "summary.json");
  if (!js) throw std::runtime_error("cannot write summary.json");
  js << summary_json(cfg, records).dump(2) << '\n';
  if (!js) throw std::runtime_error("write failed: summary.json");
  return records;
}

// ---------------------------------------------------------------------------

// Non-overlapping block means; a trailing partial block is averaged over its
// actual length.
inline std::vector<double> smooth_curve(const std::vector<double>& losses, int block = 200) {
  if (block < 1) throw std::invalid_argument("smooth_curve: block must be >= 1");
  std::vector<double> out;
  std::size_t i = 0;
  while (i < losses.size()) {
    const std::size_t end = std::min(losses.size(), i + static_cast<std::size_t>(block));
    double s = 0.0;
    for (std::size_t j = i; j < end; ++j) s += losses[j];
    out.push_back(s / static_cast<double>(end - i));
    i = end;
  }
  return out;
}

// Momentum grid: count points log-spaced in (1 - beta) from beta = 0 down to
// beta_max.
inline std::vector<double> momentum_beta_grid(int count, double beta_max) {
  if (count < 2) throw std::invalid_argument("momentum grid: need at least 2 points");
  if (!(beta_max > 0.0 && beta_max < 1.0))
    throw std::invalid_argument("momentum grid: beta_max must be in (0,1)");
  std::vector<double> betas;
  betas.reserve(static_cast<std::size_t>(count));
  const double lg = std::log(1.0 - beta_max);
  for (int j = 0; j < count; ++j)
    betas.push_back(1.0 - std::exp(lg * static_cast<double>(j) / (count - 1)));
  betas.front() = 0.0;
  return betas;
}

struct SweepPoint {
  double beta = 0.0;
  double last_tenth_loss = 0.0;
  bool diverged = false;
};

// One learned-optimizer run per momentum value; every other hyperparameter
// comes from `base`. Duplicate betas are a config error.
inline std::vector<SweepPoint> momentum_sweep(const OptimizerSpec& base,
                                              const TaskSpec& task,
                                              const std::vector<double>& betas,
                                              long steps, std::uint64_t master_seed,
                                              int threads) {
  if (betas.empty()) throw std::runtime_error("momentum sweep: empty beta grid");
  std::set<double> uniq(betas.begin(), betas.end());
  if (uniq.size() != betas.size())
    throw std::runtime_error("momentum sweep: duplicate beta values");
  for (double b : betas)
    if (!(b >= 0.0 && b < 1.0))
      throw std::runtime_error("momentum sweep: beta out of [0,1)");

  std::vector<SweepPoint> points(betas.size());
  parallel_for(betas.size(), threads, [&](std::size_t i) {
    OptimizerSpec spec = base;
    spec.params["beta"] = betas[i];
    RunOptions ro;
    ro.steps = steps;
    ro.seed = derive_seed(master_seed, static_cast<std::uint64_t>(i));
    const RunRecord rec = run(spec, task, ro);
    points[i] = {betas[i], rec.last_tenth_mean(), rec.diverged_at >= 0};
  });
  return points;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& points,
                            const std::string& comment_header = "") {
  if (!comment_header.empty()) {
    std::istringstream is(comment_header);
    std::string line;
    while (std::getline(is, line)) os << "# " << line << '\n';
  }
  os << "beta,last_tenth_loss,diverged\n";
  char buf[48];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.beta);
    os << buf << ',';
    if (p.diverged) {
      os << ",1\n";
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g", p.last_tenth_loss);
      os << buf << ",0\n";
    }
  }
}

// Tuner lineage as JSON (per-generation means and fitnesses). Non-finite
// fitnesses (diverged individuals) are written as nulls.
inline nlohmann::json lineage_json(const TuneResult& result) {
  nlohmann::json gens = nlohmann::json::array();
  for (const auto& log : result.lineage) {
    nlohmann::json jg;
    jg["generation"] = log.generation;
    jg["noise_stddev"] = log.noise_stddev;
    jg["noise_scale"] = log.noise_scale;
    jg["steps"] = log.steps;
    jg["all_diverged"] = log.all_diverged;
    jg["clamped_decays"] = log.clamped_decays;
    nlohmann::json fits = nlohmann::json::array();
    for (double f : log.fitnesses)
      fits.push_back(std::isfinite(f) ? nlohmann::json(f) : nlohmann::json(nullptr));
    jg["fitnesses"] = fits;
    jg["mean_raw"] = log.mean_raw;
    gens.push_back(jg);
  }
  nlohmann::json out;
  out["schema_version"] = 1;
  out["generations"] = gens;
  out["best"] = result.best;
  return out;
}

}  // namespace lodo
