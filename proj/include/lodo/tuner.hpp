#pragma once

// Genetic hyperparameter search in a rescaled space: ln x for learning
// rates, 1 - ln(1 - x) for decay parameters. Each generation mutates the
// running mean with scheduled Gaussian noise, evaluates every individual for
// the scheduled number of steps, and takes the mean of the better-performing
// half (by mean training loss over the last 10% of the run) as the next
// mean. Every individual gets its own derived seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lodo/optimizers.hpp"
#include "lodo/parallel.hpp"

namespace lodo {

enum class HyperKind { learning_rate, decay, plain };

struct HyperParamDef {
  std::string name;
  HyperKind kind = HyperKind::plain;
};

using HyperSpace = std::vector<HyperParamDef>;

// Tunable dimensions per optimizer family (eps and structural sizes stay
// fixed).
inline HyperSpace hyper_space_for(const std::string& optimizer) {
  using K = HyperKind;
  if (optimizer == "adam" || optimizer == "yogi")
    return {{"lr", K::learning_rate}, {"beta1", K::decay}, {"beta2", K::decay}};
  if (optimizer == "momentum")
    return {{"lr", K::learning_rate}, {"beta", K::decay}};
  if (optimizer == "rmsprop")
    return {{"lr", K::learning_rate}, {"rho", K::decay}, {"beta", K::decay}};
  if (optimizer == "lodo" || optimizer == "lodo_diagonal" ||
      optimizer == "lodo_global" || optimizer == "lodo_residuals")
    return {{"meta_lr", K::learning_rate}, {"beta", K::decay},
            {"alpha0", K::learning_rate}};
  throw std::invalid_argument("hyper_space_for: unknown optimizer " + optimizer);
}

inline double rescale_value(HyperKind kind, double raw) {
  switch (kind) {
    case HyperKind::learning_rate:
      if (!(raw > 0.0)) throw std::invalid_argument("rescale: learning rate must be > 0");
      return std::log(raw);
    case HyperKind::decay:
      if (!(raw >= 0.0 && raw < 1.0))
        throw std::invalid_argument("rescale: decay must be in [0,1)");
      return 1.0 - std::log(1.0 - raw);
    case HyperKind::plain:
      return raw;
  }
  throw std::logic_error("rescale: bad kind");
}

// Inverse map. Rescaled decays below 1 would land at negative raw values;
// those are clamped to 0 and reported through `clamped`.
inline double unrescale_value(HyperKind kind, double rescaled, bool* clamped = nullptr) {
  switch (kind) {
    case HyperKind::learning_rate:
      return std::exp(rescaled);
    case HyperKind::decay: {
      const double raw = 1.0 - std::exp(1.0 - rescaled);
      if (raw < 0.0) {
        if (clamped) *clamped = true;
        return 0.0;
      }
      return raw;
    }
    case HyperKind::plain:
      return rescaled;
  }
  throw std::logic_error("unrescale: bad kind");
}

inline Vector rescale(const HyperSpace& space, const Hyperparams& raw) {
  Vector v;
  v.reserve(space.size());
  for (const auto& def : space) v.push_back(rescale_value(def.kind, raw.at(def.name)));
  return v;
}

inline Hyperparams unrescale(const HyperSpace& space, const Vector& rescaled,
                             int* clamped_count = nullptr) {
  Hyperparams raw;
  for (std::size_t i = 0; i < space.size(); ++i) {
    bool clamped = false;
    raw[space[i].name] = unrescale_value(space[i].kind, rescaled[i], &clamped);
    if (clamped && clamped_count) ++*clamped_count;
  }
  return raw;
}

struct GenerationSetting {
  double noise_stddev = 0.0;
  long steps = 0;
};

using Schedule = std::vector<GenerationSetting>;

// Ten-generation schedules used for the two benchmark tasks.
inline Schedule bowl_schedule() {
  return {{3.0, 1000}, {3.0, 1000}, {3.0, 1000}, {3.0, 1000}, {2.0, 1500},
          {1.7, 1500}, {1.4, 2000}, {1.2, 3000}, {0.9, 5000}, {0.6, 8000}};
}

inline Schedule rosenbrock_schedule() {
  return {{3.0, 200}, {3.0, 200}, {3.0, 200}, {2.5, 200}, {2.0, 200},
          {1.5, 200}, {1.0, 200}, {0.75, 200}, {0.5, 200}, {0.3, 200}};
}

// Indices of the better half, lowest fitness first; ties break by index so
// the outcome depends only on the ordering of fitness values.
inline std::vector<std::size_t> select_survivors(const std::vector<double>& fitness) {
  std::vector<std::size_t> order(fitness.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fitness[a] < fitness[b];
  });
  order.resize(fitness.size() / 2 == 0 ? 1 : fitness.size() / 2);
  return order;
}

struct Genome {
  Vector rescaled;
  double fitness = 0.0;  // +inf when the run diverged
};

struct GenerationLog {
  int generation = 0;
  double noise_stddev = 0.0;
  double noise_scale = 1.0;  // halved after all-diverged generations
  long steps = 0;
  std::vector<double> fitnesses;
  bool all_diverged = false;
  Vector mean_rescaled;  // mean after this generation
  Hyperparams mean_raw;
  int clamped_decays = 0;
};

struct TuneResult {
  Hyperparams best;            // final mean, unrescaled
  Vector best_rescaled;
  std::vector<GenerationLog> lineage;
};

struct TuneOptions {
  int population = 32;
  std::uint64_t seed = 0;
  int threads = 1;
  Hyperparams start;  // initial mean; empty -> the family defaults
};

inline TuneResult tune(const std::string& optimizer, const TaskSpec& task,
                       const Schedule& schedule, const TuneOptions& opt) {
  if (schedule.empty()) throw std::invalid_argument("tune: empty schedule");
  if (opt.population < 2) throw std::invalid_argument("tune: population must be >= 2");

  const HyperSpace space = hyper_space_for(optimizer);
  const Hyperparams defaults = default_hyperparams(optimizer);
  Hyperparams base = defaults;  // carries fixed keys (eps, k, depth) through
  for (const auto& [key, value] : opt.start) base[key] = value;
  Vector mean = rescale(space, [&] {
    Hyperparams start;
    for (const auto& def : space) start[def.name] = base.at(def.name);
    return start;
  }());

  TuneResult result;
  double noise_scale = 1.0;

  for (std::size_t g = 0; g < schedule.size(); ++g) {
    const auto& setting = schedule[g];
    Rng mut(derive_seed(opt.seed, 0xabcd0000ull + g));
    std::vector<Genome> pop(static_cast<std::size_t>(opt.population));
    for (auto& genome : pop) {
      genome.rescaled = mean;
      for (auto& v : genome.rescaled)
        v += noise_scale * setting.noise_stddev * mut.normal();
    }

    std::vector<double> fitness(pop.size(), 0.0);
    parallel_for(pop.size(), opt.threads, [&](std::size_t i) {
      Hyperparams params = base;
      for (const auto& [key, value] : unrescale(space, pop[i].rescaled)) params[key] = value;
      RunOptions ro;
      ro.steps = setting.steps;
      ro.seed = derive_seed(derive_seed(opt.seed, g), i);
      const RunRecord rec = run(OptimizerSpec{optimizer, params}, task, ro);
      fitness[i] = rec.last_tenth_mean();
    });
    for (std::size_t i = 0; i < pop.size(); ++i) pop[i].fitness = fitness[i];

    GenerationLog log;
    log.generation = static_cast<int>(g);
    log.noise_stddev = setting.noise_stddev;
    log.noise_scale = noise_scale;
    log.steps = setting.steps;
    log.fitnesses = fitness;

    const bool all_diverged =
        std::all_of(fitness.begin(), fitness.end(),
                    [](double f) { return std::isinf(f); });
    log.all_diverged = all_diverged;
    if (all_diverged) {
      // keep the previous mean, shrink the mutation noise, move on
      noise_scale *= 0.5;
    } else {
      const auto survivors = select_survivors(fitness);
      Vector next(mean.size(), 0.0);
      for (std::size_t idx : survivors)
        for (std::size_t j = 0; j < next.size(); ++j)
          next[j] += pop[idx].rescaled[j];
      for (auto& v : next) v /= static_cast<double>(survivors.size());
      mean = std::move(next);
    }
    log.mean_rescaled = mean;
    log.mean_raw = unrescale(space, mean, &log.clamped_decays);
    result.lineage.push_back(std::move(log));
  }

  int clamped = 0;
  Hyperparams best = base;
  for (const auto& [key, value] : unrescale(space, mean, &clamped)) best[key] = value;
  result.best = std::move(best);
  result.best_rescaled = mean;
  return result;
}

}  // namespace lodo
