#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lodo/bench.hpp"

using namespace lodo;
namespace fs = std::filesystem;

namespace {

struct CsvCurve {
  std::vector<double> losses;
  std::vector<std::pair<long, double>> sigma;
};

CsvCurve read_curve(const fs::path& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  CsvCurve curve;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      REQUIRE(line == "step,loss,sigma");
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string step_s, loss_s, sigma_s;
    std::getline(ss, step_s, ',');
    std::getline(ss, loss_s, ',');
    std::getline(ss, sigma_s, ',');
    curve.losses.push_back(std::stod(loss_s));
    if (!sigma_s.empty())
      curve.sigma.emplace_back(std::stol(step_s), std::stod(sigma_s));
  }
  return curve;
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig small_config(const std::string& out) {
  ExperimentConfig cfg;
  cfg.task.kind = "bowl";
  cfg.optimizers = {{"lodo", preset_hyperparams("bowl", "lodo")},
                    {"adam", preset_hyperparams("bowl", "adam")}};
  cfg.steps = 400;
  cfg.seeds = 2;
  cfg.master_seed = 2024;
  cfg.sigma_every = 100;
  cfg.sigma_probes = 20;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("smooth_curve block means") {
  CHECK(smooth_curve({}, 200).empty());
  CHECK_THROWS_AS(smooth_curve({1.0}, 0), std::invalid_argument);

  const std::vector<double> constant(350, 4.25);
  for (double v : smooth_curve(constant, 200)) CHECK(v == 4.25);

  std::vector<double> ramp(400);
  for (int i = 0; i < 400; ++i) ramp[static_cast<std::size_t>(i)] = i + 1;
  const auto smoothed = smooth_curve(ramp, 200);
  REQUIRE(smoothed.size() == 2);
  CHECK(smoothed[0] == 100.5);
  CHECK(smoothed[1] == 300.5);

  ramp.resize(450);
  for (int i = 400; i < 450; ++i) ramp[static_cast<std::size_t>(i)] = i + 1;
  const auto tail = smooth_curve(ramp, 200);
  REQUIRE(tail.size() == 3);
  CHECK(tail[2] == (401.0 + 450.0) / 2.0);  // partial block, actual length 50
}

TEST_CASE("momentum beta grid") {
  const auto betas = momentum_beta_grid(8, 0.9343);
  REQUIRE(betas.size() == 8);
  CHECK(betas.front() == 0.0);  // no-momentum endpoint
  CHECK(betas.back() == Catch::Approx(0.9343).epsilon(1e-12));
  for (std::size_t i = 1; i < betas.size(); ++i) CHECK(betas[i] > betas[i - 1]);
  // log spacing in 1 - beta
  for (std::size_t i = 2; i < betas.size(); ++i) {
    const double r1 = (1.0 - betas[i]) / (1.0 - betas[i - 1]);
    const double r0 = (1.0 - betas[i - 1]) / (1.0 - betas[i - 2]);
    CHECK(r1 == Catch::Approx(r0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(momentum_beta_grid(1, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(momentum_beta_grid(8, 1.0), std::invalid_argument);
}

TEST_CASE("momentum sweep validates the grid and runs one job per beta") {
  const TaskSpec task;
  OptimizerSpec base{"lodo", preset_hyperparams("bowl", "lodo")};
  CHECK_THROWS_AS(momentum_sweep(base, task, {0.1, 0.1}, 50, 1, 1), std::runtime_error);
  CHECK_THROWS_AS(momentum_sweep(base, task, {}, 50, 1, 1), std::runtime_error);
  CHECK_THROWS_AS(momentum_sweep(base, task, {1.5}, 50, 1, 1), std::runtime_error);

  const auto points = momentum_sweep(base, task, {0.0, 0.5}, 60, 1, 2);
  REQUIRE(points.size() == 2);
  CHECK(points[0].beta == 0.0);
  CHECK(points[1].beta == 0.5);
  for (const auto& p : points) {
    CHECK(!p.diverged);
    CHECK(std::isfinite(p.last_tenth_loss));
  }
  std::ostringstream os;
  write_sweep_csv(os, points, "grid = test");
  CHECK(os.str().rfind("# grid = test\nbeta,last_tenth_loss,diverged\n", 0) == 0);
}

TEST_CASE("config files parse, validate, and echo canonically") {
  const std::string text = R"(# benchmark config
[task]
kind = bowl
dim = 100
spectrum_min = 0.001
spectrum_max = 1.0
hessian_seed = 7

[run]
steps = 500
seeds = 3
master_seed = 99
sigma_every = 0
out_dir = out_test

[optimizer]
name = lodo
preset = bowl
meta_lr = 0.005   # override one tuned value

[optimizer]
name = adam
lr = 0.9
)";
  std::istringstream is(text);
  const ExperimentConfig cfg = parse_config(is);
  cfg.validate();
  CHECK(cfg.task.hessian_seed == 7);
  CHECK(cfg.steps == 500);
  CHECK(cfg.seeds == 3);
  CHECK(cfg.master_seed == 99);
  CHECK(cfg.out_dir == "out_test");
  REQUIRE(cfg.optimizers.size() == 2);
  CHECK(cfg.optimizers[0].name == "lodo");
  CHECK(cfg.optimizers[0].params.at("meta_lr") == 0.005);
  CHECK(cfg.optimizers[0].params.at("alpha0") == 0.270);  // from the preset
  CHECK(cfg.optimizers[1].params.at("lr") == 0.9);

  // the canonical echo parses back to the same configuration
  std::istringstream echo(cfg.echo_text());
  const ExperimentConfig again = parse_config(echo);
  CHECK(again.echo_text() == cfg.echo_text());

  std::istringstream bad1("[task]\nkind = maze\n[optimizer]\nname = adam\n");
  CHECK_THROWS(parse_config(bad1).validate());
  std::istringstream bad2("[task]\nwhat = 3\n");
  CHECK_THROWS(parse_config(bad2));
  std::istringstream bad3("key = 1\n");
  CHECK_THROWS(parse_config(bad3));

  // empty optimizer list fails validation before any run starts
  ExperimentConfig none;
  none.optimizers.clear();
  CHECK_THROWS(none.validate());
}

TEST_CASE("suite outputs: summary statistics recompute from the CSVs") {
  const fs::path out = fs::temp_directory_path() / "lodo_bench_test_a";
  fs::remove_all(out);
  ExperimentConfig cfg = small_config(out.string());
  const auto records = run_suite(cfg, 2);
  REQUIRE(records.size() == 4);

  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(summary.at("schema_version") == 1);
  REQUIRE(summary.at("rows").size() == 2);

  for (std::size_t oi = 0; oi < cfg.optimizers.size(); ++oi) {
    std::vector<double> means;
    for (int si = 0; si < cfg.seeds; ++si) {
      const auto curve = read_curve(out / "curves" /
                                    (cfg.optimizers[oi].name + "_s" +
                                     std::to_string(si) + ".csv"));
      REQUIRE(curve.losses.size() == 400);
      const std::size_t start = curve.losses.size() - curve.losses.size() / 10;
      double m = 0.0;
      for (std::size_t i = start; i < curve.losses.size(); ++i) m += curve.losses[i];
      means.push_back(m / static_cast<double>(curve.losses.size() - start));
    }
    double mean = (means[0] + means[1]) / 2.0;
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    const double sd = std::sqrt(var / (means.size() - 1.0));

    const auto& row = summary.at("rows").at(oi);
    CHECK(row.at("optimizer") == cfg.optimizers[oi].name);
    CHECK(std::abs(row.at("mean_last_tenth").get<double>() - mean) <= 1e-12);
    CHECK(std::abs(row.at("std_last_tenth").get<double>() - sd) <= 1e-12);
    CHECK(row.at("diverged_runs") == 0);
  }

  // sigma diagnostics appear in the learned optimizer's curves
  const auto lodo_curve = read_curve(out / "curves" / "lodo_s0.csv");
  REQUIRE(lodo_curve.sigma.size() == 4);  // steps 100, 200, 300, 400
  CHECK(lodo_curve.sigma.front().first == 100);
  const auto adam_curve = read_curve(out / "curves" / "adam_s0.csv");
  CHECK(adam_curve.sigma.empty());
  fs::remove_all(out);
}

TEST_CASE("suite reruns are byte-identical") {
  const fs::path a = fs::temp_directory_path() / "lodo_bench_test_b1";
  const fs::path b = fs::temp_directory_path() / "lodo_bench_test_b2";
  fs::remove_all(a);
  fs::remove_all(b);
  ExperimentConfig cfg = small_config(a.string());
  cfg.steps = 250;
  run_suite(cfg, 2);
  cfg.out_dir = b.string();
  run_suite(cfg, 1);  // thread count must not matter
  for (const auto& entry : fs::directory_iterator(a / "curves")) {
    const auto name = entry.path().filename();
    CHECK(slurp(entry.path()) == slurp(b / "curves" / name));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("csv loss cells round-trip exactly") {
  RunRecord rec;
  rec.steps = 3;
  rec.losses = {1.0 / 3.0, 7.411847253913421, 1e-17};
  rec.wall_ms = {0.1, 0.1, 0.1};
  std::ostringstream os;
  rec.write_csv(os, /*include_wall=*/false);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);  // header
  for (double expected : rec.losses) {
    std::getline(is, line);
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    CHECK(std::stod(line.substr(c1 + 1, c2 - c1 - 1)) == expected);
  }
}
