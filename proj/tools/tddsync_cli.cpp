// Command-line driver: runs one scenario and writes CSV tables into --out.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "tddsync/error.hpp"
#include "tddsync/experiments.hpp"

namespace fs = std::filesystem;
using namespace tddsync;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw Error(ErrorKind::invalid_config, "cannot write " + p.string());
  return f;
}

// Trial 0 of the first grid point, re-run with tracing for diagnostics.
void write_diagnostics(const ExperimentConfig& ec, const fs::path& out, const std::string& stem,
                       bool schedule, bool trace) {
  const GridPoint& p = ec.scenario.grid.front();
  const SystemConfig cfg = grid_config(ec.system, ec.scenario, p);
  const std::uint64_t seed = trial_seed(cfg.master_seed, p, 0);
  const TrialSetup setup = prepare_trial(cfg, seed);
  if (schedule) {
    auto f = open_out(out / (stem + "_schedule.json"));
    f << dump_schedule(setup.schedule, setup.graph) << '\n';
  }
  if (!trace || cfg.L < 2) return;
  Estimator est = Estimator::kalman;
  for (Method m : ec.scenario.methods)
    if (m == Method::direct) est = Estimator::direct;
  for (Method m : ec.scenario.methods)
    if (m == Method::kalman) est = Estimator::kalman;
  std::vector<TraceRow> rows;
  TrialOptions opt;
  opt.estimator = est;
  opt.trace = &rows;
  const TrialOutcome o = run_calibrated(setup, cfg, seed, opt);
  {
    auto f = open_out(out / (stem + "_trace.csv"));
    write_trace_csv(f, rows);
  }
  auto rates = open_out(out / (stem + "_rates.csv"));
  auto se = open_out(out / (stem + "_trial0_se.csv"));
  write_rates_csv(rates, Beamformer::conj, o.conj, true);
  write_se_csv(se, Beamformer::conj, o.conj, true);
  if (o.zf) {
    write_rates_csv(rates, Beamformer::zf, *o.zf, false);
    write_se_csv(se, Beamformer::zf, *o.zf, false);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed MIMO phase calibration simulator"};
  std::string config_path;
  std::string out_dir = ".";
  std::string scenario;
  std::uint64_t seed = 0;
  int trials = 0;
  int threads = -1;
  bool full_scale = false;
  std::string estimator;
  std::string beamformer;
  bool dump_schedule_flag = false;
  bool trace_flag = false;

  app.add_option("--config", config_path, "TOML key/value configuration file")->check(CLI::ExistingFile);
  auto* scenario_opt = app.add_option("--scenario", scenario, "cdf_two_ap, se_vs_frame_length, se_vs_pn_level, se_vs_num_aps or custom");
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  auto* trials_opt = app.add_option("--trials", trials, "placement trials per grid point")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory");
  app.add_flag("--full-scale", full_scale, "200 trials and 1000 frames per trial");
  auto* est_opt = app.add_option("--estimator", estimator, "kalman or direct")
                      ->check(CLI::IsMember({"kalman", "direct"}));
  auto* bf_opt = app.add_option("--beamformer", beamformer, "conj, zf or both")
                     ->check(CLI::IsMember({"conj", "zf", "both"}));
  app.add_option("--threads", threads, "worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--dump-schedule", dump_schedule_flag, "write the schedule of trial 0");
  app.add_flag("--trace", trace_flag, "write filter trace and rate table of trial 0");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  ExperimentConfig ec;
  try {
    CliOverrides cli;
    if (*scenario_opt) cli.scenario = scenario;
    if (*seed_opt) cli.seed = seed;
    if (*trials_opt) cli.trials = trials;
    cli.full_scale = full_scale;
    if (*est_opt) cli.estimator = estimator == "kalman" ? Estimator::kalman : Estimator::direct;
    if (*bf_opt) cli.beamformer = beamformer;
    ec = resolve_config(config_path.empty() ? ConfigDocument{} : load_config_file(config_path), cli);
    if (threads >= 0) ec.threads = threads;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    const fs::path out(out_dir);
    fs::create_directories(out);
    const std::string stem = to_string(ec.scenario.kind);
    const ResultTable table = run_scenario(ec.system, ec.scenario, ec.threads);
    {
      auto f = open_out(out / (stem + ".csv"));
      write_results_csv(f, table);
    }
    {
      auto f = open_out(out / (stem + "_summary.csv"));
      write_summary_csv(f, table);
    }
    {
      auto f = open_out(out / (stem + "_cdf.csv"));
      write_cdf_csv(f, table);
    }
    if (dump_schedule_flag || trace_flag) write_diagnostics(ec, out, stem, dump_schedule_flag, trace_flag);
    std::cout << "wrote " << table.rows.size() << " rows to " << (out / (stem + ".csv")).string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
