#pragma once

// Scenario grids and the CSV tables built from their results.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tddsync/config_file.hpp"
#include "tddsync/core_model.hpp"
#include "tddsync/simulation.hpp"

namespace tddsync {

enum class ScenarioKind { cdf_two_ap, se_vs_frame_length, se_vs_pn_level, se_vs_num_aps, custom };

enum class Method { no_phase_noise, single_ap, kalman, direct };

const char* to_string(ScenarioKind s);
const char* to_string(Method m);
ScenarioKind parse_scenario(const std::string& name);
Method parse_method(const std::string& name);

struct GridPoint {
  int L = 2;
  double s_pn_dbc_hz = -80.0;
  int unbroken_slots = 0;
};

struct Scenario {
  ScenarioKind kind = ScenarioKind::custom;
  std::vector<GridPoint> grid;
  std::vector<Method> methods;
  std::vector<Beamformer> beamformers{Beamformer::conj, Beamformer::zf};
  // Pin sigma_nu^2 to 8 pi^2 S dF^2 / f_s at each grid point's S_PN (the
  // c_nu chain is used only when this is false and no override is set).
  bool sigma_from_spectrum_level = true;
};

/// Default grid and methods of a named scenario on top of `base`.
Scenario default_scenario(ScenarioKind kind, const SystemConfig& base);

struct ExperimentConfig {
  SystemConfig system = SystemConfig::defaults();
  Scenario scenario;
  int threads = 0;  // 0: hardware concurrency
};

/// Defaults for every omitted key. Throws Error(config_parse) or
/// Error(invalid_config) naming the field.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_document(const ConfigDocument& doc);

/// Command-line settings that take precedence over the config file.
struct CliOverrides {
  std::optional<std::string> scenario;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  bool full_scale = false;  // 200 trials x 1000 frames unless trials is given
  std::optional<Estimator> estimator;  // replaces kalman/direct in the method list
  std::optional<std::string> beamformer;  // conj, zf or both
};

ExperimentConfig resolve_config(ConfigDocument doc, const CliOverrides& cli);

struct ResultRow {
  std::string scenario;
  GridPoint point;
  double sigma_nu_sq = 0.0;
  int frame_slots = 0;
  int trial = 0;
  int ue = 0;
  Method method = Method::kalman;
  Beamformer beamformer = Beamformer::conj;
  double se = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

/// System config of one grid point, with sigma_nu^2 resolved.
SystemConfig grid_config(const SystemConfig& base, const Scenario& scenario, const GridPoint& p);

/// Seed of one (grid point, trial). S_PN is left out so that phase-noise
/// levels share placements and noise draws.
std::uint64_t trial_seed(std::uint64_t master, const GridPoint& p, int trial);

ResultTable run_scenario(const SystemConfig& base, const Scenario& scenario, int threads = 0);

struct SummaryRow {
  double mean = 0.0;
  double sem = 0.0;
  std::size_t count = 0;
};

SummaryRow summarize_mean(const std::vector<double>& values);

struct CdfPoint {
  double probability = 0.0;
  double value = 0.0;
};

/// Empirical quantiles at probabilities 0.01, 0.02, ..., 1.00.
std::vector<CdfPoint> summarize_cdf(const std::vector<double>& values);

/// SE values of the rows matching one (grid point, method, beamformer), in
/// (trial, ue) order.
std::vector<double> select(const ResultTable& t, const GridPoint& p, Method m, Beamformer b);

void write_results_csv(std::ostream& out, const ResultTable& t);
void write_summary_csv(std::ostream& out, const ResultTable& t);
void write_cdf_csv(std::ostream& out, const ResultTable& t);

}  // namespace tddsync
