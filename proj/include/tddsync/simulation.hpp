#pragma once

// One Monte-Carlo trial, from node placement to per-UE spectral efficiency.

#include <cstdint>
#include <optional>
#include <vector>

#include "tddsync/calibration.hpp"
#include "tddsync/core_model.hpp"
#include "tddsync/propagation.hpp"
#include "tddsync/spectral_efficiency.hpp"
#include "tddsync/topology.hpp"
#include "tddsync/tracking.hpp"

namespace tddsync {

enum class Estimator { kalman, direct };

const char* to_string(Estimator e);

struct TrialSetup {
  Placement placement;
  LargeScale large_scale;
  ChannelRealization channels;
  std::vector<double> known_phase;  // common phase error of the known G, per AP pair (L x L)
  ApGraph graph;
  Coloring coloring;
  Schedule schedule;
  int frame_slots = 1;
  Eigen::MatrixXd gamma;  // K x L
  Eigen::MatrixXd eta;    // K x L

  Eigen::MatrixXcd known_channel(int rx, int tx) const;
};

TrialSetup prepare_trial(const SystemConfig& config, std::uint64_t trial_seed);

struct TrialOptions {
  Estimator estimator = Estimator::kalman;
  bool keep_stats = false;
  bool retain_samples = false;
  std::vector<TraceRow>* trace = nullptr;
};

struct TrialOutcome {
  SeResult conj;
  std::optional<SeResult> zf;  // only when N > K
  std::optional<ResidualPhaseStats> stats;
  RateInputs inputs;
  int jitter_events = 0;
};

TrialOutcome run_calibrated(const TrialSetup& setup, const SystemConfig& config,
                            std::uint64_t trial_seed, const TrialOptions& options = {});

/// Conventional TDD, Delta identically 1, every AP serving.
TrialOutcome run_no_phase_noise(const TrialSetup& setup, const SystemConfig& config);

/// Only AP 0 serves, no inter-AP calibration, theta = 0, UE compensation as configured.
TrialOutcome run_single_ap(const TrialSetup& setup, const SystemConfig& config,
                           std::uint64_t trial_seed, const TrialOptions& options = {});

}  // namespace tddsync
