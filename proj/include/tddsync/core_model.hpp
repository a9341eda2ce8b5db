#pragma once

// Frame timing and Wiener phase noise, shared by every module.
//
// Sample indices are 1-based everywhere: global sample i = (s - 1) * tau_c + j
// for slot s >= 1 and within-slot index j in [1, tau_c]. Index 0 is the
// initial oscillator state before the first sample. AP and UE indices are
// 0-based array positions, except where a function says otherwise.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace tddsync {

using Rng = std::mt19937_64;

enum class CompensationPolicy { genie, pilot };

/// Kalman noise model: per-entry closed forms, or exact
/// interval-overlap sums over the Wiener increments.
enum class CovarianceModel { exact, closed_form };

/// Which transmitted signal enters the directional measurement variance.
enum class VarianceSignal { per_direction, first_endpoint };

/// Where the measurement slots sit inside a frame.
enum class SlotPlacement { leading, even };

struct SystemConfig {
  int L = 2;
  int N = 64;
  int K = 10;

  int tau_c = 100;
  int tau_p = 10;
  int tau_u = 42;
  int tau_d = 42;
  int tau_g = 3;

  // Frame length in slots. 0 means "n_m + unbroken_slots" once the schedule
  // is known.
  int F = 0;
  int unbroken_slots = 0;

  // Normalized (noise power = 1) linear transmit powers.
  double rho_ap = 0.0;
  double rho_ue = 0.0;

  double s_pn_dbc_hz = -80.0;
  double delta_f = 1e5;
  double f_c = 2e9;
  double f_s = 2e7;
  std::optional<double> sigma_nu_sq_override;

  int m_min = 0;  // 0 selects L - 1
  double area_side = 500.0;
  double min_ap_separation = 50.0;

  int trials = 50;
  int frames_per_trial = 200;
  int warmup_frames = 1;
  std::uint64_t master_seed = 1;

  CompensationPolicy compensation = CompensationPolicy::pilot;
  CovarianceModel covariance_model = CovarianceModel::exact;
  VarianceSignal variance_signal = VarianceSignal::per_direction;
  SlotPlacement slot_placement = SlotPlacement::even;
  bool g_known_exactly = true;

  /// Defaults with powers normalized to the -94 dBm noise floor.
  static SystemConfig defaults();

  int effective_m_min() const { return m_min > 0 ? m_min : L - 1; }

  /// Throws Error(invalid_config) naming the offending field.
  void validate() const;
};

/// Converts a power in milliwatts to a linear ratio over a noise floor in dBm.
double normalized_power(double milliwatts, double noise_dbm);

struct SlotTiming {
  int tau_c = 0;
  int K = 0;
  int i1 = 0;  // master transmits, others receive
  int i2 = 0;  // responders transmit, master receives
  int mid_pilot = 0;
  int dl_start = 0;  // first downlink sample of an unshifted AP (also the DL pilot)
  int dl_end = 0;
  int master_dl_start = 0;
  int master_dl_end = 0;

  static SlotTiming from_config(const SystemConfig& config);

  int pilot_index(int k) const { return k; }  // k is 1-based
};

struct PhaseTrajectory {
  // nu[l][i] for global sample i >= 0.
  std::vector<std::vector<double>> nu;
  double sigma_nu_sq = 0.0;

  int num_aps() const { return static_cast<int>(nu.size()); }
  std::int64_t last_index() const {
    return nu.empty() ? -1 : static_cast<std::int64_t>(nu.front().size()) - 1;
  }
  double at(int ap, std::int64_t i) const { return nu[ap][static_cast<std::size_t>(i)]; }
};

double compute_sigma_nu_sq(const SystemConfig& config);

/// Increment variance for a spectrum level in dBc/Hz when c_nu carries f_c
/// squared: 8 pi^2 S dF^2 / f_s. Used by the experiments to pin sigma_nu^2.
double sigma_nu_sq_from_spectrum_level(double s_pn_dbc_hz, double delta_f, double f_s);

/// Starts every AP at an independent uniform phase in [-pi, pi).
PhaseTrajectory initial_trajectory(int num_aps, double sigma_nu_sq, Rng& rng);

PhaseTrajectory advance_phase(PhaseTrajectory traj, std::int64_t steps, Rng& rng);

/// [i]_k = i - 1 - ((i - 1 - k) mod tau_c), k 1-based. Results before sample 1
/// are clamped to the first occurrence of pilot k.
std::int64_t latest_pilot_index(std::int64_t i, int k, int tau_c);

double wrap(double angle);

}  // namespace tddsync
