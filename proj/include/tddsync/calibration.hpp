#pragma once

// Beamformed over-the-air calibration signals between APs and the
// directional and bidirectional phase measurements built from them.

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <vector>

#include "tddsync/core_model.hpp"

namespace tddsync {

struct SingularPair {
  Eigen::VectorXcd left;
  Eigen::VectorXcd right;
  double sigma_max = 0.0;
};

/// Leading singular vectors, each with its first nonzero entry made real-positive.
SingularPair leading_singular_vectors(const Eigen::MatrixXcd& g);

/// rho_j = rho_ap * norm_j^-1 / sum(norm^-1).
std::vector<double> fractional_power_allocation(const std::vector<double>& norms, double rho_ap);

/// Composite calibration signal of one transmitter:
/// x = sum_j sqrt(powers[j]) * u[j].
struct CalSignal {
  int transmitter = 0;
  std::vector<int> targets;
  std::vector<Eigen::VectorXcd> u;
  std::vector<double> powers;

  Eigen::VectorXcd waveform() const;
  int target_slot(int rx) const;
};

/// channels_to_targets[j] is G_{targets[j], transmitter} as known to the network.
CalSignal make_cal_signal(int transmitter, const std::vector<int>& targets,
                          const std::vector<Eigen::MatrixXcd>& channels_to_targets, double rho_ap,
                          bool fractional_power = true);

struct DirectionalMeasurement {
  double alpha_bar = 0.0;
  double variance = 0.0;
  std::complex<double> matched_output;
};

/// ||G u||^2 / (2 |u^H G^H G x|^2).
double measurement_variance(const Eigen::MatrixXcd& g_known, const Eigen::VectorXcd& u,
                            const Eigen::VectorXcd& x);

/// y = exp(j(nu_rx - nu_tx)) G_true x + z, alpha_bar = arg(u^H G_known^H y).
/// noise_variance is the per-antenna receiver noise power (1 after normalization).
DirectionalMeasurement simulate_directional_measurement(const CalSignal& signal, int rx,
                                                        const Eigen::MatrixXcd& g_true,
                                                        const Eigen::MatrixXcd& g_known,
                                                        double nu_tx, double nu_rx, Rng& rng,
                                                        double noise_variance = 1.0);

struct MeasurementRecord {
  int first = 0;   // l1
  int second = 0;  // l2
  double alpha_fwd = 0.0;  // l1 -> l2, received by l2
  double alpha_bwd = 0.0;  // l2 -> l1, received by l1
  std::int64_t t_fwd = 0;
  std::int64_t t_bwd = 0;
  double var_fwd = 0.0;
  double var_bwd = 0.0;
  // Matched-filter outputs; when both are set the difference is taken from them.
  std::complex<double> out_fwd;
  std::complex<double> out_bwd;
};

/// Phase of out_fwd * conj(out_bwd) when both outputs are set, else
/// alpha_fwd - alpha_bwd. An estimate of
/// (nu_l2(t_bwd) + nu_l2(t_fwd)) - (nu_l1(t_bwd) + nu_l1(t_fwd)).
/// The product form is unchanged bit for bit by a common phase on the known G.
double bidirectional_difference(const MeasurementRecord& rec);

/// Precomputed link for repeated measurements over a static channel. Each draw
/// is equivalent to simulate_directional_measurement with the same inputs.
class CalLink {
 public:
  CalLink() = default;
  CalLink(const CalSignal& signal, int rx, const Eigen::MatrixXcd& g_true,
          const Eigen::MatrixXcd& g_known, VarianceSignal variance_signal,
          const CalSignal* first_endpoint_signal = nullptr);

  double draw(double nu_tx, double nu_rx, Rng& rng) const { return std::arg(draw_output(nu_tx, nu_rx, rng)); }
  /// Matched-filter output. The noise is drawn in the frame of the gain, so a
  /// common phase on the known G rotates the whole output.
  std::complex<double> draw_output(double nu_tx, double nu_rx, Rng& rng) const;
  double variance() const { return variance_; }
  std::complex<double> gain() const { return gain_; }

 private:
  std::complex<double> gain_;  // (G_known u)^H G_true x
  std::complex<double> unit_;  // gain_ / |gain_|
  double noise_sd_ = 0.0;      // per-component sd of (G_known u)^H z
  double variance_ = 0.0;
};

}  // namespace tddsync
