#pragma once

// Residual phase after compensation and the use-and-forget rate bounds it
// feeds.

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "tddsync/core_model.hpp"
#include "tddsync/topology.hpp"

namespace tddsync {

enum class Beamformer { conj, zf };

const char* to_string(Beamformer b);

/// eta_{k,l} = sqrt(beta_{k,l}) / sum_k' sqrt(beta_{k',l}).
Eigen::MatrixXd downlink_power_allocation(const Eigen::MatrixXd& beta);

struct CompensationState {
  Eigen::VectorXd theta;  // per AP
  Eigen::VectorXd psi;    // per UE
  CompensationPolicy policy = CompensationPolicy::pilot;
};

/// exp(j(-nu_{l,i} - nu_{l,[i]_k} + theta_l + psi_k)); k is 1-based, l 0-based.
std::complex<double> residual_phase(const PhaseTrajectory& traj, const CompensationState& comp,
                                    std::int64_t i, int k, int l, int tau_c);

/// a_{l,n} for n = 1..F tau_c, stored as (L x F tau_c) with column n-1.
/// Without a schedule every slot follows the conventional TDD pattern.
Eigen::MatrixXd activity_mask(const SystemConfig& config, int num_aps, int frame_slots,
                              const Schedule* schedule);

/// psi = -arg(sum of received per-AP pilot terms + noise). The genie policy
/// drops the noise.
double ue_phase_compensation(const std::vector<std::complex<double>>& pilot_terms,
                             CompensationPolicy policy, Rng& rng, double noise_variance = 1.0);

/// Moments of Delta over frames at fixed intra-frame index n.
struct ResidualPhaseStats {
  int K = 0;
  int L = 0;
  int length = 0;  // F tau_c
  int frames = 0;
  std::vector<std::complex<double>> mean_delta;  // [(n * K + k) * L + l], k and n 0-based
  std::vector<std::complex<double>> sum_mean;    // E[S_{k,n}]
  std::vector<double> sum_variance;              // Var[S_{k,n}] = E|S|^2 - |E S|^2
  // Optional retained Delta samples, [frame][(n * K + k) * L + l].
  std::vector<std::vector<std::complex<double>>> samples;

  std::complex<double> mean(int n, int k, int l) const {
    return mean_delta[static_cast<std::size_t>((n * K + k) * L + l)];
  }

  /// Delta identically 1.
  static ResidualPhaseStats ideal(int K, int L, int length, const Eigen::MatrixXd& weights,
                                  const Eigen::MatrixXd& activity);
};

/// Streaming accumulator; S_{k,n} = sum_l a_{l,n} w_{k,l} Delta_{k,l,n} with
/// w = sqrt(eta gamma). Welford updates keep the variance stable.
class DeltaAccumulator {
 public:
  DeltaAccumulator(int K, int L, int length, Eigen::MatrixXd weights, Eigen::MatrixXd activity,
                   bool retain_samples = false);

  void begin_frame();
  /// delta is K x L for intra-frame index n (0-based).
  void add(int n, const Eigen::MatrixXcd& delta);
  int frames() const { return frames_; }
  ResidualPhaseStats finish(int min_frames = 10) const;

 private:
  int K_, L_, length_;
  Eigen::MatrixXd weights_;
  Eigen::MatrixXd activity_;
  bool retain_;
  int frames_ = 0;
  std::vector<std::complex<double>> delta_sum_;
  std::vector<std::complex<double>> s_mean_;
  std::vector<double> s_m2_;
  std::vector<int> s_count_;
  std::vector<std::vector<std::complex<double>>> samples_;
};

struct RateInputs {
  Eigen::MatrixXd activity;  // L x F tau_c
  Eigen::MatrixXd eta;       // K x L
  Eigen::MatrixXd gamma;     // K x L
  Eigen::MatrixXd beta;      // K x L
};

/// SINR pieces: signal / (uncertainty + interference + 1).
struct RateTerms {
  double signal = 0.0;
  double uncertainty = 0.0;   // beamforming-gain uncertainty
  double interference = 0.0;  // UI; for ZF this includes the estimation-error leakage of every k'
  double rate() const;
};

RateTerms rate_terms_conjugate(const RateInputs& in, const ResidualPhaseStats& stats, int n, int k,
                               double rho_ap, int N);
RateTerms rate_terms_zf(const RateInputs& in, const ResidualPhaseStats& stats, int n, int k,
                        double rho_ap, int N, int K);

/// n is 0-based, k is 0-based. Result in bits/s/Hz.
double rate_conjugate(const RateInputs& in, const ResidualPhaseStats& stats, int n, int k,
                      double rho_ap, int N);
double rate_zf(const RateInputs& in, const ResidualPhaseStats& stats, int n, int k, double rho_ap,
               int N, int K);

double spectral_efficiency(const std::vector<double>& rates);

struct SeResult {
  Eigen::VectorXd se;     // per UE
  Eigen::MatrixXd rates;  // K x F tau_c
};

SeResult evaluate_se(const RateInputs& in, const ResidualPhaseStats& stats, Beamformer bf,
                     double rho_ap, int N);

/// Header: beamformer,ue,n,rate. Pass header=false to append a second beamformer.
void write_rates_csv(std::ostream& out, Beamformer bf, const SeResult& r, bool header = true);
/// Header: beamformer,ue,se.
void write_se_csv(std::ostream& out, Beamformer bf, const SeResult& r, bool header = true);

}  // namespace tddsync
