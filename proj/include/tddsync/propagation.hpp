#pragma once

// Node placement on a wrapped-around square and the channels between nodes.

#include <Eigen/Dense>
#include <vector>

#include "tddsync/core_model.hpp"

namespace tddsync {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Placement {
  std::vector<Point> aps;
  std::vector<Point> ues;
  double side = 0.0;
};

struct LargeScale {
  Eigen::MatrixXd beta_ue;    // K x L, linear
  Eigen::MatrixXd beta_ap;    // L x L, symmetric, zero diagonal (unused)
  Eigen::MatrixXd shadow_db;  // K x L realized S_{k,l}
};

/// Small-scale channels of one trial.
///
/// `ue(k, l)` is h_{k,l}. `inter_ap(rx, tx)` maps the signal of AP `tx` to the
/// antennas of AP `rx`; inter_ap(j, i) is the exact transpose of inter_ap(i, j).
class ChannelRealization {
 public:
  ChannelRealization() = default;
  ChannelRealization(int K, int L, int N);

  int num_ues() const { return K_; }
  int num_aps() const { return L_; }
  int antennas() const { return N_; }

  Eigen::VectorXcd& ue(int k, int l) { return h_[static_cast<std::size_t>(k * L_ + l)]; }
  const Eigen::VectorXcd& ue(int k, int l) const { return h_[static_cast<std::size_t>(k * L_ + l)]; }
  Eigen::MatrixXcd& inter_ap(int rx, int tx) { return g_[static_cast<std::size_t>(rx * L_ + tx)]; }
  const Eigen::MatrixXcd& inter_ap(int rx, int tx) const {
    return g_[static_cast<std::size_t>(rx * L_ + tx)];
  }

 private:
  int K_ = 0;
  int L_ = 0;
  int N_ = 0;
  std::vector<Eigen::VectorXcd> h_;
  std::vector<Eigen::MatrixXcd> g_;
};

struct ChannelEstimate {
  std::vector<Eigen::VectorXcd> q_hat;  // index k * L + l
  Eigen::MatrixXd gamma;                // K x L
  Eigen::MatrixXd c_coeff;              // K x L
  Eigen::MatrixXd pilot_phase;          // K x L, nu_{l,[i]_k} absorbed into q
};

struct LmmseCoefficients {
  double c = 0.0;
  double gamma = 0.0;
};

Placement place_nodes(const SystemConfig& config, Rng& rng);

double torus_distance(const Point& p, const Point& q, double side);

/// 3GPP UMi law: -30.5 - 36.7 log10(d) dB.
double pathloss_db(double distance_m);

LargeScale large_scale_fading(const Placement& placement, Rng& rng);

/// Shadow covariance toward one AP: 16 * 2^(-d_ue / 9 m).
Eigen::MatrixXd shadow_covariance(const Placement& placement);

ChannelRealization draw_channels(const LargeScale& large_scale, const SystemConfig& config, Rng& rng);

/// Only the UE channels, for a new coherence block.
void redraw_ue_channels(ChannelRealization& channels, const LargeScale& large_scale, Rng& rng);

/// iid CN(0, variance) vector.
Eigen::VectorXcd complex_gaussian(int n, double variance, Rng& rng);

LmmseCoefficients lmmse_coefficients(double beta, double rho_ue, int K);

ChannelEstimate lmmse_estimate(const ChannelRealization& channels, const LargeScale& large_scale,
                               const SystemConfig& config, const Eigen::MatrixXd& nu_at_pilot,
                               Rng& rng);

}  // namespace tddsync
