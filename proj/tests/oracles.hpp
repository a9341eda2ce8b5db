#pragma once

// Reference implementations that deliberately avoid the library code paths
// they are used to check.

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <vector>

#include "tddsync/core_model.hpp"
#include "tddsync/topology.hpp"

namespace oracle {

struct KfState {
  Eigen::VectorXd x;
  Eigen::MatrixXd P;
};

/// Textbook predict/update with uncorrelated process (Q) and measurement (R)
/// noise, Joseph-form covariance.
KfState standard_kalman(const KfState& s, const Eigen::VectorXd& z, const Eigen::MatrixXd& H,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// argmin (a - B phi)^T W (a - B phi) subject to sum(phi) = 0, via the KKT system.
Eigen::VectorXd gauge_wls(const Eigen::VectorXd& a, const Eigen::MatrixXd& W, const Eigen::MatrixXd& B);

/// Largest singular value by power iteration on G^H G.
double power_iteration_sigma_max(const Eigen::MatrixXcd& g, int iterations = 2000);

/// Smallest threshold graph over all thresholds: the edge set of strengths
/// >= t for the largest t that leaves the graph connected with >= m_min edges.
std::vector<tddsync::Edge> threshold_graph_bruteforce(const Eigen::MatrixXd& strengths, int m_min);

/// Tiny-instance brute force of the downlink signal model. Delta_{k,l} =
/// exp(j(mu + s g)) with g standard normal, independent across (k, l).
struct TinyInstance {
  int L = 2;
  int N = 2;
  int K = 2;
  double rho_ap = 1.0;
  double rho_ue = 1.0;
  Eigen::MatrixXd beta;      // K x L
  Eigen::MatrixXd eta;       // K x L
  Eigen::MatrixXd delta_mu;  // K x L
  Eigen::MatrixXd delta_sd;  // K x L
  Eigen::VectorXd activity;  // L
};

struct SignalMoments {
  double signal = 0.0;    // |DS|^2
  double uncertainty = 0.0;  // E|BU|^2
  double interference = 0.0; // E|UI|^2
};

/// Monte-Carlo of DS / BU / UI from the received signal definitions.
/// zf selects W = sqrt(N-K) Qhat^* (Qhat^T Qhat^*)^-1 D_gamma^{1/2}.
SignalMoments brute_force_moments(const TinyInstance& inst, int k, bool zf, std::int64_t draws,
                                  std::uint64_t seed);

/// Moments of the LMMSE estimate over `draws` samples.
struct EstimateMoments {
  double cross = 0.0;        // E|qtilde^T qhat^*|^2
  double fourth = 0.0;       // E||qhat||^4
  double entry_var = 0.0;    // per-entry variance of qhat
  std::complex<double> cross_mean;  // E[qtilde^H qhat]
  double cross_mean_sd = 0.0;       // standard error of cross_mean (per component)
};

EstimateMoments estimate_moments(int N, double beta, double rho_ue, int K, std::int64_t draws,
                                 std::uint64_t seed);

}  // namespace oracle
