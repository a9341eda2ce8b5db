#pragma once

// Edge-offset tracking with correlated process and measurement noise, and the
// gauge-fixed phase solve on top of it.

#include <Eigen/Dense>
#include <cstdint>
#include <ostream>
#include <vector>

#include "tddsync/core_model.hpp"
#include "tddsync/topology.hpp"

namespace tddsync {

/// +1 when the shared AP has the same role in both edges, -1 when the roles
/// differ, 0 when the edges are disjoint. Identical edges give +1.
int varsigma(const Edge& a, const Edge& b);

/// Time reference of one filter update. All sample indices are global.
struct UpdateInstant {
  std::int64_t i = 0;      // i2 of the measurement slot
  std::int64_t i_mid = 0;  // [i]_{floor(K/2)}
  int d = 1;               // slots since the previous update
  int tau_c = 100;
};

UpdateInstant make_update_instant(std::int64_t i, int d, const SlotTiming& timing);

// Per-entry closed forms.
double closed_form_zeta_variance(const UpdateInstant& at, double sigma_nu_sq);
double closed_form_xi_variance(const EdgeTimestamps& ts, const UpdateInstant& at, double sigma_nu_sq);
double closed_form_zeta_xi(const EdgeTimestamps& ts, const UpdateInstant& at, double sigma_nu_sq);

Eigen::MatrixXd sigma_zeta(const std::vector<Edge>& edges, const UpdateInstant& at,
                           double sigma_nu_sq);
/// Rows and columns over `measured` (edge indices).
Eigen::MatrixXd sigma_xi(const std::vector<Edge>& edges, const std::vector<int>& measured,
                         const std::vector<EdgeTimestamps>& timestamps, const UpdateInstant& at,
                         double sigma_nu_sq);
/// Rows over all edges, columns over `measured`.
Eigen::MatrixXd sigma_zeta_xi(const std::vector<Edge>& edges, const std::vector<int>& measured,
                              const std::vector<EdgeTimestamps>& timestamps,
                              const UpdateInstant& at, double sigma_nu_sq);

struct NoiseCovariances {
  Eigen::MatrixXd sigma_zeta;     // M x M
  Eigen::MatrixXd sigma_xi;       // Mn x Mn
  Eigen::MatrixXd sigma_zeta_xi;  // M x Mn
  Eigen::MatrixXd sigma_mu;       // Mn x Mn, diagonal
};

/// Same three matrices computed from the overlap of the Wiener increment
/// intervals that make up each noise term. Always a valid joint covariance.
NoiseCovariances exact_noise_covariances(const std::vector<Edge>& edges,
                                         const std::vector<int>& measured,
                                         const std::vector<EdgeTimestamps>& timestamps,
                                         const UpdateInstant& at, double sigma_nu_sq);

NoiseCovariances noise_covariances(const std::vector<Edge>& edges, const std::vector<int>& measured,
                                   const std::vector<EdgeTimestamps>& timestamps,
                                   const UpdateInstant& at, double sigma_nu_sq,
                                   const Eigen::VectorXd& measurement_variances,
                                   CovarianceModel model);

struct ScalarKalmanState {
  double alpha_hat = 0.0;
  double P = 0.0;  // prior-form error variance of the scalar recursion
  int n = 0;
};

ScalarKalmanState kalman_update_two_ap(const ScalarKalmanState& state, double alpha_bar,
                                       double sigma_zeta_sq, double sigma_xi_sq, double meas_var);

/// Positive root of P = P - kappa(P + a) + z at the fixed point.
double scalar_riccati_fixed_point(double sigma_zeta_sq, double sigma_xi_sq, double meas_var);

struct KalmanState {
  Eigen::VectorXd alpha_hat;
  Eigen::MatrixXd P_post;
  int n = 0;
};

struct KalmanStep {
  KalmanState state;
  Eigen::VectorXd innovation;  // wrapped, one entry per measured edge
};

KalmanStep kalman_update(const KalmanState& state, const Eigen::VectorXd& alpha_bar,
                         const Eigen::MatrixXd& A, const NoiseCovariances& cov);

/// new + 2 pi k with |result - prev| <= pi; ties take the smaller k.
double unwrap_step(double prev, double next);

struct PhaseSolution {
  Eigen::VectorXd phi_hat;
  Eigen::MatrixXd basis;             // L x (L-1)
  Eigen::MatrixXd error_covariance;  // Z (Z^T B^T P^-1 B Z)^-1 Z^T
  bool jittered = false;
};

PhaseSolution solve_phases(const Eigen::VectorXd& alpha_hat, const Eigen::MatrixXd& P,
                           const Eigen::MatrixXd& B);

struct TraceRow {
  int update = 0;
  std::int64_t sample = 0;
  int edge = 0;
  double alpha_hat = 0.0;
  double p_diag = 0.0;
  double innovation = 0.0;  // NaN when the edge was not measured
  bool measured = false;
};

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);

}  // namespace tddsync
