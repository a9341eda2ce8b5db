#include "tddsync/propagation.hpp"

#include <cmath>
#include <complex>

#include "tddsync/error.hpp"

namespace tddsync {

namespace {

constexpr int kPlacementRetryCap = 100000;
constexpr double kShadowSigmaDb = 4.0;
constexpr double kShadowDecorrelation = 9.0;
constexpr double kCovarianceJitter = 1e-12;

Point uniform_point(double side, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, side);
  const double x = u(rng);
  return {x, u(rng)};
}

}  // namespace

ChannelRealization::ChannelRealization(int K, int L, int N)
    : K_(K), L_(L), N_(N),
      h_(static_cast<std::size_t>(K * L), Eigen::VectorXcd::Zero(N)),
      g_(static_cast<std::size_t>(L * L), Eigen::MatrixXcd::Zero(N, N)) {}

Placement place_nodes(const SystemConfig& config, Rng& rng) {
  Placement p;
  p.side = config.area_side;
  int attempts = 0;
  while (static_cast<int>(p.aps.size()) < config.L) {
    if (++attempts > kPlacementRetryCap)
      throw Error(ErrorKind::placement_infeasible,
                  "could not separate " + std::to_string(config.L) + " APs by " +
                      std::to_string(config.min_ap_separation) + " m");
    const Point candidate = uniform_point(config.area_side, rng);
    bool ok = true;
    for (const Point& other : p.aps) {
      if (torus_distance(candidate, other, config.area_side) < config.min_ap_separation) {
        ok = false;
        break;
      }
    }
    if (ok) p.aps.push_back(candidate);
  }
  for (int k = 0; k < config.K; ++k) p.ues.push_back(uniform_point(config.area_side, rng));
  return p;
}

double torus_distance(const Point& p, const Point& q, double side) {
  double dx = std::abs(p.x - q.x);
  double dy = std::abs(p.y - q.y);
  dx = std::min(dx, side - dx);
  dy = std::min(dy, side - dy);
  return std::hypot(dx, dy);
}

double pathloss_db(double distance_m) { return -30.5 - 36.7 * std::log10(distance_m); }

Eigen::MatrixXd shadow_covariance(const Placement& placement) {
  const int K = static_cast<int>(placement.ues.size());
  Eigen::MatrixXd cov(K, K);
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b < K; ++b) {
      const double d = torus_distance(placement.ues[a], placement.ues[b], placement.side);
      cov(a, b) = kShadowSigmaDb * kShadowSigmaDb * std::pow(2.0, -d / kShadowDecorrelation);
    }
  }
  return cov;
}

LargeScale large_scale_fading(const Placement& placement, Rng& rng) {
  const int K = static_cast<int>(placement.ues.size());
  const int L = static_cast<int>(placement.aps.size());
  LargeScale out;
  out.beta_ue.resize(K, L);
  out.shadow_db.resize(K, L);
  out.beta_ap = Eigen::MatrixXd::Zero(L, L);

  Eigen::MatrixXd cov = shadow_covariance(placement);
  cov.diagonal().array() += kCovarianceJitter;
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::covariance, "shadow covariance is not positive definite");
  const Eigen::MatrixXd factor = llt.matrixL();

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXd w(K);
    for (int k = 0; k < K; ++k) w(k) = gauss(rng);
    out.shadow_db.col(l) = factor * w;
  }
  for (int l = 0; l < L; ++l) {
    for (int k = 0; k < K; ++k) {
      const double d = torus_distance(placement.ues[k], placement.aps[l], placement.side);
      if (!(d > 0.0)) throw Error(ErrorKind::invalid_config, "UE co-located with an AP");
      out.beta_ue(k, l) = std::pow(10.0, (pathloss_db(d) + out.shadow_db(k, l)) / 10.0);
    }
  }
  // Inter-AP links: same law, independent shadowing per pair.
  for (int i = 0; i < L; ++i) {
    for (int j = i + 1; j < L; ++j) {
      const double d = torus_distance(placement.aps[i], placement.aps[j], placement.side);
      if (!(d > 0.0)) throw Error(ErrorKind::invalid_config, "co-located APs");
      const double s = kShadowSigmaDb * gauss(rng);
      out.beta_ap(i, j) = out.beta_ap(j, i) = std::pow(10.0, (pathloss_db(d) + s) / 10.0);
    }
  }
  return out;
}

Eigen::VectorXcd complex_gaussian(int n, double variance, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sd = std::sqrt(variance / 2.0);
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) {
    const double re = gauss(rng);
    v(i) = std::complex<double>(sd * re, sd * gauss(rng));
  }
  return v;
}

void redraw_ue_channels(ChannelRealization& channels, const LargeScale& large_scale, Rng& rng) {
  for (int k = 0; k < channels.num_ues(); ++k)
    for (int l = 0; l < channels.num_aps(); ++l)
      channels.ue(k, l) = complex_gaussian(channels.antennas(), large_scale.beta_ue(k, l), rng);
}

ChannelRealization draw_channels(const LargeScale& large_scale, const SystemConfig& config,
                                 Rng& rng) {
  const int K = static_cast<int>(large_scale.beta_ue.rows());
  const int L = static_cast<int>(large_scale.beta_ue.cols());
  ChannelRealization ch(K, L, config.N);
  redraw_ue_channels(ch, large_scale, rng);
  for (int i = 0; i < L; ++i) {
    for (int j = i + 1; j < L; ++j) {
      const Eigen::VectorXcd flat =
          complex_gaussian(config.N * config.N, large_scale.beta_ap(i, j), rng);
      ch.inter_ap(i, j) = Eigen::Map<const Eigen::MatrixXcd>(flat.data(), config.N, config.N);
      ch.inter_ap(j, i) = ch.inter_ap(i, j).transpose();
    }
  }
  return ch;
}

LmmseCoefficients lmmse_coefficients(double beta, double rho_ue, int K) {
  const double amp = std::sqrt(rho_ue * K);
  LmmseCoefficients out;
  out.c = amp * beta / (rho_ue * K * beta + 1.0);
  out.gamma = amp * beta * out.c;
  return out;
}

ChannelEstimate lmmse_estimate(const ChannelRealization& channels, const LargeScale& large_scale,
                               const SystemConfig& config, const Eigen::MatrixXd& nu_at_pilot,
                               Rng& rng) {
  const int K = channels.num_ues();
  const int L = channels.num_aps();
  const double amp = std::sqrt(config.rho_ue * K);
  ChannelEstimate est;
  est.gamma.resize(K, L);
  est.c_coeff.resize(K, L);
  est.pilot_phase = nu_at_pilot;
  est.q_hat.reserve(static_cast<std::size_t>(K * L));
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < L; ++l) {
      const LmmseCoefficients co = lmmse_coefficients(large_scale.beta_ue(k, l), config.rho_ue, K);
      est.gamma(k, l) = co.gamma;
      est.c_coeff(k, l) = co.c;
      const std::complex<double> rot = std::polar(1.0, nu_at_pilot(k, l));
      const Eigen::VectorXcd y =
          amp * rot * channels.ue(k, l) + complex_gaussian(channels.antennas(), 1.0, rng);
      est.q_hat.push_back(co.c * y);
    }
  }
  return est;
}

}  // namespace tddsync
