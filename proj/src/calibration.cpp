#include "tddsync/calibration.hpp"

#include <cmath>
#include <numeric>

#include "tddsync/error.hpp"
#include "tddsync/propagation.hpp"

namespace tddsync {

namespace {

void fix_phase(Eigen::VectorXcd& v) {
  const double tol = 1e-14 * v.norm();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > tol) {
      v *= std::conj(v(i)) / std::abs(v(i));
      v(i) = std::abs(v(i));
      return;
    }
  }
}

}  // namespace

SingularPair leading_singular_vectors(const Eigen::MatrixXcd& g) {
  if (g.size() == 0 || g.cwiseAbs().maxCoeff() == 0.0)
    throw Error(ErrorKind::degenerate_channel, "zero inter-AP channel matrix");
  const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SingularPair out;
  out.left = svd.matrixU().col(0);
  out.right = svd.matrixV().col(0);
  out.sigma_max = svd.singularValues()(0);
  fix_phase(out.left);
  fix_phase(out.right);
  return out;
}

std::vector<double> fractional_power_allocation(const std::vector<double>& norms, double rho_ap) {
  double total = 0.0;
  for (double n : norms) {
    if (!(n > 0.0)) throw Error(ErrorKind::degenerate_channel, "zero channel norm in power allocation");
    total += 1.0 / n;
  }
  std::vector<double> powers;
  powers.reserve(norms.size());
  for (double n : norms) powers.push_back(rho_ap * (1.0 / n) / total);
  return powers;
}

Eigen::VectorXcd CalSignal::waveform() const {
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(u.empty() ? 0 : u.front().size());
  for (std::size_t j = 0; j < u.size(); ++j) x += std::sqrt(powers[j]) * u[j];
  return x;
}

int CalSignal::target_slot(int rx) const {
  for (std::size_t j = 0; j < targets.size(); ++j)
    if (targets[j] == rx) return static_cast<int>(j);
  return -1;
}

CalSignal make_cal_signal(int transmitter, const std::vector<int>& targets,
                          const std::vector<Eigen::MatrixXcd>& channels_to_targets, double rho_ap,
                          bool fractional_power) {
  CalSignal s;
  s.transmitter = transmitter;
  s.targets = targets;
  std::vector<double> norms;
  for (const auto& g : channels_to_targets) {
    s.u.push_back(leading_singular_vectors(g).right);
    norms.push_back(g.norm());
  }
  if (fractional_power) {
    s.powers = fractional_power_allocation(norms, rho_ap);
  } else {
    s.powers.assign(targets.size(), rho_ap / static_cast<double>(targets.size()));
  }
  return s;
}

double measurement_variance(const Eigen::MatrixXcd& g_known, const Eigen::VectorXcd& u,
                            const Eigen::VectorXcd& x) {
  const Eigen::VectorXcd gu = g_known * u;
  const std::complex<double> b = gu.dot(g_known * x);
  if (std::norm(b) == 0.0)
    throw Error(ErrorKind::measurement_degenerate, "zero matched-filter energy");
  return gu.squaredNorm() / (2.0 * std::norm(b));
}

DirectionalMeasurement simulate_directional_measurement(const CalSignal& signal, int rx,
                                                        const Eigen::MatrixXcd& g_true,
                                                        const Eigen::MatrixXcd& g_known,
                                                        double nu_tx, double nu_rx, Rng& rng,
                                                        double noise_variance) {
  const int slot = signal.target_slot(rx);
  if (slot < 0) throw Error(ErrorKind::invalid_config, "receiver is not a target of the signal");
  const Eigen::VectorXcd x = signal.waveform();
  const Eigen::VectorXcd& u = signal.u[static_cast<std::size_t>(slot)];

  Eigen::VectorXcd y = std::polar(1.0, nu_rx - nu_tx) * (g_true * x);
  if (noise_variance > 0.0) y += complex_gaussian(static_cast<int>(y.size()), noise_variance, rng);

  DirectionalMeasurement m;
  m.matched_output = (g_known * u).dot(y);
  if (std::norm(m.matched_output) == 0.0)
    throw Error(ErrorKind::measurement_degenerate, "zero matched-filter output");
  m.alpha_bar = std::arg(m.matched_output);
  m.variance = measurement_variance(g_known, u, x);
  return m;
}

double bidirectional_difference(const MeasurementRecord& rec) {
  const std::complex<double> zero(0.0, 0.0);
  if (rec.out_fwd != zero && rec.out_bwd != zero) return std::arg(rec.out_fwd * std::conj(rec.out_bwd));
  return rec.alpha_fwd - rec.alpha_bwd;
}

CalLink::CalLink(const CalSignal& signal, int rx, const Eigen::MatrixXcd& g_true,
                 const Eigen::MatrixXcd& g_known, VarianceSignal variance_signal,
                 const CalSignal* first_endpoint_signal) {
  const int slot = signal.target_slot(rx);
  if (slot < 0) throw Error(ErrorKind::invalid_config, "receiver is not a target of the signal");
  const Eigen::VectorXcd& u = signal.u[static_cast<std::size_t>(slot)];
  const Eigen::VectorXcd x = signal.waveform();
  const Eigen::VectorXcd gu = g_known * u;
  gain_ = gu.dot(g_true * x);
  if (std::norm(gain_) == 0.0)
    throw Error(ErrorKind::measurement_degenerate, "zero matched-filter energy");
  unit_ = gain_ / std::abs(gain_);
  noise_sd_ = gu.norm() / std::sqrt(2.0);
  const bool alt = variance_signal == VarianceSignal::first_endpoint && first_endpoint_signal;
  variance_ = measurement_variance(g_known, u, alt ? first_endpoint_signal->waveform() : x);
}

std::complex<double> CalLink::draw_output(double nu_tx, double nu_rx, Rng& rng) const {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double re = gauss(rng);
  const std::complex<double> z(noise_sd_ * re, noise_sd_ * gauss(rng));
  return std::polar(1.0, nu_rx - nu_tx) * gain_ + z * unit_;
}

}  // namespace tddsync
