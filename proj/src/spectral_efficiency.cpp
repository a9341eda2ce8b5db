#include "tddsync/spectral_efficiency.hpp"

#include <algorithm>
#include <iomanip>
#include <cmath>
#include <numeric>

#include "tddsync/error.hpp"

namespace tddsync {

const char* to_string(Beamformer b) { return b == Beamformer::conj ? "conj" : "zf"; }

Eigen::MatrixXd downlink_power_allocation(const Eigen::MatrixXd& beta) {
  Eigen::MatrixXd eta = beta.cwiseSqrt();
  for (Eigen::Index l = 0; l < eta.cols(); ++l) {
    const double total = eta.col(l).sum();
    if (total > 0.0) eta.col(l) /= total;
  }
  return eta;
}

std::complex<double> residual_phase(const PhaseTrajectory& traj, const CompensationState& comp,
                                    std::int64_t i, int k, int l, int tau_c) {
  const std::int64_t pilot = latest_pilot_index(i, k, tau_c);
  // Compensation terms first, so a common shift of theta and -psi cancels exactly.
  const double angle = (comp.theta(l) + comp.psi(k - 1)) - traj.at(l, i) - traj.at(l, pilot);
  return std::polar(1.0, angle);
}

Eigen::MatrixXd activity_mask(const SystemConfig& config, int num_aps, int frame_slots,
                              const Schedule* schedule) {
  const SlotTiming t = SlotTiming::from_config(config);
  const int tau_c = config.tau_c;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(num_aps, static_cast<Eigen::Index>(frame_slots) * tau_c);
  for (int s = 1; s <= frame_slots; ++s) {
    const int base = (s - 1) * tau_c;  // column of within-slot sample j is base + j - 1
    const MeasurementSlot* slot = nullptr;
    if (schedule) {
      const int idx = schedule->measurement_slot_at(s);
      if (idx > 0) slot = &schedule->slots[static_cast<std::size_t>(idx - 1)];
    }
    for (int l = 0; l < num_aps; ++l) {
      const bool master =
          slot && std::find(slot->masters.begin(), slot->masters.end(), l) != slot->masters.end();
      if (master) {
        for (int j = t.master_dl_start; j <= t.master_dl_end; ++j)
          if (j != t.i1) a(l, base + j - 1) = 1.0;
        continue;
      }
      for (int j = t.dl_start; j <= t.dl_end; ++j) a(l, base + j - 1) = 1.0;
      if (slot) {
        for (const Transmission& tx : slot->transmissions)
          if (!tx.at_i1 && tx.tx == l) a(l, base + t.i2 - 1) = 0.0;
      }
    }
  }
  return a;
}

double ue_phase_compensation(const std::vector<std::complex<double>>& pilot_terms,
                             CompensationPolicy policy, Rng& rng, double noise_variance) {
  std::complex<double> r = std::accumulate(pilot_terms.begin(), pilot_terms.end(),
                                           std::complex<double>(0.0, 0.0));
  if (policy == CompensationPolicy::pilot && noise_variance > 0.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sd = std::sqrt(noise_variance / 2.0);
    const double re = gauss(rng);
    r += std::complex<double>(sd * re, sd * gauss(rng));
  }
  return -std::arg(r);
}

ResidualPhaseStats ResidualPhaseStats::ideal(int K, int L, int length,
                                             const Eigen::MatrixXd& weights,
                                             const Eigen::MatrixXd& activity) {
  ResidualPhaseStats s;
  s.K = K;
  s.L = L;
  s.length = length;
  s.frames = 1;
  s.mean_delta.assign(static_cast<std::size_t>(K * L * length), {1.0, 0.0});
  s.sum_mean.assign(static_cast<std::size_t>(K * length), {0.0, 0.0});
  s.sum_variance.assign(static_cast<std::size_t>(K * length), 0.0);
  for (int n = 0; n < length; ++n)
    for (int k = 0; k < K; ++k) {
      double total = 0.0;
      for (int l = 0; l < L; ++l) total += activity(l, n) * weights(k, l);
      s.sum_mean[static_cast<std::size_t>(n * K + k)] = total;
    }
  return s;
}

DeltaAccumulator::DeltaAccumulator(int K, int L, int length, Eigen::MatrixXd weights,
                                   Eigen::MatrixXd activity, bool retain_samples)
    : K_(K), L_(L), length_(length), weights_(std::move(weights)), activity_(std::move(activity)),
      retain_(retain_samples),
      delta_sum_(static_cast<std::size_t>(K * L * length), {0.0, 0.0}),
      s_mean_(static_cast<std::size_t>(K * length), {0.0, 0.0}),
      s_m2_(static_cast<std::size_t>(K * length), 0.0),
      s_count_(static_cast<std::size_t>(K * length), 0) {}

void DeltaAccumulator::begin_frame() {
  ++frames_;
  if (retain_)
    samples_.emplace_back(static_cast<std::size_t>(K_ * L_ * length_), std::complex<double>(0.0, 0.0));
}

void DeltaAccumulator::add(int n, const Eigen::MatrixXcd& delta) {
  for (int k = 0; k < K_; ++k) {
    std::complex<double> s(0.0, 0.0);
    for (int l = 0; l < L_; ++l) {
      const std::size_t idx = static_cast<std::size_t>((n * K_ + k) * L_ + l);
      delta_sum_[idx] += delta(k, l);
      if (retain_) samples_.back()[idx] = delta(k, l);
      s += activity_(l, n) * weights_(k, l) * delta(k, l);
    }
    const std::size_t j = static_cast<std::size_t>(n * K_ + k);
    const int count = ++s_count_[j];
    const std::complex<double> before = s - s_mean_[j];
    s_mean_[j] += before / static_cast<double>(count);
    s_m2_[j] += std::real(std::conj(before) * (s - s_mean_[j]));
  }
}

ResidualPhaseStats DeltaAccumulator::finish(int min_frames) const {
  if (frames_ < min_frames)
    throw Error(ErrorKind::statistics_unstable,
                "only " + std::to_string(frames_) + " frames accumulated, need " +
                    std::to_string(min_frames));
  ResidualPhaseStats s;
  s.K = K_;
  s.L = L_;
  s.length = length_;
  s.frames = frames_;
  s.mean_delta.resize(delta_sum_.size());
  for (std::size_t i = 0; i < delta_sum_.size(); ++i)
    s.mean_delta[i] = delta_sum_[i] / static_cast<double>(frames_);
  s.sum_mean = s_mean_;
  s.sum_variance.resize(s_m2_.size());
  for (std::size_t j = 0; j < s_m2_.size(); ++j)
    s.sum_variance[j] = s_count_[j] > 0 ? std::max(0.0, s_m2_[j] / s_count_[j]) : 0.0;
  s.samples = samples_;
  return s;
}

namespace {

bool any_active(const RateInputs& in, int n) { return in.activity.col(n).any(); }

double interference_term(const RateInputs& in, int n, int k, bool subtract_gamma) {
  double total = 0.0;
  for (Eigen::Index l = 0; l < in.activity.rows(); ++l) {
    if (in.activity(l, n) == 0.0) continue;
    const double gain = subtract_gamma ? in.beta(k, l) - in.gamma(k, l) : in.beta(k, l);
    total += in.activity(l, n) * gain * in.eta.col(l).sum();
  }
  return total;
}

}  // namespace

double RateTerms::rate() const {
  return std::log2(1.0 + signal / (uncertainty + interference + 1.0));
}

RateTerms rate_terms_conjugate(const RateInputs& in, const ResidualPhaseStats& stats, int n, int k,
                               double rho_ap, int N) {
  RateTerms t;
  if (!any_active(in, n)) return t;
  std::complex<double> ds(0.0, 0.0);
  double bu = 0.0;
  double own = 0.0;  // k' = k share of the beta-weighted sum, part of the gain uncertainty
  for (Eigen::Index l = 0; l < in.activity.rows(); ++l) {
    const double a = in.activity(l, n);
    if (a == 0.0) continue;
    const std::complex<double> m = stats.mean(n, k, static_cast<int>(l));
    const double eg = in.eta(k, l) * in.gamma(k, l);
    ds += a * std::sqrt(eg) * m;
    bu += a * eg * (1.0 - std::norm(m));
    own += a * in.eta(k, l) * in.beta(k, l);
  }
  t.signal = N * rho_ap * std::norm(ds);
  t.uncertainty = N * rho_ap * bu + rho_ap * own;
  t.interference = rho_ap * (interference_term(in, n, k, false) - own);
  return t;
}

RateTerms rate_terms_zf(const RateInputs& in, const ResidualPhaseStats& stats, int n, int k,
                        double rho_ap, int N, int K) {
  if (N <= K) throw Error(ErrorKind::invalid_config, "zero-forcing needs N > K");
  RateTerms t;
  if (!any_active(in, n)) return t;
  std::complex<double> ds(0.0, 0.0);
  for (Eigen::Index l = 0; l < in.activity.rows(); ++l) {
    const double a = in.activity(l, n);
    if (a == 0.0) continue;
    ds += a * std::sqrt(in.eta(k, l) * in.gamma(k, l)) * stats.mean(n, k, static_cast<int>(l));
  }
  const double gain = static_cast<double>(N - K) * rho_ap;
  t.signal = gain * std::norm(ds);
  t.uncertainty = gain * stats.sum_variance[static_cast<std::size_t>(n * stats.K + k)];
  t.interference = rho_ap * interference_term(in, n, k, true);
  return t;
}

double rate_conjugate(const RateInputs& in, const ResidualPhaseStats& stats, int n, int k,
                      double rho_ap, int N) {
  return rate_terms_conjugate(in, stats, n, k, rho_ap, N).rate();
}

double rate_zf(const RateInputs& in, const ResidualPhaseStats& stats, int n, int k, double rho_ap,
               int N, int K) {
  return rate_terms_zf(in, stats, n, k, rho_ap, N, K).rate();
}

double spectral_efficiency(const std::vector<double>& rates) {
  if (rates.empty()) return 0.0;
  return std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
}

SeResult evaluate_se(const RateInputs& in, const ResidualPhaseStats& stats, Beamformer bf,
                     double rho_ap, int N) {
  const int K = static_cast<int>(in.eta.rows());
  const int len = static_cast<int>(in.activity.cols());
  SeResult out;
  out.rates.resize(K, len);
  out.se.resize(K);
  for (int k = 0; k < K; ++k) {
    std::vector<double> r(static_cast<std::size_t>(len));
    for (int n = 0; n < len; ++n) {
      r[static_cast<std::size_t>(n)] = bf == Beamformer::conj
                                           ? rate_conjugate(in, stats, n, k, rho_ap, N)
                                           : rate_zf(in, stats, n, k, rho_ap, N, K);
      out.rates(k, n) = r[static_cast<std::size_t>(n)];
    }
    out.se(k) = spectral_efficiency(r);
  }
  return out;
}

void write_rates_csv(std::ostream& out, Beamformer bf, const SeResult& r, bool header) {
  if (header) out << "beamformer,ue,n,rate\n";
  out << std::setprecision(17);
  for (Eigen::Index k = 0; k < r.rates.rows(); ++k)
    for (Eigen::Index n = 0; n < r.rates.cols(); ++n)
      out << to_string(bf) << ',' << k << ',' << n + 1 << ',' << r.rates(k, n) << '\n';
}

void write_se_csv(std::ostream& out, Beamformer bf, const SeResult& r, bool header) {
  if (header) out << "beamformer,ue,se\n";
  out << std::setprecision(17);
  for (Eigen::Index k = 0; k < r.se.size(); ++k) out << to_string(bf) << ',' << k << ',' << r.se(k) << '\n';
}

}  // namespace tddsync
