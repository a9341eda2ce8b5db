#include "tddsync/core_model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tddsync/error.hpp"

namespace tddsync {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_config: return "invalid-config";
    case ErrorKind::config_parse: return "config-parse";
    case ErrorKind::placement_infeasible: return "placement-infeasible";
    case ErrorKind::covariance: return "covariance";
    case ErrorKind::degenerate_channel: return "degenerate-channel";
    case ErrorKind::measurement_degenerate: return "measurement-degenerate";
    case ErrorKind::schedule_incomplete: return "schedule-incomplete";
    case ErrorKind::filter_singular: return "filter-singular";
    case ErrorKind::unsolvable: return "unsolvable";
    case ErrorKind::statistics_unstable: return "statistics-unstable";
  }
  return "unknown";
}

double normalized_power(double milliwatts, double noise_dbm) {
  const double dbm = 10.0 * std::log10(milliwatts);
  return std::pow(10.0, (dbm - noise_dbm) / 10.0);
}

SystemConfig SystemConfig::defaults() {
  SystemConfig c;
  c.rho_ue = normalized_power(100.0, -94.0);
  c.rho_ap = normalized_power(200.0, -94.0);
  return c;
}

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw Error(ErrorKind::invalid_config, field + ": " + why);
}

}  // namespace

void SystemConfig::validate() const {
  require(L >= 1, "L", "must be at least 1");
  require(N >= 1, "N", "must be at least 1");
  require(K >= 1, "K", "must be at least 1");
  require(tau_p == K, "tau_p", "must equal K (one orthogonal pilot per UE)");
  require(tau_g >= 0 && tau_u >= 0 && tau_d >= 1, "tau_d", "periods must be non-negative");
  require(tau_p + tau_u + tau_d + 2 * tau_g == tau_c, "tau_c",
          "tau_p + tau_u + tau_d + 2 tau_g must equal tau_c");
  require(K / 2 >= 1, "K", "mid pilot floor(K/2) must be a valid pilot index");
  require(F >= 0, "F", "must be non-negative");
  require(unbroken_slots >= 0, "unbroken_slots", "must be non-negative");
  require(rho_ap > 0.0, "rho_ap", "must be positive");
  require(rho_ue > 0.0, "rho_ue", "must be positive");
  require(f_c > 0.0, "f_c", "must be positive");
  require(f_s > 0.0, "f_s", "must be positive");
  require(delta_f > 0.0, "delta_f", "must be positive");
  require(!sigma_nu_sq_override || *sigma_nu_sq_override >= 0.0, "sigma_nu_sq_override",
          "must be non-negative");
  require(m_min >= 0, "m_min", "must be non-negative");
  require(L < 2 || m_min <= L * (L - 1) / 2, "m_min", "exceeds the number of AP pairs");
  require(area_side > 0.0, "area_side", "must be positive");
  require(min_ap_separation >= 0.0, "min_ap_separation", "must be non-negative");
  require(trials >= 1, "trials", "must be at least 1");
  require(frames_per_trial >= 1, "frames_per_trial", "must be at least 1");
  require(warmup_frames >= 1, "warmup_frames", "must be at least 1");
}

SlotTiming SlotTiming::from_config(const SystemConfig& c) {
  SlotTiming t;
  t.tau_c = c.tau_c;
  t.K = c.K;
  t.i1 = c.tau_p + c.tau_u;
  t.i2 = c.tau_p + c.tau_u + c.tau_g + c.tau_d;
  t.mid_pilot = c.K / 2;
  t.dl_start = c.tau_p + c.tau_u + c.tau_g + 1;
  t.dl_end = c.tau_p + c.tau_u + c.tau_g + c.tau_d;
  // The master moves the last tau_g + 1 uplink samples to the end of the slot.
  t.master_dl_start = t.dl_start - (c.tau_g + 1);
  t.master_dl_end = t.dl_end - (c.tau_g + 1);
  return t;
}

double compute_sigma_nu_sq(const SystemConfig& config) {
  if (config.sigma_nu_sq_override) return *config.sigma_nu_sq_override;
  if (!(config.f_s > 0.0) || !(config.f_c > 0.0))
    throw Error(ErrorKind::invalid_config, "f_s and f_c must be positive");
  const double s_linear = std::pow(10.0, config.s_pn_dbc_hz / 10.0);
  const double c_nu = 2.0 * s_linear * config.delta_f * config.delta_f / config.f_c;
  constexpr double pi = std::numbers::pi;
  return 4.0 * pi * pi * config.f_c * config.f_c * c_nu / config.f_s;
}

double sigma_nu_sq_from_spectrum_level(double s_pn_dbc_hz, double delta_f, double f_s) {
  constexpr double pi = std::numbers::pi;
  const double s_linear = std::pow(10.0, s_pn_dbc_hz / 10.0);
  return 8.0 * pi * pi * s_linear * delta_f * delta_f / f_s;
}

PhaseTrajectory initial_trajectory(int num_aps, double sigma_nu_sq, Rng& rng) {
  std::uniform_real_distribution<double> start(-std::numbers::pi, std::numbers::pi);
  PhaseTrajectory traj;
  traj.sigma_nu_sq = sigma_nu_sq;
  traj.nu.resize(static_cast<std::size_t>(num_aps));
  for (auto& seq : traj.nu) seq.push_back(start(rng));
  return traj;
}

PhaseTrajectory advance_phase(PhaseTrajectory traj, std::int64_t steps, Rng& rng) {
  if (steps <= 0) return traj;
  const double sd = std::sqrt(traj.sigma_nu_sq);
  std::normal_distribution<double> increment(0.0, 1.0);
  // AP-major so that each AP's stream depends only on the rng state and its
  // position in the loop.
  for (auto& seq : traj.nu) {
    seq.reserve(seq.size() + static_cast<std::size_t>(steps));
    double current = seq.back();
    for (std::int64_t s = 0; s < steps; ++s) {
      current += sd * increment(rng);
      seq.push_back(current);
    }
  }
  return traj;
}

std::int64_t latest_pilot_index(std::int64_t i, int k, int tau_c) {
  const std::int64_t arg = i - 1 - k;
  std::int64_t m = arg % tau_c;
  if (m < 0) m += tau_c;
  const std::int64_t idx = i - 1 - m;
  return idx < 1 ? k : idx;
}

double wrap(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double m = std::fmod(angle + std::numbers::pi, two_pi);
  if (m < 0.0) m += two_pi;
  if (m >= two_pi) m -= two_pi;
  return m - std::numbers::pi;
}

}  // namespace tddsync
