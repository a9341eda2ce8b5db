// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Set TDDSYNC_ACCEPT_ONLY=3,7 to run a subset.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tddsync/calibration.hpp"
#include "tddsync/experiments.hpp"
#include "tddsync/propagation.hpp"
#include "tddsync/rng.hpp"
#include "tddsync/spectral_efficiency.hpp"
#include "tddsync/topology.hpp"
#include "tddsync/tracking.hpp"

using namespace tddsync;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double a) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Eigen::MatrixXd random_spd(int n, Rng& rng, double scale) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return scale * (a * a.transpose() / n + 0.5 * Eigen::MatrixXd::Identity(n, n));
}

const SlotTiming kTiming = SlotTiming::from_config(SystemConfig::defaults());

// ---------------------------------------------------------------------------

Verdict covariance_identities() {
  Verdict v;
  const std::vector<Edge> edges{{0, 1}};
  const std::vector<EdgeTimestamps> ts{{kTiming.i1, kTiming.i2}};
  const int half = kTiming.K / 2;
  for (double s2 : {1.0, 3.948e-4}) {
    for (int F = 1; F <= 8; ++F) {
      const UpdateInstant at = make_update_instant(kTiming.i2, F, kTiming);
      const double zeta = (8.0 * F * kTiming.tau_c - 4.0 * (kTiming.i2 - half)) * s2;
      const double xi = 2.0 * (kTiming.i1 - half) * s2;
      const Eigen::VectorXd mv = Eigen::VectorXd::Constant(1, 1e-3);
      for (CovarianceModel m : {CovarianceModel::closed_form, CovarianceModel::exact}) {
        const NoiseCovariances c = noise_covariances(edges, {0}, ts, at, s2, mv, m);
        const char* tag = m == CovarianceModel::closed_form ? "closed_form" : "exact";
        v.require(std::abs(c.sigma_zeta(0, 0) - zeta) < 1e-12 * std::max(1.0, zeta),
                  std::string(tag) + " zeta F=" + std::to_string(F));
        v.require(std::abs(c.sigma_xi(0, 0) - xi) < 1e-12 * std::max(1.0, xi),
                  std::string(tag) + " xi F=" + std::to_string(F));
      }
    }
  }
  const UpdateInstant at = make_update_instant(kTiming.i2, 1, kTiming);
  const double z1 = sigma_zeta(edges, at, 1.0)(0, 0);
  const double x1 = sigma_xi(edges, {0}, ts, at, 1.0)(0, 0);
  v.require(z1 == 432.0 && x1 == 94.0, "default-timing values");
  v.note(fmt("zeta=%g, xi=%g (units of sigma^2), F=1..8, both models", z1, x1));
  return v;
}

Verdict kalman_correctness() {
  Verdict v;
  const double z = 4e-4, a = 1e-4, m = 2e-4;
  {
    Rng rng(31);
    std::normal_distribution<double> g(0.0, 0.2);
    NoiseCovariances cov;
    cov.sigma_zeta = Eigen::MatrixXd::Constant(1, 1, z);
    cov.sigma_xi = Eigen::MatrixXd::Constant(1, 1, a);
    cov.sigma_zeta_xi = Eigen::MatrixXd::Constant(1, 1, a);
    cov.sigma_mu = Eigen::MatrixXd::Constant(1, 1, m);
    KalmanState k{Eigen::VectorXd::Constant(1, 0.1), Eigen::MatrixXd::Constant(1, 1, 0.05), 0};
    ScalarKalmanState s{0.1, 0.05 + z, 0};
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(1, 1);
    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
      const double meas = g(rng);
      k = kalman_update(k, Eigen::VectorXd::Constant(1, meas), A, cov).state;
      s = kalman_update_two_ap(s, meas, z, a, m);
      worst = std::max({worst, std::abs(k.alpha_hat(0) - s.alpha_hat), std::abs(k.P_post(0, 0) + z - s.P)});
    }
    v.require(worst < 1e-12, "M=1 vs scalar");
    v.note(fmt("M=1 vs scalar max diff %.2e", worst));
  }
  {
    Rng rng(32);
    std::normal_distribution<double> g(0.0, 0.05);
    const int M = 4;
    NoiseCovariances cov;
    cov.sigma_zeta = random_spd(M, rng, 1e-3);
    cov.sigma_xi = random_spd(M, rng, 5e-4);
    cov.sigma_mu = Eigen::MatrixXd(random_spd(M, rng, 1e-3).diagonal().asDiagonal());
    cov.sigma_zeta_xi = Eigen::MatrixXd::Zero(M, M);
    KalmanState k{Eigen::VectorXd::Zero(M), Eigen::MatrixXd::Identity(M, M) * 0.01, 0};
    oracle::KfState o{k.alpha_hat, k.P_post};
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(M, M);
    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
      Eigen::VectorXd meas(M);
      for (int i = 0; i < M; ++i) meas(i) = g(rng);
      k = kalman_update(k, meas, A, cov).state;
      o = oracle::standard_kalman(o, meas, A, cov.sigma_zeta, cov.sigma_xi + cov.sigma_mu);
      worst = std::max({worst, (k.alpha_hat - o.x).norm(), (k.P_post - o.P).norm()});
    }
    v.require(worst < 1e-10, "zero cross term vs textbook KF");
    v.note(fmt("vs textbook KF max diff %.2e", worst));
  }
  {
    ScalarKalmanState s{0.0, 1.0, 0};
    for (int n = 0; n < 1000; ++n) s = kalman_update_two_ap(s, 0.0, z, a, m);
    const double b = 2 * a - z, c = a * a - 3 * a * z - z * m;
    const double root = (-b + std::sqrt(b * b - 4 * c)) / 2;
    v.require(std::abs(s.P - root) < 1e-10, "Riccati root");
    v.note(fmt("Riccati |P - root| %.2e", std::abs(s.P - root)));
  }
  return v;
}

Verdict phase_solve() {
  Verdict v;
  Eigen::MatrixXd B2(1, 2);
  B2 << -1, 1;
  for (double alpha : {0.8, -2.5, 1e-3}) {
    const PhaseSolution s = solve_phases(Eigen::VectorXd::Constant(1, alpha), Eigen::MatrixXd::Constant(1, 1, 0.3), B2);
    v.require(s.phi_hat(0) == -alpha / 2 && s.phi_hat(1) == alpha / 2, "two-AP closed form");
  }

  Rng rng(41);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int L = t % 2 == 0 ? 3 : 5;
    Eigen::MatrixXd strength = Eigen::MatrixXd::Zero(L, L);
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j) strength(i, j) = strength(j, i) = u(rng);
    const int mmax = L * (L - 1) / 2;
    const ApGraph gr = build_graph(strength, std::min(mmax, L - 1 + static_cast<int>(rng() % L)));
    const int M = gr.num_edges();
    const Eigen::MatrixXd P = random_spd(M, rng, 0.1);
    Eigen::VectorXd al(M);
    for (int i = 0; i < M; ++i) al(i) = g(rng);
    const PhaseSolution ps = solve_phases(al, P, gr.incidence);
    worst = std::max(worst, (ps.phi_hat - oracle::gauge_wls(al, P.inverse(), gr.incidence)).norm());
  }
  v.require(worst < 1e-10, "random graphs vs WLS oracle");
  v.note(fmt("200 graphs L in {3,5}, max diff %.2e", worst));

  const ApGraph gr = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}});
  const Eigen::MatrixXd P = random_spd(6, rng, 1e-4);
  const Eigen::MatrixXd chol = P.llt().matrixL();
  const Eigen::VectorXd phi = (Eigen::VectorXd(5) << 0.3, -0.2, 0.9, -1.1, 0.4).finished();
  const Eigen::VectorXd centered = phi.array() - phi.mean();
  Eigen::MatrixXd emp = Eigen::MatrixXd::Zero(5, 5);
  Eigen::MatrixXd theory;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd w(6);
    for (int i = 0; i < 6; ++i) w(i) = g(rng);
    const Eigen::VectorXd al = gr.incidence * phi + chol * w;
    const PhaseSolution ps = solve_phases(al, P, gr.incidence);
    const Eigen::VectorXd e = ps.phi_hat - centered;
    emp += e * e.transpose();
    if (t == 0) theory = ps.error_covariance;
  }
  emp /= trials;
  const double rel = (emp - theory).norm() / theory.norm();
  v.require(rel < 0.05, "empirical covariance");
  v.note(fmt("empirical covariance rel. Frobenius error %.3f over 1e4 trials", rel));
  return v;
}

oracle::TinyInstance tiny(int N) {
  oracle::TinyInstance t;
  t.N = N;
  t.rho_ap = 2.0;
  t.rho_ue = 1.5;
  t.beta.resize(2, 2);
  t.beta << 1.0, 0.4, 0.6, 1.3;
  t.eta.resize(2, 2);
  t.eta << 0.5, 0.3, 0.5, 0.7;
  t.delta_mu.resize(2, 2);
  t.delta_mu << 0.3, -0.8, 1.1, 0.2;
  t.delta_sd.resize(2, 2);
  t.delta_sd << 0.6, 0.9, 0.4, 0.7;
  t.activity = Eigen::Vector2d(1.0, 1.0);
  return t;
}

RateInputs tiny_inputs(const oracle::TinyInstance& t) {
  RateInputs in;
  in.activity = t.activity;
  in.eta = t.eta;
  in.beta = t.beta;
  in.gamma.resize(t.K, t.L);
  for (int k = 0; k < t.K; ++k)
    for (int l = 0; l < t.L; ++l) in.gamma(k, l) = lmmse_coefficients(t.beta(k, l), t.rho_ue, t.K).gamma;
  return in;
}

// Delta = exp(j(mu + s g)), independent over (k, l): moments in closed form.
ResidualPhaseStats gaussian_stats(const RateInputs& in, const Eigen::MatrixXd& mu, const Eigen::MatrixXd& sd) {
  const int K = static_cast<int>(in.eta.rows());
  const int L = static_cast<int>(in.eta.cols());
  const int len = static_cast<int>(in.activity.cols());
  ResidualPhaseStats s;
  s.K = K;
  s.L = L;
  s.length = len;
  s.frames = 1;
  s.mean_delta.resize(static_cast<std::size_t>(K * L * len));
  s.sum_mean.assign(static_cast<std::size_t>(K * len), 0.0);
  s.sum_variance.assign(static_cast<std::size_t>(K * len), 0.0);
  for (int n = 0; n < len; ++n)
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < L; ++l) {
        const std::complex<double> m = std::polar(std::exp(-sd(k, l) * sd(k, l) / 2), mu(k, l));
        s.mean_delta[static_cast<std::size_t>((n * K + k) * L + l)] = m;
        const double a = in.activity(l, n);
        const double w = std::sqrt(in.eta(k, l) * in.gamma(k, l));
        s.sum_mean[static_cast<std::size_t>(n * K + k)] += a * w * m;
        s.sum_variance[static_cast<std::size_t>(n * K + k)] += a * a * w * w * (1 - std::norm(m));
      }
  return s;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

Verdict moment_oracles() {
  Verdict v;
  double worst = 0.0;
  for (int N : {1, 2, 4}) {
    for (double beta : {1.0, 0.3}) {
      const double rho = 1.5;
      const int K = 2;
      const double gamma = lmmse_coefficients(beta, rho, K).gamma;
      const oracle::EstimateMoments m = oracle::estimate_moments(N, beta, rho, K, 500000, 700 + N);
      const double e1 = rel_err(m.cross, N * gamma * (beta - gamma));
      const double e2 = rel_err(m.fourth, N * (N + 1) * gamma * gamma);
      v.require(e1 < 0.02, "cross moment N=" + std::to_string(N));
      v.require(e2 < 0.02, "fourth moment N=" + std::to_string(N));
      worst = std::max({worst, e1, e2});
    }
    const oracle::TinyInstance t = tiny(N);
    const RateInputs in = tiny_inputs(t);
    const ResidualPhaseStats st = gaussian_stats(in, t.delta_mu, t.delta_sd);
    for (int k = 0; k < t.K; ++k) {
      const RateTerms r = rate_terms_conjugate(in, st, 0, k, t.rho_ap, N);
      const oracle::SignalMoments mc = oracle::brute_force_moments(t, k, false, 500000, 800 + 10 * N + k);
      const double e = rel_err(mc.interference, r.interference);
      v.require(e < 0.02, "conjugate UI N=" + std::to_string(N));
      worst = std::max(worst, e);
    }
  }
  v.note(fmt("N in {1,2,4}, 5e5 draws, worst rel. error %.4f", worst));
  return v;
}

Verdict rate_oracles() {
  Verdict v;
  double worst = 0.0;
  const std::int64_t draws = 1000000;
  {
    const oracle::TinyInstance t = tiny(2);
    const RateInputs in = tiny_inputs(t);
    const ResidualPhaseStats st = gaussian_stats(in, t.delta_mu, t.delta_sd);
    for (int k = 0; k < 2; ++k) {
      const RateTerms r = rate_terms_conjugate(in, st, 0, k, t.rho_ap, t.N);
      const oracle::SignalMoments m = oracle::brute_force_moments(t, k, false, draws, 900 + k);
      for (auto [got, want, name] : {std::tuple{m.signal, r.signal, "conj DS"},
                                     std::tuple{m.uncertainty, r.uncertainty, "conj BU"},
                                     std::tuple{m.interference, r.interference, "conj UI"}}) {
        const double e = rel_err(got, want);
        v.require(e < 0.02, name);
        worst = std::max(worst, e);
      }
    }
  }
  {
    // ZF needs N > K; the smallest such instance with L = 2, K = 2 is N = 4.
    const oracle::TinyInstance t = tiny(4);
    const RateInputs in = tiny_inputs(t);
    const ResidualPhaseStats st = gaussian_stats(in, t.delta_mu, t.delta_sd);
    for (int k = 0; k < 2; ++k) {
      const RateTerms r = rate_terms_zf(in, st, 0, k, t.rho_ap, t.N, t.K);
      const oracle::SignalMoments m = oracle::brute_force_moments(t, k, true, draws, 950 + k);
      for (auto [got, want, name] : {std::tuple{m.signal, r.signal, "zf DS"},
                                     std::tuple{m.uncertainty, r.uncertainty, "zf BU"},
                                     std::tuple{m.interference, r.interference, "zf UI"}}) {
        const double e = rel_err(got, want);
        v.require(e < 0.02, name);
        worst = std::max(worst, e);
      }
    }
  }
  v.note(fmt("conj L=2,N=2,K=2; zf L=2,N=4,K=2; 1e6 draws, worst rel. error %.4f", worst));
  return v;
}

std::set<std::pair<int, int>> slot_edges(const Schedule& s, const ApGraph& g, int slot) {
  std::set<std::pair<int, int>> out;
  for (int e : s.slots[slot].measured_edges) out.insert({g.edges[e].first + 1, g.edges[e].second + 1});
  return out;
}

Verdict scheduling() {
  Verdict v;
  Rng rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int t = 0; t < 500; ++t) {
    const int L = 2 + static_cast<int>(rng() % 15);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(L, L);
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j) m(i, j) = m(j, i) = u(rng);
    const int mmax = L * (L - 1) / 2;
    const ApGraph g = build_graph(m, std::min(mmax, L - 1 + static_cast<int>(rng() % (2 * L))));
    const Coloring c = distance2_coloring(g);
    SystemConfig cfg = SystemConfig::defaults();
    cfg.L = L;
    const Schedule s = build_schedule(g, c, cfg);
    bool ok = is_valid_distance2_coloring(g, c) && s.num_measurement_slots() == c.num_colors - 1;
    std::set<int> covered;
    for (const MeasurementSlot& slot : s.slots) {
      covered.insert(slot.measured_edges.begin(), slot.measured_edges.end());
      for (std::size_t a = 0; a < slot.masters.size(); ++a)
        for (std::size_t b = a + 1; b < slot.masters.size(); ++b) {
          const int x = slot.masters[a], y = slot.masters[b];
          if (g.adjacent(x, y)) ok = false;
          for (int nb : g.neighbors[x])
            if (g.adjacent(nb, y)) ok = false;
        }
    }
    ok = ok && static_cast<int>(covered.size()) == g.num_edges();
    if (!ok) ++violations;
  }
  v.require(violations == 0, std::to_string(violations) + " of 500 graphs violate");

  // Five-AP example: edges 12, 23, 34, 41, 25, 13.
  const ApGraph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {1, 4}, {0, 2}});
  const Coloring c = distance2_coloring(g);
  SystemConfig cfg = SystemConfig::defaults();
  cfg.L = 5;
  const Schedule s = build_schedule(g, c, cfg);
  using Set = std::set<std::pair<int, int>>;
  const bool example = c.num_colors == 4 && s.num_measurement_slots() == 3 &&
                       slot_edges(s, g, 0) == Set{{1, 4}, {2, 5}, {3, 4}} &&
                       slot_edges(s, g, 1) == Set{{1, 2}, {2, 3}, {2, 5}} &&
                       slot_edges(s, g, 2) == Set{{1, 3}, {2, 3}, {3, 4}};
  v.require(example, "five-AP example schedule");
  v.note("500 random graphs, 0 violations required; five-AP example n_c=" + std::to_string(c.num_colors));
  return v;
}

// Per-trial UE-averaged SE, in trial order.
std::vector<double> per_trial(const ResultTable& t, const GridPoint& p, Method m, Beamformer b, int K) {
  const std::vector<double> all = select(t, p, m, b);
  std::vector<double> out(all.size() / static_cast<std::size_t>(K), 0.0);
  for (std::size_t i = 0; i < all.size(); ++i) out[i / static_cast<std::size_t>(K)] += all[i] / K;
  return out;
}

// Mean and standard error of the paired difference a - b.
SummaryRow paired(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return summarize_mean(d);
}

SystemConfig desk_base(int trials) {
  SystemConfig c = SystemConfig::defaults();
  c.trials = trials;
  c.master_seed = 20240601;
  return c;
}

Verdict fig4_ordering() {
  Verdict v;
  const SystemConfig base = desk_base(50);
  Scenario sc = default_scenario(ScenarioKind::cdf_two_ap, base);
  const ResultTable t = run_scenario(base, sc, 0);
  const GridPoint p = sc.grid.front();
  const int K = base.K;
  const auto nopn = per_trial(t, p, Method::no_phase_noise, Beamformer::zf, K);
  const auto kal = per_trial(t, p, Method::kalman, Beamformer::zf, K);
  const auto one = per_trial(t, p, Method::single_ap, Beamformer::zf, K);
  const auto kal_conj = per_trial(t, p, Method::kalman, Beamformer::conj, K);
  struct Gap {
    const char* name;
    SummaryRow d;
  };
  for (const Gap& g : {Gap{"noPN-kalman", paired(nopn, kal)}, Gap{"kalman-singleAP", paired(kal, one)},
                       Gap{"zf-conj", paired(kal, kal_conj)}}) {
    v.require(g.d.mean > 2 * g.d.sem, std::string(g.name) + " gap not above 2 SE");
    v.note(std::string(g.name) + fmt(" %.3f (SE %.3f)", g.d.mean, g.d.sem));
  }
  v.note(fmt("means zf noPN %.3f, kalman %.3f", summarize_mean(nopn).mean, summarize_mean(kal).mean) +
         fmt(", singleAP %.3f, conj kalman %.3f", summarize_mean(one).mean, summarize_mean(kal_conj).mean));
  return v;
}

Verdict fig6_monotonicity() {
  Verdict v;
  const SystemConfig base = desk_base(30);
  Scenario sc = default_scenario(ScenarioKind::se_vs_pn_level, base);
  sc.grid.clear();
  for (int L : {2, 4})
    for (double s : {-120.0, -100.0, -80.0}) sc.grid.push_back({L, s, 0});
  sc.methods = {Method::kalman, Method::direct};
  sc.beamformers = {Beamformer::zf};
  const ResultTable t = run_scenario(base, sc, 0);
  for (int L : {2, 4}) {
    for (Method m : {Method::kalman, Method::direct}) {
      std::vector<double> means;
      for (double s : {-120.0, -100.0, -80.0}) means.push_back(summarize_mean(select(t, {L, s, 0}, m, Beamformer::zf)).mean);
      const bool mono = means[0] >= means[1] && means[1] >= means[2];
      if (m == Method::kalman) v.require(mono, "kalman L=" + std::to_string(L) + " not non-increasing");
      v.note(std::string(to_string(m)) + " L=" + std::to_string(L) +
             fmt(" %.4f/%.4f", means[0], means[1]) + fmt("/%.4f", means[2]));
    }
  }
  const double kal = summarize_mean(select(t, {4, -80.0, 0}, Method::kalman, Beamformer::zf)).mean;
  const double dir = summarize_mean(select(t, {4, -80.0, 0}, Method::direct, Beamformer::zf)).mean;
  v.require(kal >= dir, "kalman < direct at L=4, -80");
  return v;
}

Verdict fig7_tradeoff() {
  Verdict v;
  const SystemConfig base = desk_base(30);
  Scenario sc = default_scenario(ScenarioKind::se_vs_num_aps, base);
  sc.beamformers = {Beamformer::zf};
  const ResultTable t = run_scenario(base, sc, 0);
  double best = -1.0, at16 = 0.0;
  int best_L = 0;
  std::string curve;
  for (const GridPoint& p : sc.grid) {
    const double m = summarize_mean(select(t, p, Method::kalman, Beamformer::zf)).mean;
    curve += (curve.empty() ? "" : " ") + std::to_string(p.L) + fmt(":%.3f", m);
    if (p.L == 16) {
      at16 = m;
    } else if (m > best) {
      best = m;
      best_L = p.L;
    }
  }
  v.require(best > at16, "no L < 16 beats L = 16");
  v.note("L*=" + std::to_string(best_L) + fmt(" SE %.3f vs SE(16) %.3f", best, at16));
  v.note("curve " + curve);
  return v;
}

Verdict gauge_and_determinism() {
  Verdict v;
  // Common phase error on the known inter-AP channel.
  {
    Rng rng(10);
    const Eigen::VectorXcd flat = complex_gaussian(16, 1.0, rng);
    const Eigen::MatrixXcd g21 = Eigen::Map<const Eigen::MatrixXcd>(flat.data(), 4, 4);
    const Eigen::MatrixXcd g12 = g21.transpose();
    auto measure = [&](std::complex<double> rot, std::uint64_t seed) {
      Rng r(seed);
      const CalSignal s1 = make_cal_signal(0, {1}, {Eigen::MatrixXcd(rot * g21)}, 10.0);
      const CalSignal s2 = make_cal_signal(1, {0}, {Eigen::MatrixXcd(rot * g12)}, 10.0);
      const DirectionalMeasurement f = simulate_directional_measurement(s1, 1, g21, rot * g21, 0.2, 0.9, r);
      const DirectionalMeasurement b = simulate_directional_measurement(s2, 0, g12, rot * g12, 0.9, 0.2, r);
      MeasurementRecord rec;
      rec.alpha_fwd = f.alpha_bar;
      rec.alpha_bwd = b.alpha_bar;
      rec.out_fwd = f.matched_output;
      rec.out_bwd = b.matched_output;
      // The link path used inside a trial, continuing the same stream.
      const CalLink lf(s1, 1, g21, rot * g21, VarianceSignal::per_direction);
      const CalLink lb(s2, 0, g12, rot * g12, VarianceSignal::per_direction);
      MeasurementRecord link;
      link.out_fwd = lf.draw_output(0.3, -0.4, r);
      link.out_bwd = lb.draw_output(-0.4, 0.3, r);
      return std::pair{bidirectional_difference(rec), bidirectional_difference(link)};
    };
    // Rotations by -1 and j are exact in floating point, so the measurement
    // must not move at all; other angles round when forming rot * G.
    bool exact = true;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      const auto ref = measure(1.0, seed);
      for (std::complex<double> rot : {std::complex<double>(-1.0, 0.0), std::complex<double>(0.0, 1.0),
                                       std::complex<double>(0.0, -1.0)})
        exact = exact && measure(rot, seed) == ref;
      for (double angle : {1.234, -2.9, 0.01}) {
        const auto got = measure(std::polar(1.0, angle), seed);
        worst = std::max({worst, std::abs(wrap(got.first - ref.first)), std::abs(wrap(got.second - ref.second))});
      }
    }
    v.require(exact, "G shift by -1 or +-j changes the bidirectional measurement");
    v.require(worst < 1e-12, "G shift by an arbitrary angle moves the measurement beyond rounding");
    v.note(std::string("G shift: -1/+-j ") + (exact ? "bit-identical" : "NOT bit-identical") +
           fmt(", arbitrary angles max diff %.1e", worst));
  }
  // Common shift of theta and -psi through Delta statistics and SE.
  {
    SystemConfig c = SystemConfig::defaults();
    c.K = 2;
    c.N = 4;
    const oracle::TinyInstance t = tiny(4);
    RateInputs in = tiny_inputs(t);
    in.activity = activity_mask(c, 2, 1, nullptr);
    const int len = static_cast<int>(in.activity.cols());
    Rng rng(4);
    const int frames = 20;
    const PhaseTrajectory tr = advance_phase(initial_trajectory(2, 1e-4, rng), std::int64_t{frames} * len + 1, rng);
    const Eigen::MatrixXd w = (in.eta.array() * in.gamma.array()).sqrt().matrix();
    auto se_for = [&](const CompensationState& comp, Beamformer bf) {
      DeltaAccumulator acc(2, 2, len, w, in.activity);
      Eigen::MatrixXcd delta(2, 2);
      for (int f = 0; f < frames; ++f) {
        acc.begin_frame();
        for (int n = 0; n < len; ++n) {
          const std::int64_t i = std::int64_t{f} * len + n + 1;
          for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l) delta(k, l) = residual_phase(tr, comp, i, k + 1, l, c.tau_c);
          acc.add(n, delta);
        }
      }
      return evaluate_se(in, acc.finish(), bf, t.rho_ap, t.N).se;
    };
    CompensationState a, b;
    a.theta = Eigen::Vector2d(0.25, -0.5);
    a.psi = Eigen::Vector2d(0.125, 0.375);
    b.theta = a.theta.array() + 0.5;
    b.psi = a.psi.array() - 0.5;
    for (Beamformer bf : {Beamformer::conj, Beamformer::zf})
      v.require(se_for(a, bf) == se_for(b, bf), std::string("SE changes under theta/-psi shift, ") + to_string(bf));
    v.note("theta/-psi shift: SE bit-identical");
  }
  // Same seed, same CSV; thread count does not matter.
  {
    SystemConfig c = SystemConfig::defaults();
    c.N = 8;
    c.K = 4;
    c.tau_p = 4;
    c.tau_u = 45;
    c.tau_d = 45;
    c.trials = 2;
    c.frames_per_trial = 20;
    c.master_seed = 11;
    Scenario sc = default_scenario(ScenarioKind::custom, c);
    sc.grid = {{2, -90.0, 0}, {3, -80.0, 0}};
    sc.methods = {Method::no_phase_noise, Method::kalman, Method::direct, Method::single_ap};
    std::string first;
    for (int threads : {1, 1, 2}) {
      std::ostringstream out;
      const ResultTable r = run_scenario(c, sc, threads);
      write_results_csv(out, r);
      write_summary_csv(out, r);
      write_cdf_csv(out, r);
      if (first.empty())
        first = out.str();
      else
        v.require(out.str() == first, "CSV differs between runs (threads=" + std::to_string(threads) + ")");
    }
    v.note("CSV identical across 3 runs");
  }
  return v;
}

}  // namespace

int main() {
  std::set<int> only;
  if (const char* env = std::getenv("TDDSYNC_ACCEPT_ONLY")) {
    std::stringstream ss(env);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) only.insert(std::stoi(tok));
  }
  const std::vector<std::function<Verdict()>> criteria{
      covariance_identities, kalman_correctness, phase_solve,       moment_oracles,    rate_oracles,
      scheduling,            fig4_ordering,      fig6_monotonicity, fig7_tradeoff,     gauge_and_determinism};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s (%.1f s) %s\n", id, v.pass ? "PASS" : "FAIL", secs, v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
