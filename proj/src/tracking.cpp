#include "tddsync/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>

#include "tddsync/error.hpp"

namespace tddsync {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// sign * sum of the increments delta_{ap,t} for t in (lo, hi].
struct SignedSpan {
  int ap;
  double sign;
  std::int64_t lo;
  std::int64_t hi;
};

using SpanSum = std::vector<SignedSpan>;

double overlap(const SignedSpan& a, const SignedSpan& b) {
  if (a.ap != b.ap) return 0.0;
  const std::int64_t len = std::min(a.hi, b.hi) - std::max(a.lo, b.lo);
  return len > 0 ? a.sign * b.sign * static_cast<double>(len) : 0.0;
}

double covariance(const SpanSum& x, const SpanSum& y) {
  double c = 0.0;
  for (const auto& a : x)
    for (const auto& b : y) c += overlap(a, b);
  return c;
}

// nu(to) - nu(from) as a signed span.
SignedSpan difference(int ap, double sign, std::int64_t to, std::int64_t from) {
  return to >= from ? SignedSpan{ap, sign, from, to} : SignedSpan{ap, -sign, to, from};
}

// alpha(i) - alpha(i - d tau_c) for one edge.
SpanSum zeta_spans(const Edge& e, const UpdateInstant& at) {
  const std::int64_t back = static_cast<std::int64_t>(at.d) * at.tau_c;
  SpanSum out;
  for (auto [ap, s] : {std::pair{e.second, 1.0}, std::pair{e.first, -1.0}}) {
    out.push_back({ap, s, at.i - back, at.i});
    out.push_back({ap, s, at.i_mid - back, at.i_mid});
  }
  return out;
}

// Measured bidirectional quantity minus alpha(i).
SpanSum xi_spans(const Edge& e, const EdgeTimestamps& ts, const UpdateInstant& at) {
  SpanSum out;
  for (auto [ap, s] : {std::pair{e.second, 1.0}, std::pair{e.first, -1.0}}) {
    out.push_back(difference(ap, s, ts.minus(), at.i_mid));
    out.push_back(difference(ap, s, ts.plus(), at.i));
  }
  return out;
}

double pos(double x) { return std::max(0.0, x); }

}  // namespace

int varsigma(const Edge& a, const Edge& b) {
  if (a.first == b.first || a.second == b.second) return 1;
  if (a.first == b.second || a.second == b.first) return -1;
  return 0;
}

UpdateInstant make_update_instant(std::int64_t i, int d, const SlotTiming& timing) {
  UpdateInstant at;
  at.i = i;
  at.d = d;
  at.tau_c = timing.tau_c;
  at.i_mid = latest_pilot_index(i, timing.mid_pilot, timing.tau_c);
  return at;
}

double closed_form_zeta_variance(const UpdateInstant& at, double s2) {
  const double span = static_cast<double>(at.i - at.i_mid);
  return 2.0 * (4.0 * at.d * at.tau_c - 2.0 * span) * s2;
}

double closed_form_xi_variance(const EdgeTimestamps& ts, const UpdateInstant& at, double s2) {
  const double im = static_cast<double>(at.i_mid);
  return 2.0 * (static_cast<double>(at.i - ts.plus()) + std::abs(im - ts.minus())) * s2;
}

double closed_form_zeta_xi(const EdgeTimestamps& ts, const UpdateInstant& at, double s2) {
  const double i = static_cast<double>(at.i);
  const double im = static_cast<double>(at.i_mid);
  const double lo = static_cast<double>(ts.minus());
  const double hi = static_cast<double>(ts.plus());
  const double bracket = (i - std::max(hi, im)) + 2.0 * pos(std::min(hi, im) - lo) -
                         pos(lo - im) + 4.0 * pos(im - hi);
  return -2.0 * bracket * s2;
}

Eigen::MatrixXd sigma_zeta(const std::vector<Edge>& edges, const UpdateInstant& at, double s2) {
  const auto m = static_cast<Eigen::Index>(edges.size());
  const double diag = closed_form_zeta_variance(at, s2);
  Eigen::MatrixXd out(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b)
      out(a, b) = a == b ? diag : varsigma(edges[a], edges[b]) * diag / 2.0;
  return out;
}

Eigen::MatrixXd sigma_xi(const std::vector<Edge>& edges, const std::vector<int>& measured,
                         const std::vector<EdgeTimestamps>& ts, const UpdateInstant& at,
                         double s2) {
  const auto mn = static_cast<Eigen::Index>(measured.size());
  Eigen::MatrixXd out(mn, mn);
  for (Eigen::Index r = 0; r < mn; ++r) {
    for (Eigen::Index c = 0; c < mn; ++c) {
      const int ea = measured[r];
      const int eb = measured[c];
      if (r == c) {
        out(r, c) = closed_form_xi_variance(ts[ea], at, s2);
        continue;
      }
      const int sign = varsigma(edges[ea], edges[eb]);
      if (sign == 0) {
        out(r, c) = 0.0;
        continue;
      }
      const EdgeTimestamps& a = ts[ea].plus() >= ts[eb].plus() ? ts[ea] : ts[eb];
      const double newest_minus = static_cast<double>(std::max(ts[ea].minus(), ts[eb].minus()));
      out(r, c) = sign *
                  (static_cast<double>(at.i - a.plus()) +
                   pos(static_cast<double>(at.i_mid) - newest_minus)) *
                  s2;
    }
  }
  return out;
}

Eigen::MatrixXd sigma_zeta_xi(const std::vector<Edge>& edges, const std::vector<int>& measured,
                              const std::vector<EdgeTimestamps>& ts, const UpdateInstant& at,
                              double s2) {
  const auto m = static_cast<Eigen::Index>(edges.size());
  const auto mn = static_cast<Eigen::Index>(measured.size());
  Eigen::MatrixXd out(m, mn);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < mn; ++c) {
      const int eb = measured[c];
      const double col = closed_form_zeta_xi(ts[eb], at, s2);
      out(r, c) = r == eb ? col : varsigma(edges[r], edges[eb]) * col / 2.0;
    }
  }
  return out;
}

NoiseCovariances exact_noise_covariances(const std::vector<Edge>& edges,
                                         const std::vector<int>& measured,
                                         const std::vector<EdgeTimestamps>& ts,
                                         const UpdateInstant& at, double s2) {
  const auto m = static_cast<Eigen::Index>(edges.size());
  const auto mn = static_cast<Eigen::Index>(measured.size());
  std::vector<SpanSum> zeta;
  for (const Edge& e : edges) zeta.push_back(zeta_spans(e, at));
  std::vector<SpanSum> xi;
  for (int e : measured) xi.push_back(xi_spans(edges[e], ts[e], at));

  NoiseCovariances cov;
  cov.sigma_zeta.resize(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a; b < m; ++b)
      cov.sigma_zeta(a, b) = cov.sigma_zeta(b, a) = covariance(zeta[a], zeta[b]) * s2;
  cov.sigma_xi.resize(mn, mn);
  for (Eigen::Index a = 0; a < mn; ++a)
    for (Eigen::Index b = a; b < mn; ++b)
      cov.sigma_xi(a, b) = cov.sigma_xi(b, a) = covariance(xi[a], xi[b]) * s2;
  cov.sigma_zeta_xi.resize(m, mn);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < mn; ++b) cov.sigma_zeta_xi(a, b) = covariance(zeta[a], xi[b]) * s2;
  return cov;
}

NoiseCovariances noise_covariances(const std::vector<Edge>& edges, const std::vector<int>& measured,
                                   const std::vector<EdgeTimestamps>& ts, const UpdateInstant& at,
                                   double s2, const Eigen::VectorXd& measurement_variances,
                                   CovarianceModel model) {
  NoiseCovariances cov;
  if (model == CovarianceModel::exact) {
    cov = exact_noise_covariances(edges, measured, ts, at, s2);
  } else {
    cov.sigma_zeta = sigma_zeta(edges, at, s2);
    cov.sigma_xi = sigma_xi(edges, measured, ts, at, s2);
    cov.sigma_zeta_xi = sigma_zeta_xi(edges, measured, ts, at, s2);
  }
  cov.sigma_mu = measurement_variances.asDiagonal();
  return cov;
}

ScalarKalmanState kalman_update_two_ap(const ScalarKalmanState& state, double alpha_bar,
                                       double sigma_zeta_sq, double sigma_xi_sq, double meas_var) {
  const double a = sigma_xi_sq;
  const double denom = state.P + 3.0 * a + meas_var;
  ScalarKalmanState next;
  if (denom == 0.0) {
    // Noise-free limit: take the measurement as is.
    next.alpha_hat = state.alpha_hat + wrap(alpha_bar - state.alpha_hat);
    next.P = sigma_zeta_sq;
  } else {
    const double kappa = (state.P + a) / denom;
    next.alpha_hat = state.alpha_hat + kappa * wrap(alpha_bar - state.alpha_hat);
    next.P = state.P - kappa * (state.P + a) + sigma_zeta_sq;
  }
  next.n = state.n + 1;
  return next;
}

double scalar_riccati_fixed_point(double z, double a, double m) {
  const double b = 2.0 * a - z;
  const double c = a * a - 3.0 * a * z - z * m;
  return (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;
}

KalmanStep kalman_update(const KalmanState& state, const Eigen::VectorXd& alpha_bar,
                         const Eigen::MatrixXd& A, const NoiseCovariances& cov) {
  const Eigen::MatrixXd p_prior = state.P_post + cov.sigma_zeta;
  KalmanStep out;
  out.state.n = state.n + 1;
  if (A.rows() == 0) {
    out.state.alpha_hat = state.alpha_hat;
    out.state.P_post = p_prior;
    return out;
  }
  const Eigen::MatrixXd cross = p_prior * A.transpose() + cov.sigma_zeta_xi;  // M x Mn
  Eigen::MatrixXd s = A * p_prior * A.transpose() + A * cov.sigma_zeta_xi +
                      cov.sigma_zeta_xi.transpose() * A.transpose() + cov.sigma_xi + cov.sigma_mu;
  s = 0.5 * (s + s.transpose()).eval();
  const Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::filter_singular, "innovation covariance is not positive definite");
  const Eigen::MatrixXd gain = llt.solve(cross.transpose()).transpose();  // M x Mn

  out.innovation = alpha_bar - A * state.alpha_hat;
  for (Eigen::Index r = 0; r < out.innovation.size(); ++r) out.innovation(r) = wrap(out.innovation(r));
  out.state.alpha_hat = state.alpha_hat + gain * out.innovation;
  Eigen::MatrixXd post = p_prior - gain * cross.transpose();
  out.state.P_post = 0.5 * (post + post.transpose());
  return out;
}

double unwrap_step(double prev, double next) {
  const double k = std::ceil((prev - next) / kTwoPi - 0.5);
  return next + kTwoPi * k;
}

PhaseSolution solve_phases(const Eigen::VectorXd& alpha_hat, const Eigen::MatrixXd& P,
                           const Eigen::MatrixXd& B) {
  const Eigen::Index m = B.rows();
  const Eigen::Index L = B.cols();
  if (alpha_hat.size() != m || P.rows() != m || P.cols() != m)
    throw Error(ErrorKind::invalid_config, "solve_phases: dimension mismatch");
  if (L < 2 || m < L - 1) throw Error(ErrorKind::unsolvable, "too few edges to connect the APs");

  PhaseSolution sol;
  Eigen::MatrixXd p = 0.5 * (P + P.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> pe(p, Eigen::EigenvaluesOnly);
  const double lo = pe.eigenvalues().minCoeff();
  const double hi = pe.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    p.diagonal().array() += std::max(1e-12 * p.trace() / static_cast<double>(m), 1e-300);
    sol.jittered = true;
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(p);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::unsolvable, "error covariance is not positive definite");
  const Eigen::MatrixXd w_b = llt.solve(B);              // P^-1 B
  const Eigen::VectorXd w_a = llt.solve(alpha_hat);      // P^-1 alpha
  const Eigen::MatrixXd h = B.transpose() * w_b;

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> he(0.5 * (h + h.transpose()));
  const Eigen::VectorXd& lam = he.eigenvalues();
  if (!(lam(1) > 1e-12 * std::max(lam(L - 1), 1e-300)))
    throw Error(ErrorKind::unsolvable, "measurement graph is not connected");

  sol.basis = he.eigenvectors().rightCols(L - 1);
  for (Eigen::Index c = 0; c < sol.basis.cols(); ++c) {
    for (Eigen::Index r = 0; r < L; ++r) {
      if (std::abs(sol.basis(r, c)) > 1e-12) {
        if (sol.basis(r, c) < 0.0) sol.basis.col(c) *= -1.0;
        break;
      }
    }
  }
  if (m == 1 && L == 2) {
    // One edge between two APs: the estimate splits evenly, exactly.
    const double half = 0.5 * alpha_hat(0) * B(0, 1);
    sol.phi_hat = Eigen::Vector2d(-half, half);
    sol.error_covariance = Eigen::Matrix2d{{1.0, -1.0}, {-1.0, 1.0}} * (0.25 * p(0, 0));
    return sol;
  }
  const Eigen::MatrixXd reduced = sol.basis.transpose() * h * sol.basis;
  const Eigen::LDLT<Eigen::MatrixXd> red(reduced);
  sol.phi_hat = sol.basis * red.solve(sol.basis.transpose() * (B.transpose() * w_a));
  sol.error_covariance = sol.basis * red.solve(sol.basis.transpose());
  return sol;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "update,sample,edge,measured,alpha_hat,p_post_diag,innovation\n";
  out << std::setprecision(17);
  for (const TraceRow& r : rows) {
    out << r.update << ',' << r.sample << ',' << r.edge << ',' << (r.measured ? 1 : 0) << ','
        << r.alpha_hat << ',' << r.p_diag << ',';
    if (r.measured) out << r.innovation;
    out << '\n';
  }
}

}  // namespace tddsync
