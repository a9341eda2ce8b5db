#include "tddsync/simulation.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "tddsync/error.hpp"
#include "tddsync/rng.hpp"

namespace tddsync {

const char* to_string(Estimator e) { return e == Estimator::kalman ? "kalman" : "direct"; }

Eigen::MatrixXcd TrialSetup::known_channel(int rx, int tx) const {
  const int L = channels.num_aps();
  const double c = known_phase[static_cast<std::size_t>(std::min(rx, tx) * L + std::max(rx, tx))];
  if (c == 0.0) return channels.inter_ap(rx, tx);
  return std::polar(1.0, c) * channels.inter_ap(rx, tx);
}

TrialSetup prepare_trial(const SystemConfig& config, std::uint64_t trial_seed) {
  config.validate();
  TrialSetup s;
  Rng place_rng = make_stream(trial_seed, StreamPurpose::placement);
  s.placement = place_nodes(config, place_rng);
  Rng shadow_rng = make_stream(trial_seed, StreamPurpose::shadowing);
  s.large_scale = large_scale_fading(s.placement, shadow_rng);
  Rng channel_rng = make_stream(trial_seed, StreamPurpose::inter_ap_channel);
  s.channels = draw_channels(s.large_scale, config, channel_rng);

  const int L = config.L;
  s.known_phase.assign(static_cast<std::size_t>(L * L), 0.0);
  if (!config.g_known_exactly) {
    Rng gauge_rng = make_stream(trial_seed, StreamPurpose::inter_ap_channel, 1);
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j) s.known_phase[static_cast<std::size_t>(i * L + j)] = u(gauge_rng);
  }

  s.gamma.resize(config.K, L);
  for (int k = 0; k < config.K; ++k)
    for (int l = 0; l < L; ++l)
      s.gamma(k, l) = lmmse_coefficients(s.large_scale.beta_ue(k, l), config.rho_ue, config.K).gamma;
  s.eta = downlink_power_allocation(s.large_scale.beta_ue);

  if (L >= 2) {
    Eigen::MatrixXd strengths = Eigen::MatrixXd::Zero(L, L);
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j)
        strengths(i, j) = strengths(j, i) = s.channels.inter_ap(i, j).norm();
    s.graph = build_graph(strengths, config.effective_m_min());
    s.coloring = distance2_coloring(s.graph);
    s.schedule = build_schedule(s.graph, s.coloring, config);
    s.frame_slots = s.schedule.frame_slots;
  } else {
    s.frame_slots = std::max(1, config.F > 0 ? config.F : 1 + config.unbroken_slots);
  }
  return s;
}

namespace {

struct ServingSet {
  std::vector<int> aps;  // indices into the trajectory
  Eigen::MatrixXd beta;  // K x |aps|
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd eta;
};

ServingSet all_aps(const TrialSetup& s) {
  ServingSet out;
  for (int l = 0; l < s.channels.num_aps(); ++l) out.aps.push_back(l);
  out.beta = s.large_scale.beta_ue;
  out.gamma = s.gamma;
  out.eta = s.eta;
  return out;
}

TrialOutcome evaluate(const RateInputs& inputs, ResidualPhaseStats stats, const SystemConfig& config,
                      bool keep_stats) {
  TrialOutcome out;
  out.inputs = inputs;
  out.conj = evaluate_se(inputs, stats, Beamformer::conj, config.rho_ap, config.N);
  if (config.N > config.K) out.zf = evaluate_se(inputs, stats, Beamformer::zf, config.rho_ap, config.N);
  if (keep_stats) out.stats = std::move(stats);
  return out;
}

// Per-direction state of the over-the-air measurements.
struct DirectionBook {
  int L = 0;
  std::vector<CalLink> links;
  std::vector<bool> present;
  std::vector<std::complex<double>> output;
  std::vector<std::int64_t> time;

  explicit DirectionBook(int l)
      : L(l), links(static_cast<std::size_t>(l * l)), present(static_cast<std::size_t>(l * l), false),
        output(static_cast<std::size_t>(l * l)),
        time(static_cast<std::size_t>(l * l), std::numeric_limits<std::int64_t>::min()) {}
  std::size_t at(int tx, int rx) const { return static_cast<std::size_t>(tx * L + rx); }
};

// Calibration state machine for one trial.
class Calibrator {
 public:
  Calibrator(const TrialSetup& setup, const SystemConfig& config, double s2, Estimator estimator,
             std::vector<TraceRow>* trace)
      : setup_(setup), config_(config), graph_(setup.graph), schedule_(setup.schedule), s2_(s2),
        estimator_(estimator), trace_(trace), book_(config.L), theta_(Eigen::VectorXd::Zero(config.L)) {
    build_links();
  }

  const Eigen::VectorXd& theta() const { return theta_; }
  int jitter_events() const { return jitter_events_; }

  void measure(const MeasurementSlot& slot, bool at_i1, std::int64_t i, const PhaseTrajectory& traj,
               Rng& rng) {
    for (const Transmission& t : slot.transmissions) {
      if (t.at_i1 != at_i1) continue;
      const std::size_t d = book_.at(t.tx, t.rx);
      book_.output[d] = book_.links[d].draw_output(traj.at(t.tx, i), traj.at(t.rx, i), rng);
      book_.time[d] = i;
    }
  }

  // Called at i2 of measurement slot `n` (1-based) of frame `frame`.
  void update(int frame, int n, std::int64_t i) {
    const MeasurementSlot& slot = schedule_.slots[static_cast<std::size_t>(n - 1)];
    const UpdateInstant at = make_update_instant(i, slot.d, schedule_.timing);
    if (frame == 0) {
      if (n == schedule_.num_measurement_slots()) initialize(at);
      return;
    }
    if (!initialized_) return;
    if (estimator_ == Estimator::kalman) {
      kalman_step(slot, at);
    } else {
      direct_step(slot, at);
    }
  }

 private:
  void build_links() {
    // Every direction is sent exactly once per frame; collect the signal of
    // each transmission first, then the links that use it.
    std::vector<CalSignal> signals;
    std::vector<int> signal_of(static_cast<std::size_t>(config_.L * config_.L), -1);
    for (const MeasurementSlot& slot : schedule_.slots) {
      for (int m : slot.masters) {
        std::vector<Eigen::MatrixXcd> g;
        for (int o : graph_.neighbors[m]) g.push_back(setup_.known_channel(o, m));
        signals.push_back(make_cal_signal(m, graph_.neighbors[m], g, config_.rho_ap));
        for (int o : graph_.neighbors[m])
          signal_of[book_.at(m, o)] = static_cast<int>(signals.size()) - 1;
      }
      for (const Transmission& t : slot.transmissions) {
        if (t.at_i1) continue;
        signals.push_back(make_cal_signal(t.tx, {t.rx}, {setup_.known_channel(t.rx, t.tx)},
                                          config_.rho_ap));
        signal_of[book_.at(t.tx, t.rx)] = static_cast<int>(signals.size()) - 1;
      }
    }
    for (const Edge& e : graph_.edges) {
      for (auto [tx, rx] : {std::pair{e.first, e.second}, std::pair{e.second, e.first}}) {
        const int sig = signal_of[book_.at(tx, rx)];
        if (sig < 0) throw Error(ErrorKind::schedule_incomplete, "direction without a signal");
        const CalSignal* first = nullptr;
        const int fs = signal_of[book_.at(e.first, e.second)];
        if (fs >= 0) first = &signals[static_cast<std::size_t>(fs)];
        book_.links[book_.at(tx, rx)] =
            CalLink(signals[static_cast<std::size_t>(sig)], rx, setup_.channels.inter_ap(rx, tx),
                    setup_.known_channel(rx, tx), config_.variance_signal, first);
        book_.present[book_.at(tx, rx)] = true;
      }
    }
  }

  double raw_difference(const Edge& e) const {
    MeasurementRecord rec;
    rec.out_fwd = book_.output[book_.at(e.first, e.second)];
    rec.out_bwd = book_.output[book_.at(e.second, e.first)];
    return bidirectional_difference(rec);
  }

  double edge_variance(const Edge& e) const {
    return book_.links[book_.at(e.first, e.second)].variance() +
           book_.links[book_.at(e.second, e.first)].variance();
  }

  std::vector<EdgeTimestamps> timestamps() const {
    std::vector<EdgeTimestamps> ts;
    for (const Edge& e : graph_.edges)
      ts.push_back({book_.time[book_.at(e.second, e.first)], book_.time[book_.at(e.first, e.second)]});
    return ts;
  }

  std::vector<int> all_edges() const {
    std::vector<int> v(static_cast<std::size_t>(graph_.num_edges()));
    for (int m = 0; m < graph_.num_edges(); ++m) v[static_cast<std::size_t>(m)] = m;
    return v;
  }

  void initialize(const UpdateInstant& at) {
    const int L = graph_.nodes;
    // Lift raw differences along a BFS tree so that every cycle closes.
    std::vector<double> potential(static_cast<std::size_t>(L), 0.0);
    std::vector<bool> seen(static_cast<std::size_t>(L), false);
    std::queue<int> todo;
    todo.push(0);
    seen[0] = true;
    while (!todo.empty()) {
      const int v = todo.front();
      todo.pop();
      for (int u : graph_.neighbors[v]) {
        if (seen[u]) continue;
        const Edge& e = graph_.edges[static_cast<std::size_t>(graph_.edge_index(v, u))];
        const double a = raw_difference(e);
        potential[u] = e.first == v ? potential[v] + a : potential[v] - a;
        seen[u] = true;
        todo.push(u);
      }
    }
    const int M = graph_.num_edges();
    state_.alpha_hat.resize(M);
    for (int m = 0; m < M; ++m) {
      const Edge& e = graph_.edges[static_cast<std::size_t>(m)];
      const double base = potential[e.second] - potential[e.first];
      state_.alpha_hat(m) = base + wrap(raw_difference(e) - base);
    }
    unwrapped_ = state_.alpha_hat;

    const std::vector<int> every = all_edges();
    Eigen::VectorXd mu(M);
    for (int m = 0; m < M; ++m) mu(m) = edge_variance(graph_.edges[static_cast<std::size_t>(m)]);
    const NoiseCovariances cov =
        noise_covariances(graph_.edges, every, timestamps(), at, s2_, mu, config_.covariance_model);
    state_.P_post = cov.sigma_mu + cov.sigma_xi;
    state_.n = 0;
    initialized_ = true;
    record(at.i, every, Eigen::VectorXd::Zero(M), false);
    solve(state_.P_post);
  }

  void kalman_step(const MeasurementSlot& slot, const UpdateInstant& at) {
    const std::vector<int>& measured = slot.measured_edges;
    const auto mn = static_cast<Eigen::Index>(measured.size());
    Eigen::VectorXd alpha_bar(mn);
    Eigen::VectorXd mu(mn);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(mn, graph_.num_edges());
    for (Eigen::Index r = 0; r < mn; ++r) {
      const Edge& e = graph_.edges[static_cast<std::size_t>(measured[r])];
      alpha_bar(r) = raw_difference(e);
      mu(r) = edge_variance(e);
      A(r, measured[r]) = 1.0;
    }
    const NoiseCovariances cov =
        noise_covariances(graph_.edges, measured, timestamps(), at, s2_, mu, config_.covariance_model);
    KalmanStep step = kalman_update(state_, alpha_bar, A, cov);
    state_ = std::move(step.state);
    record(at.i, measured, step.innovation, true);
    solve(state_.P_post);
  }

  void direct_step(const MeasurementSlot& slot, const UpdateInstant& at) {
    for (int m : slot.measured_edges)
      unwrapped_(m) = unwrap_step(unwrapped_(m), raw_difference(graph_.edges[static_cast<std::size_t>(m)]));
    const std::vector<int> every = all_edges();
    const int M = graph_.num_edges();
    Eigen::VectorXd mu(M);
    for (int m = 0; m < M; ++m) mu(m) = edge_variance(graph_.edges[static_cast<std::size_t>(m)]);
    const NoiseCovariances cov =
        noise_covariances(graph_.edges, every, timestamps(), at, s2_, mu, config_.covariance_model);
    Eigen::VectorXd p = cov.sigma_mu.diagonal() + cov.sigma_xi.diagonal();
    state_.alpha_hat = unwrapped_;
    state_.P_post = p.asDiagonal();
    ++state_.n;
    record(at.i, slot.measured_edges, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(slot.measured_edges.size())), false);
    solve(state_.P_post);
  }

  void solve(const Eigen::MatrixXd& P) {
    const PhaseSolution sol = solve_phases(state_.alpha_hat, P, graph_.incidence);
    if (sol.jittered) ++jitter_events_;
    theta_ = sol.phi_hat;
  }

  void record(std::int64_t i, const std::vector<int>& measured, const Eigen::VectorXd& innovation,
              bool has_innovation) {
    if (!trace_) return;
    for (int m = 0; m < graph_.num_edges(); ++m) {
      TraceRow row;
      row.update = state_.n;
      row.sample = i;
      row.edge = m;
      row.alpha_hat = state_.alpha_hat(m);
      row.p_diag = state_.P_post(m, m);
      row.innovation = std::numeric_limits<double>::quiet_NaN();
      for (std::size_t r = 0; r < measured.size(); ++r) {
        if (measured[r] == m) {
          row.measured = true;
          if (has_innovation) row.innovation = innovation(static_cast<Eigen::Index>(r));
        }
      }
      trace_->push_back(row);
    }
  }

  const TrialSetup& setup_;
  const SystemConfig& config_;
  const ApGraph& graph_;
  const Schedule& schedule_;
  double s2_;
  Estimator estimator_;
  std::vector<TraceRow>* trace_;
  DirectionBook book_;
  KalmanState state_;
  Eigen::VectorXd unwrapped_;
  Eigen::VectorXd theta_;
  bool initialized_ = false;
  int jitter_events_ = 0;
};

// Shared frame loop: phase drift, optional calibration, UE compensation and
// Delta accumulation for the serving APs.
TrialOutcome run_frames(const TrialSetup& setup, const SystemConfig& config, std::uint64_t trial_seed,
                        const ServingSet& serving, const Schedule* schedule, Calibrator* calibrator,
                        const TrialOptions& options) {
  const SlotTiming timing = SlotTiming::from_config(config);
  const int tau_c = config.tau_c;
  const int K = config.K;
  const int Ls = static_cast<int>(serving.aps.size());
  const int F = setup.frame_slots;
  const std::int64_t frame_len = static_cast<std::int64_t>(F) * tau_c;
  const int total_frames = config.warmup_frames + config.frames_per_trial;
  const double s2 = compute_sigma_nu_sq(config);

  Rng pn_rng = make_stream(trial_seed, StreamPurpose::phase_noise);
  PhaseTrajectory traj = initial_trajectory(config.L, s2, pn_rng);
  traj = advance_phase(std::move(traj), total_frames * frame_len, pn_rng);
  Rng cal_rng = make_stream(trial_seed, StreamPurpose::calibration_noise);
  Rng ue_rng = make_stream(trial_seed, StreamPurpose::ue_pilot_noise);

  RateInputs inputs;
  inputs.activity = activity_mask(config, Ls, F, schedule);
  inputs.beta = serving.beta;
  inputs.gamma = serving.gamma;
  inputs.eta = serving.eta;
  const Eigen::MatrixXd weights = (serving.eta.array() * serving.gamma.array()).sqrt().matrix();
  const Eigen::MatrixXd pilot_gain =
      (config.rho_ap * config.N * serving.eta.array() * serving.gamma.array()).sqrt().matrix();

  DeltaAccumulator acc(K, Ls, static_cast<int>(frame_len), weights, inputs.activity,
                       options.retain_samples);
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(K);
  Eigen::MatrixXcd delta = Eigen::MatrixXcd::Zero(K, Ls);
  std::vector<std::complex<double>> terms(static_cast<std::size_t>(Ls));
  std::vector<double> ap_phase(static_cast<std::size_t>(Ls));

  auto theta_of = [&](int s) { return calibrator ? calibrator->theta()(serving.aps[s]) : 0.0; };
  auto refresh_psi = [&](std::int64_t i, std::int64_t slot_start, int j, Eigen::Index col) {
    if (!inputs.activity.col(col).any()) return;
    for (int k = 1; k <= K; ++k) {
      const std::int64_t p = j > k ? slot_start + k : latest_pilot_index(i, k, tau_c);
      for (int s = 0; s < Ls; ++s) {
        const int ap = serving.aps[s];
        terms[s] = inputs.activity(s, col) * pilot_gain(k - 1, s) *
                   std::polar(1.0, -traj.at(ap, i) - traj.at(ap, p) + theta_of(s));
      }
      psi(k - 1) = ue_phase_compensation(terms, config.compensation, ue_rng);
    }
  };

  for (int f = 0; f < total_frames; ++f) {
    const bool collect = f >= config.warmup_frames;
    if (collect) acc.begin_frame();
    for (int s = 1; s <= F; ++s) {
      const std::int64_t slot_start = f * frame_len + static_cast<std::int64_t>(s - 1) * tau_c;
      const int n_meas = (calibrator && schedule) ? schedule->measurement_slot_at(s) : 0;
      const MeasurementSlot* mslot =
          n_meas > 0 ? &schedule->slots[static_cast<std::size_t>(n_meas - 1)] : nullptr;
      for (int j = 1; j <= tau_c; ++j) {
        const std::int64_t i = slot_start + j;
        const Eigen::Index col = static_cast<Eigen::Index>(s - 1) * tau_c + j - 1;
        if (mslot && j == timing.i1) calibrator->measure(*mslot, true, i, traj, cal_rng);
        if (mslot && j == timing.i2) calibrator->measure(*mslot, false, i, traj, cal_rng);
        if (config.compensation == CompensationPolicy::genie || j == timing.dl_start)
          refresh_psi(i, slot_start, j, col);
        if (collect && inputs.activity.col(col).any()) {
          for (int sv = 0; sv < Ls; ++sv) ap_phase[sv] = theta_of(sv);
          for (int k = 1; k <= K; ++k) {
            const std::int64_t p = j > k ? slot_start + k : latest_pilot_index(i, k, tau_c);
            for (int sv = 0; sv < Ls; ++sv) {
              delta(k - 1, sv) =
                  inputs.activity(sv, col) != 0.0
                      ? std::polar(1.0, (ap_phase[sv] + psi(k - 1)) - traj.at(serving.aps[sv], i) -
                                            traj.at(serving.aps[sv], p))
                      : std::complex<double>(0.0, 0.0);
            }
          }
          acc.add(static_cast<int>(col), delta);
        }
        if (mslot && j == timing.i2) calibrator->update(f, n_meas, i);
      }
    }
  }

  TrialOutcome out = evaluate(inputs, acc.finish(), config,
                              options.keep_stats);
  if (calibrator) out.jitter_events = calibrator->jitter_events();
  return out;
}

}  // namespace

TrialOutcome run_calibrated(const TrialSetup& setup, const SystemConfig& config,
                            std::uint64_t trial_seed, const TrialOptions& options) {
  if (config.L < 2) throw Error(ErrorKind::invalid_config, "calibration needs L >= 2");
  Calibrator cal(setup, config, compute_sigma_nu_sq(config), options.estimator, options.trace);
  return run_frames(setup, config, trial_seed, all_aps(setup), &setup.schedule, &cal, options);
}

TrialOutcome run_no_phase_noise(const TrialSetup& setup, const SystemConfig& config) {
  const ServingSet serving = all_aps(setup);
  RateInputs inputs;
  inputs.activity = activity_mask(config, config.L, setup.frame_slots, nullptr);
  inputs.beta = serving.beta;
  inputs.gamma = serving.gamma;
  inputs.eta = serving.eta;
  const Eigen::MatrixXd weights = (serving.eta.array() * serving.gamma.array()).sqrt().matrix();
  return evaluate(inputs,
                  ResidualPhaseStats::ideal(config.K, config.L,
                                            static_cast<int>(inputs.activity.cols()), weights,
                                            inputs.activity),
                  config, false);
}

TrialOutcome run_single_ap(const TrialSetup& setup, const SystemConfig& config,
                           std::uint64_t trial_seed, const TrialOptions& options) {
  ServingSet serving;
  serving.aps = {0};
  serving.beta = setup.large_scale.beta_ue.leftCols(1);
  serving.gamma = setup.gamma.leftCols(1);
  serving.eta = downlink_power_allocation(serving.beta);
  return run_frames(setup, config, trial_seed, serving, nullptr, nullptr, options);
}

}  // namespace tddsync
