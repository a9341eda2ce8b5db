#include "tddsync/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <tuple>
#include <limits>
#include <thread>

#include "tddsync/error.hpp"
#include "tddsync/rng.hpp"

namespace tddsync {

const char* to_string(ScenarioKind s) {
  switch (s) {
    case ScenarioKind::cdf_two_ap: return "cdf_two_ap";
    case ScenarioKind::se_vs_frame_length: return "se_vs_frame_length";
    case ScenarioKind::se_vs_pn_level: return "se_vs_pn_level";
    case ScenarioKind::se_vs_num_aps: return "se_vs_num_aps";
    case ScenarioKind::custom: return "custom";
  }
  return "custom";
}

const char* to_string(Method m) {
  switch (m) {
    case Method::no_phase_noise: return "no_phase_noise";
    case Method::single_ap: return "single_ap";
    case Method::kalman: return "kalman";
    case Method::direct: return "direct";
  }
  return "kalman";
}

ScenarioKind parse_scenario(const std::string& name) {
  for (auto k : {ScenarioKind::cdf_two_ap, ScenarioKind::se_vs_frame_length,
                 ScenarioKind::se_vs_pn_level, ScenarioKind::se_vs_num_aps, ScenarioKind::custom})
    if (name == to_string(k)) return k;
  throw Error(ErrorKind::invalid_config, "scenario: unknown name '" + name + "'");
}

Method parse_method(const std::string& name) {
  for (auto m : {Method::no_phase_noise, Method::single_ap, Method::kalman, Method::direct})
    if (name == to_string(m)) return m;
  throw Error(ErrorKind::invalid_config, "methods: unknown method '" + name + "'");
}

namespace {

Beamformer parse_beamformer(const std::string& name) {
  if (name == "conj") return Beamformer::conj;
  if (name == "zf") return Beamformer::zf;
  throw Error(ErrorKind::invalid_config, "beamformers: unknown beamformer '" + name + "'");
}

std::vector<GridPoint> product(const std::vector<int>& ls, const std::vector<double>& levels,
                               const std::vector<int>& unbroken) {
  std::vector<GridPoint> out;
  for (int L : ls)
    for (double s : levels)
      for (int u : unbroken) out.push_back({L, s, u});
  return out;
}

}  // namespace

Scenario default_scenario(ScenarioKind kind, const SystemConfig& base) {
  Scenario sc;
  sc.kind = kind;
  switch (kind) {
    case ScenarioKind::cdf_two_ap:
      sc.grid = product({2}, {base.s_pn_dbc_hz}, {base.unbroken_slots});
      sc.methods = {Method::no_phase_noise, Method::kalman, Method::single_ap};
      break;
    case ScenarioKind::se_vs_frame_length:
      sc.grid = product({2, 4}, {base.s_pn_dbc_hz}, {0, 1, 2, 4, 8, 16});
      sc.methods = {Method::kalman};
      break;
    case ScenarioKind::se_vs_pn_level:
      sc.grid = product({2, 4, 16}, {-120.0, -110.0, -100.0, -90.0, -80.0}, {base.unbroken_slots});
      sc.methods = {Method::kalman, Method::direct};
      break;
    case ScenarioKind::se_vs_num_aps: {
      std::vector<int> ls;
      for (int L = 2; L <= 16; ++L) ls.push_back(L);
      sc.grid = product(ls, {base.s_pn_dbc_hz}, {base.unbroken_slots});
      sc.methods = {Method::kalman};
      break;
    }
    case ScenarioKind::custom:
      sc.grid = product({base.L}, {base.s_pn_dbc_hz}, {base.unbroken_slots});
      sc.methods = {Method::kalman};
      break;
  }
  return sc;
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "system.L", "system.N", "system.K", "system.tau_c", "system.tau_p", "system.tau_u",
      "system.tau_d", "system.tau_g", "system.F", "system.unbroken_slots", "system.rho_ap_mw",
      "system.rho_ue_mw", "system.noise_dbm", "system.rho_ap", "system.rho_ue",
      "system.s_pn_dbc_hz", "system.delta_f", "system.f_c", "system.f_s", "system.sigma_nu_sq",
      "system.m_min", "system.area_side", "system.min_ap_separation", "system.compensation",
      "system.covariance_model", "system.variance_signal", "system.slot_placement",
      "system.g_known_exactly", "simulation.trials", "simulation.frames_per_trial",
      "simulation.warmup_frames", "simulation.seed", "simulation.threads", "scenario.name",
      "scenario.methods", "scenario.beamformers", "scenario.ap_counts", "scenario.s_pn_levels",
      "scenario.unbroken_slots", "scenario.sigma_from"};
  return keys;
}

int to_int(std::int64_t v, const std::string& key) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw Error(ErrorKind::invalid_config, key + ": out of range");
  return static_cast<int>(v);
}

}  // namespace

ExperimentConfig config_from_document(const ConfigDocument& doc) {
  for (const auto& [key, value] : doc.entries)
    if (!known_keys().count(key))
      throw Error(ErrorKind::invalid_config,
                  key + ": unknown key (line " + std::to_string(value.line) + ")");

  ExperimentConfig ec;
  SystemConfig& c = ec.system;
  auto int_key = [&](const char* key, int& field) {
    if (doc.has(key)) field = to_int(doc.get_int(key), key);
  };
  auto dbl_key = [&](const char* key, double& field) {
    if (doc.has(key)) field = doc.get_double(key);
  };
  int_key("system.L", c.L);
  int_key("system.N", c.N);
  int_key("system.K", c.K);
  int_key("system.tau_c", c.tau_c);
  int_key("system.tau_p", c.tau_p);
  int_key("system.tau_u", c.tau_u);
  int_key("system.tau_d", c.tau_d);
  int_key("system.tau_g", c.tau_g);
  int_key("system.F", c.F);
  int_key("system.unbroken_slots", c.unbroken_slots);
  int_key("system.m_min", c.m_min);

  double noise_dbm = -94.0;
  double ap_mw = 200.0;
  double ue_mw = 100.0;
  dbl_key("system.noise_dbm", noise_dbm);
  dbl_key("system.rho_ap_mw", ap_mw);
  dbl_key("system.rho_ue_mw", ue_mw);
  if (!(ap_mw > 0.0)) throw Error(ErrorKind::invalid_config, "system.rho_ap_mw: must be positive");
  if (!(ue_mw > 0.0)) throw Error(ErrorKind::invalid_config, "system.rho_ue_mw: must be positive");
  c.rho_ap = normalized_power(ap_mw, noise_dbm);
  c.rho_ue = normalized_power(ue_mw, noise_dbm);
  dbl_key("system.rho_ap", c.rho_ap);
  dbl_key("system.rho_ue", c.rho_ue);

  dbl_key("system.s_pn_dbc_hz", c.s_pn_dbc_hz);
  dbl_key("system.delta_f", c.delta_f);
  dbl_key("system.f_c", c.f_c);
  dbl_key("system.f_s", c.f_s);
  if (doc.has("system.sigma_nu_sq")) c.sigma_nu_sq_override = doc.get_double("system.sigma_nu_sq");
  dbl_key("system.area_side", c.area_side);
  dbl_key("system.min_ap_separation", c.min_ap_separation);

  if (doc.has("system.compensation")) {
    const std::string v = doc.get_string("system.compensation");
    if (v == "pilot") c.compensation = CompensationPolicy::pilot;
    else if (v == "genie") c.compensation = CompensationPolicy::genie;
    else throw Error(ErrorKind::invalid_config, "system.compensation: expected pilot or genie");
  }
  if (doc.has("system.covariance_model")) {
    const std::string v = doc.get_string("system.covariance_model");
    if (v == "exact") c.covariance_model = CovarianceModel::exact;
    else if (v == "closed_form") c.covariance_model = CovarianceModel::closed_form;
    else throw Error(ErrorKind::invalid_config, "system.covariance_model: expected exact or closed_form");
  }
  if (doc.has("system.variance_signal")) {
    const std::string v = doc.get_string("system.variance_signal");
    if (v == "per_direction") c.variance_signal = VarianceSignal::per_direction;
    else if (v == "first_endpoint") c.variance_signal = VarianceSignal::first_endpoint;
    else throw Error(ErrorKind::invalid_config,
                     "system.variance_signal: expected per_direction or first_endpoint");
  }
  if (doc.has("system.slot_placement")) {
    const std::string v = doc.get_string("system.slot_placement");
    if (v == "even") c.slot_placement = SlotPlacement::even;
    else if (v == "leading") c.slot_placement = SlotPlacement::leading;
    else throw Error(ErrorKind::invalid_config, "system.slot_placement: expected even or leading");
  }
  if (doc.has("system.g_known_exactly")) c.g_known_exactly = doc.get_bool("system.g_known_exactly");

  int_key("simulation.trials", c.trials);
  int_key("simulation.frames_per_trial", c.frames_per_trial);
  int_key("simulation.warmup_frames", c.warmup_frames);
  if (doc.has("simulation.seed")) {
    const std::int64_t s = doc.get_int("simulation.seed");
    if (s < 0) throw Error(ErrorKind::invalid_config, "simulation.seed: must be non-negative");
    c.master_seed = static_cast<std::uint64_t>(s);
  }
  int_key("simulation.threads", ec.threads);
  c.validate();

  const ScenarioKind kind =
      doc.has("scenario.name") ? parse_scenario(doc.get_string("scenario.name")) : ScenarioKind::custom;
  ec.scenario = default_scenario(kind, c);
  Scenario& sc = ec.scenario;
  if (doc.has("scenario.ap_counts") || doc.has("scenario.s_pn_levels") ||
      doc.has("scenario.unbroken_slots")) {
    std::set<int> ls_seen;
    std::vector<int> ls;
    std::vector<double> levels;
    std::vector<int> unbroken;
    for (const GridPoint& p : sc.grid) {
      if (std::find(ls.begin(), ls.end(), p.L) == ls.end()) ls.push_back(p.L);
      if (std::find(levels.begin(), levels.end(), p.s_pn_dbc_hz) == levels.end())
        levels.push_back(p.s_pn_dbc_hz);
      if (std::find(unbroken.begin(), unbroken.end(), p.unbroken_slots) == unbroken.end())
        unbroken.push_back(p.unbroken_slots);
    }
    if (doc.has("scenario.ap_counts")) {
      ls.clear();
      for (auto v : doc.get_int_array("scenario.ap_counts")) ls.push_back(to_int(v, "scenario.ap_counts"));
    }
    if (doc.has("scenario.s_pn_levels")) levels = doc.get_double_array("scenario.s_pn_levels");
    if (doc.has("scenario.unbroken_slots")) {
      unbroken.clear();
      for (auto v : doc.get_int_array("scenario.unbroken_slots"))
        unbroken.push_back(to_int(v, "scenario.unbroken_slots"));
    }
    sc.grid = product(ls, levels, unbroken);
  }
  if (doc.has("scenario.methods")) {
    sc.methods.clear();
    for (const auto& m : doc.get_string_array("scenario.methods")) sc.methods.push_back(parse_method(m));
  }
  if (doc.has("scenario.beamformers")) {
    sc.beamformers.clear();
    for (const auto& b : doc.get_string_array("scenario.beamformers"))
      sc.beamformers.push_back(parse_beamformer(b));
  }
  if (doc.has("scenario.sigma_from")) {
    const std::string v = doc.get_string("scenario.sigma_from");
    if (v == "spectrum_level") sc.sigma_from_spectrum_level = true;
    else if (v == "c_nu") sc.sigma_from_spectrum_level = false;
    else throw Error(ErrorKind::invalid_config, "scenario.sigma_from: expected spectrum_level or c_nu");
  }
  if (sc.grid.empty()) throw Error(ErrorKind::invalid_config, "scenario: empty grid");
  if (sc.methods.empty()) throw Error(ErrorKind::invalid_config, "scenario.methods: empty");
  if (sc.beamformers.empty()) throw Error(ErrorKind::invalid_config, "scenario.beamformers: empty");
  for (const GridPoint& p : sc.grid) {
    SystemConfig g = grid_config(c, sc, p);
    g.validate();
    for (Method m : sc.methods)
      if ((m == Method::kalman || m == Method::direct) && p.L < 2)
        throw Error(ErrorKind::invalid_config, "scenario.ap_counts: calibration needs L >= 2");
  }
  for (Beamformer b : sc.beamformers)
    if (b == Beamformer::zf && c.N <= c.K)
      throw Error(ErrorKind::invalid_config, "scenario.beamformers: zf needs N > K");
  return ec;
}

ExperimentConfig resolve_config(ConfigDocument doc, const CliOverrides& cli) {
  auto put = [&](const std::string& key, ConfigScalar v) {
    ConfigValue cv;
    cv.value = v;
    doc.entries[key] = cv;
  };
  if (cli.scenario) put("scenario.name", *cli.scenario);
  if (cli.seed) {
    if (*cli.seed > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
      throw Error(ErrorKind::invalid_config, "--seed: must fit in a signed 64-bit integer");
    put("simulation.seed", static_cast<std::int64_t>(*cli.seed));
  }
  if (cli.full_scale) {
    put("simulation.trials", std::int64_t{200});
    put("simulation.frames_per_trial", std::int64_t{1000});
  }
  if (cli.trials) put("simulation.trials", std::int64_t{*cli.trials});
  if (cli.beamformer) {
    ConfigValue cv;
    std::vector<ConfigScalar> list;
    if (*cli.beamformer == "both") list = {std::string("conj"), std::string("zf")};
    else list = {*cli.beamformer};
    cv.value = list;
    doc.entries["scenario.beamformers"] = cv;
  }
  ExperimentConfig ec = config_from_document(doc);
  if (cli.estimator) {
    const Method chosen = *cli.estimator == Estimator::kalman ? Method::kalman : Method::direct;
    std::vector<Method> methods;
    for (Method m : ec.scenario.methods) {
      const Method mapped = (m == Method::kalman || m == Method::direct) ? chosen : m;
      if (std::find(methods.begin(), methods.end(), mapped) == methods.end()) methods.push_back(mapped);
    }
    ec.scenario.methods = methods;
  }
  return ec;
}

ExperimentConfig load_config(const std::string& path) { return config_from_document(load_config_file(path)); }

SystemConfig grid_config(const SystemConfig& base, const Scenario& scenario, const GridPoint& p) {
  SystemConfig c = base;
  c.L = p.L;
  c.s_pn_dbc_hz = p.s_pn_dbc_hz;
  c.unbroken_slots = p.unbroken_slots;
  if (scenario.kind == ScenarioKind::se_vs_frame_length) c.F = 0;
  if (scenario.sigma_from_spectrum_level && !base.sigma_nu_sq_override)
    c.sigma_nu_sq_override = sigma_nu_sq_from_spectrum_level(p.s_pn_dbc_hz, c.delta_f, c.f_s);
  return c;
}

std::uint64_t trial_seed(std::uint64_t master, const GridPoint& p, int trial) {
  return derive_seed(master, {static_cast<std::uint64_t>(p.L),
                              static_cast<std::uint64_t>(p.unbroken_slots),
                              static_cast<std::uint64_t>(trial)});
}

namespace {

// Error::what() already carries the kind prefix.
std::string strip_kind(const Error& e) {
  const std::string w = e.what();
  const std::string prefix = std::string(to_string(e.kind())) + ": ";
  return w.rfind(prefix, 0) == 0 ? w.substr(prefix.size()) : w;
}

std::vector<ResultRow> run_job(const SystemConfig& base, const Scenario& sc, const GridPoint& p,
                               int trial) {
  const SystemConfig cfg = grid_config(base, sc, p);
  const std::uint64_t seed = trial_seed(base.master_seed, p, trial);
  std::vector<ResultRow> rows;
  try {
    const TrialSetup setup = prepare_trial(cfg, seed);
    for (Method m : sc.methods) {
      TrialOutcome out;
      switch (m) {
        case Method::no_phase_noise: out = run_no_phase_noise(setup, cfg); break;
        case Method::single_ap: out = run_single_ap(setup, cfg, seed); break;
        case Method::kalman:
        case Method::direct: {
          TrialOptions opt;
          opt.estimator = m == Method::kalman ? Estimator::kalman : Estimator::direct;
          out = run_calibrated(setup, cfg, seed, opt);
          break;
        }
      }
      for (Beamformer b : sc.beamformers) {
        const SeResult* se = b == Beamformer::conj ? &out.conj : (out.zf ? &*out.zf : nullptr);
        if (!se) throw Error(ErrorKind::invalid_config, "zf needs N > K");
        for (int k = 0; k < cfg.K; ++k) {
          ResultRow r;
          r.scenario = to_string(sc.kind);
          r.point = p;
          r.sigma_nu_sq = compute_sigma_nu_sq(cfg);
          r.frame_slots = setup.frame_slots;
          r.trial = trial;
          r.ue = k;
          r.method = m;
          r.beamformer = b;
          r.se = se->se(k);
          rows.push_back(r);
        }
      }
    }
  } catch (const Error& e) {
    std::ostringstream where;
    where << "grid point L=" << p.L << " s_pn=" << p.s_pn_dbc_hz << " unbroken=" << p.unbroken_slots
          << " trial=" << trial << ": " << strip_kind(e);
    throw Error(e.kind(), where.str());
  }
  return rows;
}

}  // namespace

ResultTable run_scenario(const SystemConfig& base, const Scenario& scenario, int threads) {
  struct Job {
    std::size_t point;
    int trial;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < scenario.grid.size(); ++g)
    for (int t = 0; t < base.trials; ++t) jobs.push_back({g, t});

  std::vector<std::vector<ResultRow>> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (failure) return;
      }
      try {
        results[j] = run_job(base, scenario, scenario.grid[jobs[j].point], jobs[j].trial);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned n = std::min<std::size_t>(threads > 0 ? static_cast<unsigned>(threads) : hw, jobs.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Ordered reduction: grid point, trial, then the job's own row order.
  ResultTable table;
  for (auto& r : results) table.rows.insert(table.rows.end(), r.begin(), r.end());
  return table;
}

SummaryRow summarize_mean(const std::vector<double>& values) {
  SummaryRow s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sem = std::sqrt(ss / static_cast<double>(values.size() - 1)) /
            std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

std::vector<CdfPoint> summarize_cdf(const std::vector<double>& values) {
  std::vector<CdfPoint> out;
  if (values.empty()) return out;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  for (int q = 1; q <= 100; ++q) {
    const double p = q / 100.0;
    auto idx = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
    idx = std::clamp<std::size_t>(idx, 1, sorted.size()) - 1;
    out.push_back({p, sorted[idx]});
  }
  return out;
}

std::vector<double> select(const ResultTable& t, const GridPoint& p, Method m, Beamformer b) {
  std::vector<double> out;
  for (const ResultRow& r : t.rows)
    if (r.point.L == p.L && r.point.s_pn_dbc_hz == p.s_pn_dbc_hz &&
        r.point.unbroken_slots == p.unbroken_slots && r.method == m && r.beamformer == b)
      out.push_back(r.se);
  return out;
}

namespace {

struct GroupKey {
  int L;
  double s_pn;
  int unbroken;
  int method;
  int beamformer;
  auto tie() const { return std::tie(L, s_pn, unbroken, method, beamformer); }
  bool operator==(const GroupKey& o) const { return tie() == o.tie(); }
};

struct Group {
  GroupKey key;
  const ResultRow* first;
  std::vector<double> values;
};

std::vector<Group> groups(const ResultTable& t) {
  std::vector<Group> out;
  for (const ResultRow& r : t.rows) {
    const GroupKey key{r.point.L, r.point.s_pn_dbc_hz, r.point.unbroken_slots,
                       static_cast<int>(r.method), static_cast<int>(r.beamformer)};
    auto it = std::find_if(out.begin(), out.end(), [&](const Group& g) { return g.key == key; });
    if (it == out.end()) {
      out.push_back({key, &r, {}});
      it = std::prev(out.end());
    }
    it->values.push_back(r.se);
  }
  return out;
}

void group_prefix(std::ostream& out, const ResultRow& r) {
  out << r.scenario << ',' << r.point.L << ',' << r.point.s_pn_dbc_hz << ',' << r.point.unbroken_slots
      << ',' << r.frame_slots << ',' << to_string(r.method) << ',' << to_string(r.beamformer);
}

}  // namespace

void write_results_csv(std::ostream& out, const ResultTable& t) {
  out << "scenario,L,s_pn_dbc_hz,unbroken_slots,frame_slots,method,beamformer,sigma_nu_sq,trial,ue,se\n";
  out << std::setprecision(17);
  for (const ResultRow& r : t.rows) {
    group_prefix(out, r);
    out << ',' << r.sigma_nu_sq << ',' << r.trial << ',' << r.ue << ',' << r.se << '\n';
  }
}

void write_summary_csv(std::ostream& out, const ResultTable& t) {
  out << "scenario,L,s_pn_dbc_hz,unbroken_slots,frame_slots,method,beamformer,count,mean,sem\n";
  out << std::setprecision(17);
  for (const Group& g : groups(t)) {
    const SummaryRow s = summarize_mean(g.values);
    group_prefix(out, *g.first);
    out << ',' << s.count << ',' << s.mean << ',' << s.sem << '\n';
  }
}

void write_cdf_csv(std::ostream& out, const ResultTable& t) {
  out << "scenario,L,s_pn_dbc_hz,unbroken_slots,frame_slots,method,beamformer,probability,se\n";
  out << std::setprecision(17);
  for (const Group& g : groups(t)) {
    for (const CdfPoint& c : summarize_cdf(g.values)) {
      group_prefix(out, *g.first);
      out << ',' << c.probability << ',' << c.value << '\n';
    }
  }
}

}  // namespace tddsync
