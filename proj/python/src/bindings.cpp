#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "tddsync/config_file.hpp"
#include "tddsync/error.hpp"
#include "tddsync/experiments.hpp"
#include "tddsync/topology.hpp"
#include "tddsync/tracking.hpp"

namespace py = pybind11;
using namespace tddsync;

namespace {

py::dict run_experiment(const std::string& config_text, std::optional<std::string> scenario,
                        std::optional<std::uint64_t> seed, std::optional<int> trials, bool full_scale,
                        std::optional<std::string> estimator, std::optional<std::string> beamformer,
                        int threads) {
  CliOverrides cli;
  cli.scenario = std::move(scenario);
  cli.seed = seed;
  cli.trials = trials;
  cli.full_scale = full_scale;
  if (estimator) {
    if (*estimator == "kalman")
      cli.estimator = Estimator::kalman;
    else if (*estimator == "direct")
      cli.estimator = Estimator::direct;
    else
      throw Error(ErrorKind::invalid_config, "estimator: expected kalman or direct");
  }
  cli.beamformer = std::move(beamformer);
  const ExperimentConfig cfg = resolve_config(parse_config(config_text), cli);

  ResultTable table;
  {
    py::gil_scoped_release release;
    table = run_scenario(cfg.system, cfg.scenario, threads);
  }

  py::list rows;
  for (const ResultRow& r : table.rows) {
    py::dict d;
    d["scenario"] = r.scenario;
    d["L"] = r.point.L;
    d["s_pn_dbc_hz"] = r.point.s_pn_dbc_hz;
    d["unbroken_slots"] = r.point.unbroken_slots;
    d["frame_slots"] = r.frame_slots;
    d["method"] = to_string(r.method);
    d["beamformer"] = to_string(r.beamformer);
    d["sigma_nu_sq"] = r.sigma_nu_sq;
    d["trial"] = r.trial;
    d["ue"] = r.ue;
    d["se"] = r.se;
    rows.append(d);
  }
  std::ostringstream res, sum, cdf;
  write_results_csv(res, table);
  write_summary_csv(sum, table);
  write_cdf_csv(cdf, table);
  py::dict out;
  out["rows"] = rows;
  out["results_csv"] = res.str();
  out["summary_csv"] = sum.str();
  out["cdf_csv"] = cdf.str();
  return out;
}

std::string schedule_json(const Eigen::MatrixXd& strengths, int m_min) {
  const ApGraph graph = build_graph(strengths, m_min);
  SystemConfig cfg = SystemConfig::defaults();
  cfg.L = static_cast<int>(strengths.rows());
  return dump_schedule(build_schedule(graph, distance2_coloring(graph), cfg), graph);
}

py::tuple kalman_two_ap(const std::vector<double>& measurements, double sigma_zeta_sq, double sigma_xi_sq,
                        double meas_var, double alpha0, double p0) {
  ScalarKalmanState s{alpha0, p0, 0};
  std::vector<double> alpha, p;
  for (double m : measurements) {
    s = kalman_update_two_ap(s, m, sigma_zeta_sq, sigma_xi_sq, meas_var);
    alpha.push_back(s.alpha_hat);
    p.push_back(s.P);
  }
  return py::make_tuple(alpha, p);
}

}  // namespace

PYBIND11_MODULE(_tddsync, m) {
  m.doc() = "Distributed MIMO phase calibration simulator";

  static py::exception<Error> runtime_error(m, "TddsyncError", PyExc_RuntimeError);
  static py::exception<Error> config_error(m, "ConfigError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::invalid_config || e.kind() == ErrorKind::config_parse)
        py::set_error(config_error, e.what());
      else
        py::set_error(runtime_error, e.what());
    }
  });

  m.def("run_experiment", &run_experiment, py::arg("config_text") = "", py::arg("scenario") = py::none(),
        py::arg("seed") = py::none(), py::arg("trials") = py::none(), py::arg("full_scale") = false,
        py::arg("estimator") = py::none(), py::arg("beamformer") = py::none(), py::arg("threads") = 0,
        "Run a scenario from TOML text. Returns rows plus the three CSV tables.");

  m.def("sigma_nu_sq_from_spectrum_level", &sigma_nu_sq_from_spectrum_level, py::arg("s_pn_dbc_hz"),
        py::arg("delta_f") = 1e5, py::arg("f_s") = 2e7);

  m.def(
      "solve_phases",
      [](const Eigen::VectorXd& alpha, const Eigen::MatrixXd& P, const Eigen::MatrixXd& B) {
        const PhaseSolution s = solve_phases(alpha, P, B);
        return py::make_tuple(s.phi_hat, s.error_covariance);
      },
      py::arg("alpha_hat"), py::arg("P"), py::arg("B"),
      "Gauge-fixed weighted least squares. Returns (phi_hat, error_covariance).");

  m.def(
      "incidence_matrix",
      [](int nodes, const std::vector<std::pair<int, int>>& edges) {
        std::vector<Edge> e;
        for (auto [a, b] : edges) e.push_back({a, b});
        return incidence_matrix(nodes, e);
      },
      py::arg("nodes"), py::arg("edges"));

  m.def("schedule_json", &schedule_json, py::arg("strengths"), py::arg("m_min") = 0,
        "Threshold graph, distance-2 coloring and measurement schedule as JSON.");

  m.def("kalman_two_ap", &kalman_two_ap, py::arg("measurements"), py::arg("sigma_zeta_sq"),
        py::arg("sigma_xi_sq"), py::arg("meas_var"), py::arg("alpha0") = 0.0, py::arg("p0") = 1.0,
        "Scalar two-AP filter over a measurement sequence. Returns (alpha_hat, P) lists.");

  m.def("scalar_riccati_fixed_point", &scalar_riccati_fixed_point, py::arg("sigma_zeta_sq"),
        py::arg("sigma_xi_sq"), py::arg("meas_var"));
}
