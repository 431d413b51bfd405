#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mcmp/cli.hpp"
#include "mcmp/cp_approx.hpp"
#include "mcmp/cp_mc.hpp"
#include "mcmp/lqg.hpp"
#include "mcmp/mcmp.hpp"
#include "mcmp/scenario.hpp"

namespace py = pybind11;
using namespace mcmp;

namespace {

PathProblem problem_for(const Scenario& s, int waypoints, double inflation) {
  PlannedPath path;
  if (!s.nominal_path.empty()) {
    path = scenario_nominal_path(s);
  } else {
    Workspace ws = s.workspace();
    ws.inflation = inflation;
    path = plan(prepare(s.steering_model(), ws, s.planner_options()), ws);
    if (!path.feasible) throw std::runtime_error("no feasible nominal path");
    if (s.planner.smoothing && s.dynamics == Dynamics::single_integrator) path = adaptive_shortcut(path, ws);
  }
  double dt = 0.0;
  if (waypoints > 1) {
    double duration = 0.0;
    if (s.dynamics == Dynamics::single_integrator) {
      duration = path_length(path.states) / s.speed;
    } else {
      for (double d : path.durations) duration += d;
    }
    dt = duration / (waypoints - 1);
  }
  return make_path_problem(s, path, dt);
}

py::dict estimate_dict(const CPEstimate& e) {
  py::dict d;
  d["p_hat"] = e.p_hat;
  d["p_raw"] = e.p_raw;
  d["std_err"] = e.std_err;
  d["m"] = e.m;
  d["method"] = std::string(to_string(e.method));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Collision-probability estimation and chance-constrained motion planning";

  py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("dt", &Scenario::dt)
      .def_readonly("alpha", &Scenario::alpha)
      .def_readonly("seed", &Scenario::seed)
      .def_readonly("dimension", &Scenario::dimension)
      .def("serialize", &serialize_scenario)
      .def("__eq__", [](const Scenario& a, const Scenario& b) { return a == b; });

  m.def("load_scenario", &load_scenario, py::arg("path"));
  m.def("parse_scenario", &parse_scenario, py::arg("text"), py::arg("source_name") = "<scenario>");

  m.def(
      "discretize",
      [](const MatrixXd& A, const MatrixXd& B, const MatrixXd& C, const MatrixXd& V, const MatrixXd& W, double dt) {
        const DiscreteLQGSystem d = discretize({A, B, C, V, W}, dt);
        return py::make_tuple(d.A, d.B, d.C, d.V, d.W);
      },
      py::arg("A"), py::arg("B"), py::arg("C"), py::arg("V"), py::arg("W"), py::arg("dt"));

  m.def(
      "estimate",
      [](const Scenario& s, const std::string& method, std::int64_t particles, std::uint64_t seed, int waypoints,
         double inflation) -> py::object {
        const PathProblem p = problem_for(s, waypoints, inflation);
        if (method == "simple") return estimate_dict(simple_mc(p, particles, seed));
        if (method == "vr") return estimate_dict(estimate_cp_vr(p, particles, seed));
        const CloseSet close = build_close_set(p.nominal, p.moments, p.workspace);
        const WaypointCPs cps = pointwise_cps(p.nominal, p.moments, close);
        if (method == "additive") return py::float_(combine(cps, Combination::additive));
        if (method == "multiplicative") return py::float_(combine(cps, Combination::multiplicative));
        throw py::value_error("method must be simple, vr, additive or multiplicative");
      },
      py::arg("scenario"), py::arg("method") = "vr", py::arg("particles") = 2000, py::arg("seed") = 1,
      py::arg("waypoints") = 0, py::arg("inflation") = 0.0);

  m.def(
      "plan",
      [](const Scenario& s, std::uint64_t seed, bool backtrack) {
        McmpOptions o = McmpOptions::from_scenario(s);
        o.backtrack = backtrack;
        const PlanResult r = mcmp_plan(s, o, seed);
        py::dict d;
        d["status"] = std::string(to_string(r.status));
        d["inflation"] = r.inflation;
        d["cost"] = r.cost;
        d["cp"] = estimate_dict(r.cp);
        d["total_particles"] = r.total_particles;
        d["iterations"] = r.state.iteration;
        d["backtracks"] = r.state.backtracks;
        d["waypoints"] = r.nominal.waypoints;
        return d;
      },
      py::arg("scenario"), py::arg("seed") = 1, py::arg("backtrack") = true);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "mcmp_cli");
        std::vector<const char*> argv;
        for (const std::string& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
