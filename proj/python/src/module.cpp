#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "cweibull/error.hpp"
#include "cweibull/estimation.hpp"
#include "cweibull/io.hpp"
#include "cweibull/metrics.hpp"
#include "cweibull/model.hpp"
#include "cweibull/simulation.hpp"
#include "cweibull/weibull_aft.hpp"

namespace py = pybind11;
using namespace cweibull;

namespace {

using Row = std::vector<double>;

Dataset make_dataset(std::vector<double> times, std::vector<int> status,
                     const CovariateMatrix& covariates) {
  Dataset d{std::move(times), std::move(status), covariates};
  d.validate();
  return d;
}

std::string repr_params(const GroupParams& g) {
  std::string s = "GroupParams(alpha=" + io::format_double(g.alpha) + ", beta=[";
  for (std::size_t j = 0; j < g.beta.size(); ++j) {
    s += (j ? ", " : "") + io::format_double(g.beta[j]);
  }
  return s + "], sigma=" + io::format_double(g.sigma) + ")";
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Competing-risk Weibull AFT regression";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<SpecError>(m, "SpecError", base);
  py::register_exception<DomainError>(m, "DomainError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<NumericError>(m, "NumericError", base);
  py::register_exception<CalibrationError>(m, "CalibrationError", base);
  py::register_exception<DegenerateHorizonError>(m, "DegenerateHorizonError", base);
  py::register_exception<SingularHessianError>(m, "SingularHessianError", base);
  py::register_exception<IoError>(m, "IoError", base);

  py::class_<GroupSpec>(m, "GroupSpec")
      .def(py::init([](std::vector<std::size_t> indices, std::string name) {
             return GroupSpec{std::move(indices), std::move(name)};
           }),
           py::arg("covariate_indices"), py::arg("name") = "")
      .def_readwrite("covariate_indices", &GroupSpec::covariate_indices)
      .def_readwrite("name", &GroupSpec::name);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init([](std::vector<GroupSpec> groups, std::size_t p) {
             ModelSpec s{std::move(groups), p};
             s.validate();
             return s;
           }),
           py::arg("groups"), py::arg("p"))
      .def_readwrite("groups", &ModelSpec::groups)
      .def_readwrite("p", &ModelSpec::p)
      .def_property_readonly("num_groups", &ModelSpec::num_groups)
      .def("validate", &ModelSpec::validate);

  py::class_<GroupParams>(m, "GroupParams")
      .def(py::init([](double alpha, std::vector<double> beta, double sigma) {
             return GroupParams{alpha, std::move(beta), sigma};
           }),
           py::arg("alpha"), py::arg("beta"), py::arg("sigma"))
      .def_readwrite("alpha", &GroupParams::alpha)
      .def_readwrite("beta", &GroupParams::beta)
      .def_readwrite("sigma", &GroupParams::sigma)
      .def("__repr__", &repr_params);

  py::class_<Theta>(m, "Theta")
      .def(py::init([](std::vector<GroupParams> groups) { return Theta{std::move(groups)}; }),
           py::arg("groups"))
      .def_readwrite("groups", &Theta::groups)
      .def("validate", &Theta::validate, py::arg("spec"))
      .def("flatten", &Theta::flatten)
      .def_static("unflatten",
                  [](const ModelSpec& spec, const std::vector<double>& flat) {
                    return Theta::unflatten(spec, flat);
                  },
                  py::arg("spec"), py::arg("flat"))
      .def_static("flat_labels", &Theta::flat_labels, py::arg("spec"));

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("times"), py::arg("status"), py::arg("covariates"))
      .def_readonly("times", &Dataset::times)
      .def_readonly("status", &Dataset::status)
      .def_readonly("covariates", &Dataset::covariates)
      .def("__len__", &Dataset::size);

  // model functions on one covariate row
  m.def("survival",
        [](const Theta& th, const ModelSpec& s, const Row& x, double t) {
          return survival(th, s, x, t);
        },
        py::arg("theta"), py::arg("spec"), py::arg("x"), py::arg("t"));
  m.def("hazard",
        [](const Theta& th, const ModelSpec& s, const Row& x, double t) {
          return hazard(th, s, x, t);
        },
        py::arg("theta"), py::arg("spec"), py::arg("x"), py::arg("t"));
  m.def("density",
        [](const Theta& th, const ModelSpec& s, const Row& x, double t) {
          return density(th, s, x, t);
        },
        py::arg("theta"), py::arg("spec"), py::arg("x"), py::arg("t"));
  m.def("winning_probability",
        [](const Theta& th, const ModelSpec& s, const Row& x, double t) {
          return winning_probability(th, s, x, t);
        },
        py::arg("theta"), py::arg("spec"), py::arg("x"), py::arg("t"));
  m.def("sample_event",
        [](const Theta& th, const ModelSpec& s, const Row& x, std::uint64_t seed) {
          Rng rng(seed);
          const Event e = sample_event(th, s, x, rng);
          return py::make_tuple(e.time, e.cause);
        },
        py::arg("theta"), py::arg("spec"), py::arg("x"), py::arg("seed"),
        "Returns (time, cause index).");

  py::class_<ExpectedTime>(m, "ExpectedTime")
      .def_readonly("estimate", &ExpectedTime::estimate)
      .def_readonly("finite_part", &ExpectedTime::finite_part)
      .def_readonly("tail_term", &ExpectedTime::tail_term)
      .def_readonly("tail_lower", &ExpectedTime::tail_lower)
      .def_readonly("tail_upper", &ExpectedTime::tail_upper)
      .def_readonly("truncation", &ExpectedTime::truncation);
  m.def("expected_survival_time",
        [](const Theta& th, const ModelSpec& s, const Row& x, std::optional<double> truncation) {
          return expected_survival_time(th, s, x, truncation);
        },
        py::arg("theta"), py::arg("spec"), py::arg("x"), py::arg("truncation") = py::none());

  // estimation
  py::class_<PenaltyConfig>(m, "PenaltyConfig")
      .def(py::init([](double l1, double l2) { return PenaltyConfig{l1, l2}; }),
           py::arg("lambda1") = 0.0, py::arg("lambda2") = 0.0)
      .def_readwrite("lambda1", &PenaltyConfig::lambda1)
      .def_readwrite("lambda2", &PenaltyConfig::lambda2);

  py::class_<FitConfig>(m, "FitConfig")
      .def(py::init<>())
      .def_readwrite("epsilon", &FitConfig::epsilon)
      .def_readwrite("max_em_iters", &FitConfig::max_em_iters)
      .def_readwrite("sigma_floor", &FitConfig::sigma_floor)
      .def_readwrite("inner_step_size", &FitConfig::inner_step_size)
      .def_readwrite("inner_iters", &FitConfig::inner_iters)
      .def_readwrite("m_step_sweeps", &FitConfig::m_step_sweeps)
      .def_readwrite("n_starts", &FitConfig::n_starts)
      .def_readwrite("start_jitter", &FitConfig::start_jitter)
      .def_readwrite("seed", &FitConfig::seed)
      .def_readwrite("compute_standard_errors", &FitConfig::compute_standard_errors);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("theta_hat", &FitResult::theta_hat)
      .def_readonly("std_errors", &FitResult::std_errors)
      .def_readonly("std_error_message", &FitResult::std_error_message)
      .def_readonly("winning_probs", &FitResult::winning_probs)
      .def_readonly("loglik_trace", &FitResult::loglik_trace)
      .def_readonly("penalized_trace", &FitResult::penalized_trace)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("n_iters", &FitResult::n_iters)
      .def_property_readonly("log_likelihood", &FitResult::log_likelihood)
      .def_property_readonly("penalized_objective", &FitResult::penalized_objective);

  m.def("fit_em", &fit_em, py::arg("spec"), py::arg("data"),
        py::arg("penalty") = PenaltyConfig{}, py::arg("config") = FitConfig{},
        py::arg("theta_init") = py::none(), py::call_guard<py::gil_scoped_release>());
  m.def("log_likelihood", &log_likelihood, py::arg("theta"), py::arg("spec"), py::arg("data"));
  m.def("score", &score, py::arg("theta"), py::arg("spec"), py::arg("data"));
  m.def("e_step", &e_step, py::arg("theta"), py::arg("spec"), py::arg("data"));
  m.def("standard_errors", &standard_errors, py::arg("theta"), py::arg("spec"), py::arg("data"));

  py::class_<WeibullAftFit>(m, "WeibullAftFit")
      .def_readonly("params", &WeibullAftFit::params)
      .def_readonly("log_likelihood", &WeibullAftFit::log_likelihood)
      .def_readonly("std_errors", &WeibullAftFit::std_errors)
      .def_readonly("iterations", &WeibullAftFit::iterations)
      .def_readonly("converged", &WeibullAftFit::converged);
  m.def("fit_weibull_aft",
        [](const Dataset& d, const std::vector<std::size_t>& indices) {
          return fit_weibull_aft(d, indices);
        },
        py::arg("data"), py::arg("covariate_indices"));

  // simulation
  py::class_<ScenarioSpec>(m, "ScenarioSpec")
      .def(py::init([](ModelSpec model, Theta truth, std::size_t n, double censoring,
                       std::uint64_t seed) {
             ScenarioSpec s{std::move(model), std::move(truth), n, censoring, seed};
             s.validate();
             return s;
           }),
           py::arg("model"), py::arg("truth"), py::arg("n"), py::arg("target_censoring") = 0.0,
           py::arg("seed") = 1)
      .def_readwrite("model", &ScenarioSpec::model)
      .def_readwrite("truth", &ScenarioSpec::truth)
      .def_readwrite("n", &ScenarioSpec::n)
      .def_readwrite("target_censoring", &ScenarioSpec::target_censoring)
      .def_readwrite("seed", &ScenarioSpec::seed);

  py::class_<SimulatedDataset>(m, "SimulatedDataset")
      .def_readonly("data", &SimulatedDataset::data)
      .def_readonly("latent_causes", &SimulatedDataset::latent_causes)
      .def_readonly("true_event_times", &SimulatedDataset::true_event_times)
      .def_readonly("realized_censoring_rate", &SimulatedDataset::realized_censoring_rate);

  m.def("builtin_scenario", &builtin_scenario, py::arg("example"), py::arg("censoring"),
        py::arg("seed") = 1);
  m.def("generate", &generate, py::arg("scenario"));

  // metrics
  py::class_<Concordance>(m, "Concordance")
      .def_readonly("value", &Concordance::value)
      .def_readonly("comparable_pairs", &Concordance::comparable_pairs)
      .def_readonly("no_comparable_pairs", &Concordance::no_comparable_pairs);
  m.def("concordance_index",
        [](const std::vector<double>& r, const std::vector<double>& t, const std::vector<int>& d) {
          return concordance_index(r, t, d);
        },
        py::arg("risk"), py::arg("times"), py::arg("status"));
  m.def("concordance_index_ipcw",
        [](const std::vector<double>& r, const std::vector<double>& t, const std::vector<int>& d,
           double tau) { return concordance_index_ipcw(r, t, d, tau); },
        py::arg("risk"), py::arg("times"), py::arg("status"), py::arg("tau"));

  py::class_<RocCurve>(m, "RocCurve")
      .def_readonly("horizon", &RocCurve::horizon)
      .def_readonly("thresholds", &RocCurve::thresholds)
      .def_readonly("fpr", &RocCurve::fpr)
      .def_readonly("tpr", &RocCurve::tpr)
      .def_readonly("auc", &RocCurve::auc)
      .def_readonly("n_cases", &RocCurve::n_cases)
      .def_readonly("n_controls", &RocCurve::n_controls);
  m.def("time_dependent_roc",
        [](const std::vector<double>& mk, const std::vector<double>& t, const std::vector<int>& d,
           double h) { return time_dependent_roc(mk, t, d, h); },
        py::arg("marker"), py::arg("times"), py::arg("status"), py::arg("horizon"));

  py::class_<IntegratedAuc>(m, "IntegratedAuc")
      .def_readonly("value", &IntegratedAuc::value)
      .def_readonly("grid", &IntegratedAuc::grid)
      .def_readonly("aucs", &IntegratedAuc::aucs)
      .def_readonly("skipped", &IntegratedAuc::skipped);
  m.def("integrated_auc",
        [](const MarkerProvider& f, const std::vector<double>& t, const std::vector<int>& d,
           const std::vector<double>& grid) { return integrated_auc(f, t, d, grid); },
        py::arg("marker_at"), py::arg("times"), py::arg("status"), py::arg("grid"));
  m.def("default_auc_grid",
        [](const std::vector<double>& t, const std::vector<int>& d) {
          return default_auc_grid(t, d);
        },
        py::arg("times"), py::arg("status"));

  py::enum_<MarkerMode>(m, "MarkerMode")
      .value("neg_expected_time", MarkerMode::neg_expected_time)
      .value("one_minus_survival_at", MarkerMode::one_minus_survival_at);
  m.def("risk_marker",
        [](const Theta& th, const ModelSpec& s, const Row& x, MarkerMode mode, double h) {
          return risk_marker(th, s, x, mode, h);
        },
        py::arg("theta"), py::arg("spec"), py::arg("x"), py::arg("mode"),
        py::arg("horizon") = 0.0);
}
