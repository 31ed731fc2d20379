#include "cweibull/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "cweibull/error.hpp"
#include "cweibull/estimation.hpp"
#include "cweibull/io.hpp"
#include "cweibull/metrics.hpp"
#include "cweibull/model.hpp"
#include "cweibull/simulation.hpp"
#include "cweibull/weibull_aft.hpp"

namespace cweibull::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = spdlog::get("cweibull");
  if (!logger) logger = spdlog::stderr_logger_st("cweibull");
  logger->set_pattern("cweibull: %l: %v");
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("CWEIBULL_LOG")) {
    level = spdlog::level::from_str(env);
  }
  logger->set_level(level);
  return logger;
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_filename(out.stem().string() + suffix);
  return p;
}

void require_readable(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw IoError("input file not found: " + p.string());
}

void require_writable(const fs::path& p) {
  const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) {
    throw IoError("output directory does not exist: " + parent.string());
  }
}

struct SimulateArgs {
  std::string scenario;
  int example = 0;
  double censoring = -1.0;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n;
  std::string out;
  std::string truth;
};

int cmd_simulate(const SimulateArgs& a, spdlog::logger& log) {
  const fs::path out = a.out;
  const fs::path truth_path = a.truth.empty() ? sibling(out, ".truth.json") : fs::path(a.truth);
  require_writable(out);
  require_writable(truth_path);

  ScenarioSpec scenario;
  if (!a.scenario.empty()) {
    if (a.example != 0) throw ConfigError("give either --scenario or --example, not both");
    require_readable(a.scenario);
    scenario = io::scenario_from_json(io::read_json(a.scenario));
    if (a.censoring >= 0.0) scenario.target_censoring = a.censoring;
  } else {
    if (a.example == 0) throw ConfigError("one of --scenario or --example is required");
    if (a.censoring < 0.0) throw ConfigError("--example needs --censoring");
    try {
      scenario = builtin_scenario(a.example, a.censoring);
    } catch (const SpecError& e) {
      throw ConfigError(e.what());
    }
  }
  if (a.seed) scenario.seed = *a.seed;
  if (a.n) scenario.n = *a.n;
  try {
    scenario.validate();
  } catch (const SpecError& e) {
    throw ConfigError(std::string("invalid scenario: ") + e.what());
  }

  const SimulatedDataset sim = generate(scenario);
  const auto names = io::default_covariate_names(scenario.model.p);
  const std::string csv = io::to_csv(io::dataset_to_csv({sim.data, names}));
  const std::string truth = io::dump_json(io::truth_to_json(scenario, sim, names));
  io::write_text_atomic(out, csv);
  io::write_text_atomic(truth_path, truth);
  log.info("simulated {} rows, realized censoring {:.4f}", scenario.n,
           sim.realized_censoring_rate);
  return kOk;
}

struct FitArgs {
  std::string data;
  std::string spec;
  bool baseline = false;
  std::string init;
  std::string out;
  std::string eta;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  FitConfig config;
  bool no_se = false;
};

io::FitFile fit_baseline(const io::NamedDataset& nd, EtaMatrix& eta) {
  const std::size_t p = nd.data.num_covariates();
  io::FitFile file;
  file.method = "weibull_aft";
  file.covariate_names = nd.covariate_names;
  GroupSpec all;
  all.name = "all";
  for (std::size_t j = 0; j < p; ++j) all.covariate_indices.push_back(j);
  file.spec.p = p;
  file.spec.groups.push_back(all);
  const WeibullAftFit fit = fit_weibull_aft(nd.data, all.covariate_indices);
  file.theta.groups.push_back(fit.params);
  file.std_errors = fit.std_errors;
  file.converged = fit.converged;
  file.n_iters = fit.iterations;
  file.log_likelihood = fit.log_likelihood;
  file.penalized_objective = fit.log_likelihood;
  file.loglik_trace = {fit.log_likelihood};
  eta = EtaMatrix::Ones(static_cast<Eigen::Index>(nd.data.size()), 1);
  return file;
}

int cmd_fit(FitArgs a, spdlog::logger& log) {
  const fs::path out = a.out;
  const fs::path eta_path = a.eta.empty() ? sibling(out, ".eta.csv") : fs::path(a.eta);
  require_writable(out);
  require_writable(eta_path);
  require_readable(a.data);
  if (!a.spec.empty()) require_readable(a.spec);
  if (!a.init.empty()) require_readable(a.init);
  if (a.baseline && (!a.spec.empty() || !a.init.empty())) {
    throw ConfigError("--baseline cannot be combined with --spec or --init");
  }
  if (!a.baseline && a.spec.empty() && a.init.empty()) {
    throw ConfigError("one of --spec, --init or --baseline is required");
  }

  const io::NamedDataset nd = io::dataset_from_csv(io::read_csv(a.data));
  EtaMatrix eta;
  io::FitFile file;
  if (a.baseline) {
    file = fit_baseline(nd, eta);
  } else {
    PenaltyConfig penalty{a.lambda1, a.lambda2};
    FitConfig config = a.config;
    config.compute_standard_errors = !a.no_se;
    try {
      penalty.validate();
      config.validate();
    } catch (const SpecError& e) {
      throw ConfigError(e.what());
    }
    std::optional<Theta> init;
    ModelSpec spec;
    if (!a.init.empty()) {
      const io::FitFile prev = io::fit_from_json(io::read_json(a.init));
      const io::NamedModel m = io::model_from_json(io::fit_to_json(prev), nd.covariate_names);
      spec = m.spec;
      init = m.theta;
    }
    if (!a.spec.empty()) {
      const io::NamedModel m = io::model_from_json(io::read_json(a.spec), nd.covariate_names);
      if (init) {
        const bool same = m.spec.groups.size() == spec.groups.size() &&
                          std::equal(m.spec.groups.begin(), m.spec.groups.end(),
                                     spec.groups.begin(), [](const auto& x, const auto& y) {
                                       return x.covariate_indices == y.covariate_indices;
                                     });
        if (!same) throw ConfigError("--init groups do not match --spec groups");
      } else {
        init = m.theta;
      }
      spec = m.spec;
    }
    const FitResult fit = fit_em(spec, nd.data, penalty, config, init);
    file.method = "em";
    file.covariate_names = nd.covariate_names;
    file.spec = spec;
    file.theta = fit.theta_hat;
    file.std_errors = fit.std_errors;
    file.std_error_message = fit.std_error_message;
    file.penalty = penalty;
    file.config = config;
    file.converged = fit.converged;
    file.n_iters = fit.n_iters;
    file.log_likelihood = fit.log_likelihood();
    file.penalized_objective = fit.penalized_objective();
    file.loglik_trace = fit.loglik_trace;
    eta = fit.winning_probs;
    if (!fit.std_error_message.empty()) log.warn("{}", fit.std_error_message);
    if (!fit.converged) log.warn("EM did not converge in {} iterations", fit.n_iters);
  }
  io::write_text_atomic(out, io::dump_json(io::fit_to_json(file)));
  io::write_text_atomic(eta_path, io::to_csv(io::eta_to_csv(nd.data, eta, file.spec)));
  log.info("log-likelihood {} after {} iterations", file.log_likelihood, file.n_iters);
  return kOk;
}

io::FitFile load_fit(const std::string& path) {
  require_readable(path);
  return io::fit_from_json(io::read_json(path));
}

std::string group_label(const ModelSpec& spec, std::size_t l) {
  return spec.groups[l].name.empty() ? "CF" + std::to_string(l + 1) : spec.groups[l].name;
}

struct PredictArgs {
  std::string fit;
  std::string data;
  std::vector<double> at;
  std::string out;
};

int cmd_predict(const PredictArgs& a, spdlog::logger& log) {
  for (double t : a.at) {
    if (!(t > 0.0)) throw ConfigError("--at times must be positive, got " + io::format_double(t));
  }
  require_writable(a.out);
  require_readable(a.data);
  const io::FitFile fit = load_fit(a.fit);
  const io::NamedDataset nd = io::covariates_from_csv(io::read_csv(a.data), fit.covariate_names);

  io::CsvTable table;
  table.header = {"row", "expected_time"};
  for (double t : a.at) {
    const std::string ts = io::format_double(t);
    table.header.push_back("S_at_" + ts);
    for (std::size_t l = 0; l < fit.spec.num_groups(); ++l) {
      table.header.push_back("eta_" + group_label(fit.spec, l) + "_at_" + ts);
    }
  }
  for (std::size_t i = 0; i < nd.data.size(); ++i) {
    const ConditionalModel model(fit.theta, fit.spec, nd.data.row(i));
    std::vector<std::string> row{std::to_string(i + 1)};
    try {
      row.push_back(io::format_double(expected_survival_time(model).estimate));
    } catch (const Error& e) {
      throw NumericError("row " + std::to_string(i + 1) + ": " + e.what(), i);
    }
    for (double t : a.at) {
      row.push_back(io::format_double(model.survival(t)));
      for (double e : model.winning_probability(t)) row.push_back(io::format_double(e));
    }
    table.rows.push_back(std::move(row));
  }
  io::write_text_atomic(a.out, io::to_csv(table));
  log.info("predicted {} rows", nd.data.size());
  return kOk;
}

struct EvaluateArgs {
  std::string fit;
  std::string data;
  std::vector<double> horizons;
  std::string out;
  std::string rocdir;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int cmd_evaluate(const EvaluateArgs& a, spdlog::logger& log) {
  for (double t : a.horizons) {
    if (!(t > 0.0)) throw ConfigError("horizons must be positive, got " + io::format_double(t));
  }
  require_writable(a.out);
  require_readable(a.data);
  if (!a.rocdir.empty() && !fs::is_directory(a.rocdir)) {
    std::error_code ec;
    fs::create_directories(a.rocdir, ec);
    if (ec) throw IoError("cannot create ROC directory " + a.rocdir);
  }
  const io::FitFile fit = load_fit(a.fit);
  const io::NamedDataset nd = io::dataset_from_csv(io::read_csv(a.data));
  const io::NamedDataset x = io::covariates_from_csv(io::read_csv(a.data), fit.covariate_names);
  const Dataset& data = nd.data;
  const std::size_t n = data.size();

  auto markers_at = [&](double t) {
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = risk_marker(fit.theta, fit.spec, x.data.row(i), MarkerMode::one_minus_survival_at, t);
    }
    return m;
  };
  std::vector<double> risk(n);
  for (std::size_t i = 0; i < n; ++i) {
    risk[i] = risk_marker(fit.theta, fit.spec, x.data.row(i), MarkerMode::neg_expected_time);
  }

  json warnings = json::array();
  json report;
  report["format_version"] = io::kFormatVersion;
  report["kind"] = "evaluation";
  report["n"] = n;
  report["events"] = std::count(data.status.begin(), data.status.end(), 1);

  const Concordance c = concordance_index(risk, data.times, data.status);
  report["c_index"] = c.no_comparable_pairs ? json(nullptr) : json(c.value);
  if (c.no_comparable_pairs) warnings.push_back("no comparable pairs for the C-index");
  const double tau = *std::max_element(data.times.begin(), data.times.end());
  const Concordance cw = concordance_index_ipcw(risk, data.times, data.status, tau);
  report["c_index_ipcw"] = cw.no_comparable_pairs ? json(nullptr) : json(cw.value);

  try {
    const auto grid = default_auc_grid(data.times, data.status);
    const IntegratedAuc iauc = integrated_auc(markers_at, data.times, data.status, grid);
    report["iauc"] = iauc.value;
    report["iauc_grid"] = iauc.grid;
    for (double t : iauc.skipped) {
      warnings.push_back("iAUC grid point " + io::format_double(t) + " skipped: degenerate horizon");
    }
  } catch (const DegenerateHorizonError& e) {
    report["iauc"] = nullptr;
    warnings.push_back(std::string("iAUC unavailable: ") + e.what());
  }

  std::vector<double> horizons = a.horizons;
  if (horizons.empty()) horizons.push_back(median(data.times));
  json by_horizon = json::array();
  for (std::size_t k = 0; k < horizons.size(); ++k) {
    const double t = horizons[k];
    try {
      const RocCurve roc = time_dependent_roc(markers_at(t), data.times, data.status, t);
      json entry = {{"horizon", t},
                    {"auc", roc.auc},
                    {"n_cases", roc.n_cases},
                    {"n_controls", roc.n_controls}};
      if (!a.rocdir.empty()) {
        const std::string stem = "roc_" + std::to_string(k + 1);
        io::write_text_atomic(fs::path(a.rocdir) / (stem + ".csv"), io::to_csv(io::roc_to_csv(roc)));
        io::write_text_atomic(fs::path(a.rocdir) / (stem + ".json"),
                              io::dump_json(io::roc_to_json(roc)));
        entry["roc_csv"] = stem + ".csv";
      }
      by_horizon.push_back(std::move(entry));
    } catch (const DegenerateHorizonError& e) {
      const std::string msg = "horizon " + io::format_double(t) + " skipped: " + e.what();
      log.warn("{}", msg);
      warnings.push_back(msg);
    }
  }
  report["auc_by_horizon"] = std::move(by_horizon);
  report["warnings"] = std::move(warnings);
  io::write_text_atomic(a.out, io::dump_json(report));
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  auto log = make_logger();
  CLI::App app{"Competing Weibull AFT survival models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cweibull 0.1.0");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate a survival dataset");
  simulate->add_option("--scenario", sim.scenario, "Scenario JSON file");
  simulate->add_option("--example", sim.example, "Built-in example (1, 2 or 3)")
      ->check(CLI::Range(1, 3));
  simulate->add_option("--censoring", sim.censoring, "Target censoring rate")
      ->check(CLI::Range(0.0, 0.99));
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--n", sim.n, "Number of subjects")->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim.out, "Output CSV")->required();
  simulate->add_option("--truth", sim.truth, "Truth JSON (default: output stem + .truth.json)");

  FitArgs fit;
  auto* fitc = app.add_subcommand("fit", "Fit a competing Weibull model");
  fitc->add_option("--data", fit.data, "Data CSV")->required();
  fitc->add_option("--spec", fit.spec, "Model spec JSON");
  fitc->add_flag("--baseline", fit.baseline, "Fit a single Weibull AFT on all covariates");
  fitc->add_option("--init", fit.init, "Start from the estimates in a fit JSON");
  fitc->add_option("--out", fit.out, "Output fit JSON")->required();
  fitc->add_option("--eta", fit.eta, "Winning-probability CSV (default: output stem + .eta.csv)");
  fitc->add_option("--lambda1", fit.lambda1, "Intercept penalty")->capture_default_str();
  fitc->add_option("--lambda2", fit.lambda2, "Lasso penalty")->capture_default_str();
  fitc->add_option("--epsilon", fit.config.epsilon, "EM stopping tolerance")->capture_default_str();
  fitc->add_option("--max-iters", fit.config.max_em_iters, "EM iteration cap")->capture_default_str();
  fitc->add_option("--starts", fit.config.n_starts, "Number of EM starts")->capture_default_str();
  fitc->add_option("--seed", fit.config.seed, "Seed for jittered starts")->capture_default_str();
  fitc->add_option("--sigma-floor", fit.config.sigma_floor, "Lower bound on scales")
      ->capture_default_str();
  fitc->add_flag("--no-se", fit.no_se, "Skip standard errors");

  PredictArgs pred;
  auto* predict = app.add_subcommand("predict", "Predict survival quantities");
  predict->add_option("--fit", pred.fit, "Fit JSON")->required();
  predict->add_option("--data", pred.data, "Covariate CSV")->required();
  predict->add_option("--at", pred.at, "Comma-separated times")->delimiter(',');
  predict->add_option("--out", pred.out, "Output CSV")->required();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Compute discrimination metrics");
  evaluate->add_option("--fit", ev.fit, "Fit JSON")->required();
  evaluate->add_option("--data", ev.data, "Test CSV")->required();
  evaluate->add_option("--horizons", ev.horizons, "Comma-separated ROC horizons")->delimiter(',');
  evaluate->add_option("--out", ev.out, "Report JSON")->required();
  evaluate->add_option("--rocdir", ev.rocdir, "Directory for ROC curve files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*simulate) return cmd_simulate(sim, *log);
    if (*fitc) return cmd_fit(fit, *log);
    if (*predict) return cmd_predict(pred, *log);
    if (*evaluate) return cmd_evaluate(ev, *log);
  } catch (const IoError& e) {
    log->error("{}", e.what());
    return kIoError;
  } catch (const NumericError& e) {
    log->error("{}", e.what());
    return kNumericError;
  } catch (const SingularHessianError& e) {
    log->error("{}", e.what());
    return kNumericError;
  } catch (const Error& e) {
    log->error("{}", e.what());
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    log->error("malformed JSON content: {}", e.what());
    return kConfigError;
  }
  return kConfigError;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("cweibull");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cweibull::cli
