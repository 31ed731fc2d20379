#include "cweibull/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cweibull/error.hpp"

namespace cweibull {

namespace {

struct GroupRow {
  std::vector<std::size_t> indices;  // zero-based covariate columns
  double alpha;
  std::vector<double> beta;
  double sigma;
};

ScenarioSpec make_scenario(std::size_t p, std::size_t n,
                           const std::vector<GroupRow>& rows) {
  ScenarioSpec s;
  s.model.p = p;
  s.n = n;
  for (std::size_t l = 0; l < rows.size(); ++l) {
    s.model.groups.push_back({rows[l].indices, "CF" + std::to_string(l + 1)});
    s.truth.groups.push_back({rows[l].alpha, rows[l].beta, rows[l].sigma});
  }
  return s;
}

bool close(double a, double b) { return std::abs(a - b) < 1e-9; }

}  // namespace

void ScenarioSpec::validate() const {
  model.validate();
  truth.validate(model);
  if (n == 0) throw SpecError("scenario needs n >= 1");
  if (!(target_censoring >= 0.0 && target_censoring < 1.0)) {
    throw SpecError("target censoring rate must lie in [0, 1)");
  }
}

ScenarioSpec builtin_scenario(int example_id, double censoring_level,
                              std::uint64_t seed) {
  ScenarioSpec s;
  std::vector<double> levels;
  switch (example_id) {
    case 1:
      // Disjoint single covariates.
      s = make_scenario(3, 1000,
                        {{{0}, 1.6, {1.2}, 1.0},
                         {{1}, 1.2, {2.0}, 1.0},
                         {{2}, 2.1, {1.0}, 1.1}});
      levels = {0.0, 0.1};
      break;
    case 2:
      // Partially overlapping covariates.
      s = make_scenario(4, 1500,
                        {{{0, 1, 3}, 1.0, {-3.0, 2.0, 1.0}, 1.0},
                         {{0, 1}, 1.5, {2.0, 2.0}, 1.0},
                         {{0, 1, 2}, 1.0, {-2.0, 3.0, 2.0}, 1.1}});
      levels = {0.0, 0.1, 0.2, 0.3};
      break;
    case 3:
      // Overlapping covariates with true zeros at (CF2, x2) and (CF3, x4).
      s = make_scenario(6, 1500,
                        {{{0, 1}, 1.0, {-3.0, 2.0}, 1.0},
                         {{1, 2, 3}, 1.5, {0.0, 2.0, 2.0}, 1.0},
                         {{3, 4, 5}, 1.0, {0.0, -2.0, 3.0}, 1.1}});
      levels = {0.1, 0.3};
      break;
    default:
      throw SpecError("unknown built-in example " + std::to_string(example_id) +
                      " (expected 1, 2 or 3)");
  }
  if (std::none_of(levels.begin(), levels.end(),
                   [&](double v) { return close(v, censoring_level); })) {
    throw SpecError("example " + std::to_string(example_id) +
                    " is not defined at censoring level " +
                    std::to_string(censoring_level));
  }
  s.target_censoring = censoring_level;
  s.seed = seed;
  return s;
}

double calibrate_censoring_rate(std::span<const double> true_times,
                                double target_rate) {
  if (!(target_rate >= 0.0 && target_rate < 1.0)) {
    throw CalibrationError("target censoring rate must lie in [0, 1)");
  }
  if (true_times.empty()) throw CalibrationError("no event times to censor");
  if (target_rate == 0.0) return 0.0;
  auto censored_fraction = [&](double rate) {
    double sum = 0.0;
    for (double t : true_times) sum += -std::expm1(-rate * t);
    return sum / static_cast<double>(true_times.size());
  };
  double lo = 0.0;
  double hi = 1.0 / *std::max_element(true_times.begin(), true_times.end());
  while (censored_fraction(hi) < target_rate) {
    hi *= 2.0;
    if (!std::isfinite(hi) || hi > 1e300) {
      throw CalibrationError("cannot bracket the censoring rate for target " +
                             std::to_string(target_rate));
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (censored_fraction(mid) < target_rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

CensoringResult apply_censoring(std::span<const double> true_times,
                                double target_rate, Rng& rng) {
  CensoringResult out;
  out.rate = calibrate_censoring_rate(true_times, target_rate);
  out.times.assign(true_times.begin(), true_times.end());
  out.status.assign(true_times.size(), 1);
  if (out.rate == 0.0) return out;
  std::size_t censored = 0;
  for (std::size_t i = 0; i < true_times.size(); ++i) {
    const double c = rng.exponential(out.rate);
    if (c <= true_times[i]) {
      out.times[i] = c;
      out.status[i] = 0;
      ++censored;
    }
  }
  out.realized_rate =
      static_cast<double>(censored) / static_cast<double>(true_times.size());
  return out;
}

SimulatedDataset generate(const ScenarioSpec& scenario) {
  scenario.validate();
  const std::size_t n = scenario.n;
  const std::size_t p = scenario.model.p;
  const Rng root(scenario.seed);
  Rng covariate_rng = root.split(0);
  Rng event_rng = root.split(1);
  Rng censor_rng = root.split(2);

  SimulatedDataset sim;
  sim.data.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < sim.data.covariates.rows(); ++i) {
    for (Eigen::Index j = 0; j < sim.data.covariates.cols(); ++j) {
      sim.data.covariates(i, j) = covariate_rng.normal();
    }
  }
  sim.true_event_times.resize(n);
  sim.latent_causes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Event e = sample_event(scenario.truth, scenario.model,
                                 sim.data.row(i), event_rng);
    sim.true_event_times[i] = e.time;
    sim.latent_causes[i] = e.cause;
  }
  CensoringResult cens =
      apply_censoring(sim.true_event_times, scenario.target_censoring, censor_rng);
  sim.data.times = std::move(cens.times);
  sim.data.status = std::move(cens.status);
  sim.realized_censoring_rate = cens.realized_rate;
  return sim;
}

}  // namespace cweibull
