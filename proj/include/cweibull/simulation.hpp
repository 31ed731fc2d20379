#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cweibull/model.hpp"
#include "cweibull/rng.hpp"

namespace cweibull {

// Synthetic design: covariates i.i.d. N(0, I_p), latent times from `truth`,
// independent exponential censoring calibrated to `target_censoring`.
struct ScenarioSpec {
  ModelSpec model;
  Theta truth;
  std::size_t n = 0;
  double target_censoring = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedDataset {
  Dataset data;
  std::vector<std::size_t> latent_causes;
  std::vector<double> true_event_times;
  double realized_censoring_rate = 0.0;
};

// The three simulation designs with their reference tuning: example 1 allows
// censoring levels {0, 0.1}, example 2 {0, 0.1, 0.2, 0.3}, example 3
// {0.1, 0.3}. Throws SpecError for any other pair.
ScenarioSpec builtin_scenario(int example_id, double censoring_level,
                              std::uint64_t seed = 1);

// Censoring outcome for a vector of true event times.
struct CensoringResult {
  std::vector<double> times;
  std::vector<int> status;
  double realized_rate = 0.0;
  double rate = 0.0;  // calibrated exponential censoring rate
};

// Exponential rate rho solving mean_i (1 - exp(-rho t_i)) = target.
double calibrate_censoring_rate(std::span<const double> true_times,
                                double target_rate);

CensoringResult apply_censoring(std::span<const double> true_times,
                                double target_rate, Rng& rng);

SimulatedDataset generate(const ScenarioSpec& scenario);

}  // namespace cweibull
