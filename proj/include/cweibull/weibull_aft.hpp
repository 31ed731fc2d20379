#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cweibull/model.hpp"

namespace cweibull {

// Plain Weibull accelerated-failure-time regression, maximized directly by
// damped Newton-Raphson on (alpha, beta, sigma). Serves as the single-Weibull
// comparator and as the per-group EM starting point.
struct WeibullAftFit {
  GroupParams params;
  double log_likelihood = 0.0;
  std::vector<double> std_errors;  // (alpha, beta..., sigma) from the analytic Hessian
  int iterations = 0;
  bool converged = false;
};

WeibullAftFit fit_weibull_aft(const Dataset& data,
                              std::span<const std::size_t> covariate_indices,
                              int max_iters = 200, double tolerance = 1e-10);

}  // namespace cweibull
