#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cweibull/model.hpp"

namespace cweibull {

// Penalized objective: loglik - sum_l [lambda1 exp(-alpha_l) + lambda2 |beta_l|_1].
struct PenaltyConfig {
  double lambda1 = 0.0;
  double lambda2 = 0.0;

  void validate() const;
  double group_penalty(const GroupParams& g) const;
  double total(const Theta& theta) const;
};

struct SigmaBracket {
  double lower = 0.05;
  double upper = 10.0;
};

struct FitConfig {
  double epsilon = 1e-6;        // EM stops when |theta_new - theta_old|_2 < epsilon
  int max_em_iters = 2000;
  double sigma_floor = 0.05;
  double inner_step_size = 1.0;  // initial proximal step, in units of 1 / curvature
  int inner_iters = 50;          // proximal-gradient iterations per sweep
  double inner_tolerance = 1e-9;
  SigmaBracket sigma_bracket{};
  double sigma_tolerance = 1e-8;
  int m_step_sweeps = 1;  // (alpha, beta) / sigma alternations per M-step
  int n_starts = 5;
  double start_jitter = 0.1;
  std::uint64_t seed = 1;
  bool compute_standard_errors = true;

  void validate() const;
};

// n x L matrix of winning probabilities eta_il.
using EtaMatrix = Eigen::MatrixXd;

struct FitResult {
  Theta theta_hat;
  // Aligned with Theta::flatten(); empty when the information was singular.
  std::vector<double> std_errors;
  std::string std_error_message;
  // eta at each subject's observed time. Rows of censored subjects are
  // evaluated at the censoring time and flagged in `censored_rows`.
  EtaMatrix winning_probs;
  std::vector<bool> censored_rows;
  // Entry 0 is the starting point; entry m is after EM iteration m.
  std::vector<double> loglik_trace;
  std::vector<double> penalized_trace;
  bool converged = false;
  int n_iters = 0;
  int best_start = 0;

  double log_likelihood() const { return loglik_trace.back(); }
  double penalized_objective() const { return penalized_trace.back(); }
};

// Observed log-likelihood sum_i [delta_i log h(T_i) + log S(T_i)].
// Throws NumericError naming the subject on a non-finite term.
double log_likelihood(const Theta& theta, const ModelSpec& spec,
                      const Dataset& data);

// Gradient of log_likelihood with respect to Theta::flatten().
std::vector<double> score(const Theta& theta, const ModelSpec& spec,
                          const Dataset& data);

EtaMatrix e_step(const Theta& theta, const ModelSpec& spec,
                 const Dataset& data);

// Expected complete-data log-likelihood of group l and its sum over groups.
double q_group(std::size_t l, const Theta& theta, const ModelSpec& spec,
               const Dataset& data, const EtaMatrix& eta);
double q_function(const Theta& theta, const ModelSpec& spec,
                  const Dataset& data, const EtaMatrix& eta);
double penalized_q_group(std::size_t l, const Theta& theta,
                         const ModelSpec& spec, const Dataset& data,
                         const EtaMatrix& eta, const PenaltyConfig& penalty);

// Ascent direction of the penalized group objective. The lasso term
// contributes -lambda2 sign(beta_j), zero at beta_j = 0.
struct GroupGradient {
  double alpha = 0.0;
  std::vector<double> beta;
  double sigma = 0.0;
  bool sigma_clipped = false;
};

GroupGradient q_gradients(std::size_t l, const Theta& theta,
                          const ModelSpec& spec, const Dataset& data,
                          const EtaMatrix& eta, const PenaltyConfig& penalty,
                          double sigma_floor = 0.0);

struct MStepResult {
  Theta theta;
  std::vector<bool> stalled;  // per group: proximal step found no ascent
};

MStepResult m_step(const Theta& theta, const ModelSpec& spec,
                   const Dataset& data, const EtaMatrix& eta,
                   const PenaltyConfig& penalty, const FitConfig& config);

// Separate single-Weibull fits per group; sigma starts at 1.
Theta default_initialization(const ModelSpec& spec, const Dataset& data);

// Runs EM from `theta_init`, or from the default initialization plus
// (n_starts - 1) jittered copies when no start is given.
FitResult fit_em(const ModelSpec& spec, const Dataset& data,
                 const PenaltyConfig& penalty, const FitConfig& config,
                 const std::optional<Theta>& theta_init = {});

// sqrt(diag(I^-1)) with I the negative central-difference Hessian of the
// unpenalized log-likelihood. Throws SingularHessianError listing the
// parameters spanning near-null directions.
std::vector<double> standard_errors(const Theta& theta_hat,
                                    const ModelSpec& spec,
                                    const Dataset& data);

}  // namespace cweibull
