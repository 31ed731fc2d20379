#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cweibull/rng.hpp"

namespace cweibull {

using RowView = std::span<const double>;
using CovariateMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Covariate columns feeding one competing group (the set A_l).
struct GroupSpec {
  std::vector<std::size_t> covariate_indices;
  std::string name;
};

// L competing groups over a p-column covariate matrix. Index sets may
// overlap between groups but must not coincide.
struct ModelSpec {
  std::vector<GroupSpec> groups;
  std::size_t p = 0;

  std::size_t num_groups() const noexcept { return groups.size(); }
  // Throws SpecError on the first violated invariant.
  void validate() const;
};

// Log-scale regression of one group: mu = alpha + x_A' beta, and the scale
// sigma of the Gumbel-minimum error (the Weibull shape is 1 / sigma).
struct GroupParams {
  double alpha = 0.0;
  std::vector<double> beta;
  double sigma = 1.0;
};

struct Theta {
  std::vector<GroupParams> groups;

  void validate(const ModelSpec& spec) const;

  // Flattened layout (alpha_1, beta_1..., sigma_1, alpha_2, ...).
  std::size_t flat_size() const noexcept;
  std::vector<double> flatten() const;
  static Theta unflatten(const ModelSpec& spec, std::span<const double> flat);
  // Human-readable label of every flattened coordinate, e.g. "CF2.beta[x4]".
  static std::vector<std::string> flat_labels(const ModelSpec& spec);
};

// Right-censored sample: status 1 marks an observed event.
struct Dataset {
  std::vector<double> times;
  std::vector<int> status;
  CovariateMatrix covariates;

  std::size_t size() const noexcept { return times.size(); }
  std::size_t num_covariates() const noexcept {
    return static_cast<std::size_t>(covariates.cols());
  }
  RowView row(std::size_t i) const {
    return {covariates.data() + i * num_covariates(), num_covariates()};
  }
  void validate() const;
};

// The competing model conditional on one covariate row: the per-group log
// scales mu_l and error scales sigma_l. Everything is evaluated in log space.
class ConditionalModel {
 public:
  ConditionalModel(const Theta& theta, const ModelSpec& spec, RowView x);
  ConditionalModel(std::vector<double> mu, std::vector<double> sigma);

  std::size_t num_groups() const noexcept { return mu_.size(); }
  const std::vector<double>& mu() const noexcept { return mu_; }
  const std::vector<double>& sigma() const noexcept { return sigma_; }

  // log of the group cumulative hazard (t / e^mu)^(1/sigma).
  double log_cumulative_hazard(std::size_t l, double log_t) const noexcept {
    return (log_t - mu_[l]) / sigma_[l];
  }
  double log_group_hazard(std::size_t l, double log_t) const noexcept {
    return log_cumulative_hazard(l, log_t) - log_sigma_[l] - log_t;
  }

  double cumulative_hazard(double t) const;
  double log_survival(double t) const;
  double survival(double t) const;
  std::vector<double> group_hazards(double t) const;
  double log_hazard(double t) const;
  double hazard(double t) const;
  double density(double t) const;
  std::vector<double> winning_probability(double t) const;

 private:
  std::vector<double> mu_;
  std::vector<double> sigma_;
  std::vector<double> log_sigma_;
};

double group_log_scale(const GroupParams& params, RowView x,
                       const GroupSpec& group);

// Survival at t >= 0; S(0) = 1 by right limit.
double survival(const Theta& theta, const ModelSpec& spec, RowView x, double t);
double hazard(const Theta& theta, const ModelSpec& spec, RowView x, double t);
std::vector<double> group_hazards(const Theta& theta, const ModelSpec& spec,
                                  RowView x, double t);
double density(const Theta& theta, const ModelSpec& spec, RowView x, double t);
// eta_l(t) = h_l(t) / h(t): probability that group l caused an event at t.
std::vector<double> winning_probability(const Theta& theta,
                                        const ModelSpec& spec, RowView x,
                                        double t);

struct Event {
  double time = 0.0;
  std::size_t cause = 0;
};

// Draws every latent group time by inverting the Gumbel-minimum error and
// returns the earliest one together with its group.
Event sample_event(const ConditionalModel& model, Rng& rng);
Event sample_event(const Theta& theta, const ModelSpec& spec, RowView x,
                   Rng& rng);

struct QuadratureConfig {
  double abs_tolerance = 1e-8;
  unsigned max_depth = 30;
  // Automatic truncation: smallest M with S(M) below this level.
  double auto_survival_level = 1e-6;
};

// E[T] = int_0^M S + tail, with the tail approximated by S(M)/h(M) and
// sandwiched by the Mill's-ratio bounds.
struct ExpectedTime {
  double estimate = 0.0;
  double finite_part = 0.0;
  double tail_term = 0.0;
  double tail_lower = 0.0;
  double tail_upper = 0.0;
  double truncation = 0.0;
};

// Bounds on int_M^inf S(t) dt. Throws ConfigError naming the failed
// condition when S(M) >= 0.5 or M h(M) <= 1.
struct TailBounds {
  double term = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};
TailBounds mills_ratio_tail(const ConditionalModel& model, double truncation);

double auto_truncation(const ConditionalModel& model, double survival_level);

ExpectedTime expected_survival_time(const ConditionalModel& model,
                                    std::optional<double> truncation = {},
                                    const QuadratureConfig& config = {});
ExpectedTime expected_survival_time(const Theta& theta, const ModelSpec& spec,
                                    RowView x,
                                    std::optional<double> truncation = {},
                                    const QuadratureConfig& config = {});

}  // namespace cweibull
