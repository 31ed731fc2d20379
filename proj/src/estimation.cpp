#include "cweibull/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cweibull/error.hpp"
#include "cweibull/weibull_aft.hpp"

namespace cweibull {

namespace {

constexpr double kInvGolden = 0.6180339887498949;

double soft_threshold(double v, double tau) {
  if (v > tau) return v - tau;
  if (v < -tau) return v + tau;
  return 0.0;
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

void check_dimensions(const ModelSpec& spec, const Dataset& data) {
  if (data.num_covariates() != spec.p) {
    throw SpecError("dataset has " + std::to_string(data.num_covariates()) +
                    " covariates, model expects " + std::to_string(spec.p));
  }
}

void check_eta(const EtaMatrix& eta, const ModelSpec& spec,
               const Dataset& data) {
  if (static_cast<std::size_t>(eta.rows()) != data.size() ||
      static_cast<std::size_t>(eta.cols()) != spec.num_groups()) {
    throw SpecError("winning-probability matrix must be n x L");
  }
}

// Cached per-group design matrices and log times.
struct Workspace {
  Eigen::VectorXd log_t;
  Eigen::VectorXd delta;
  std::vector<Eigen::MatrixXd> designs;

  Workspace(const ModelSpec& spec, const Dataset& data) {
    const auto n = static_cast<Eigen::Index>(data.size());
    log_t.resize(n);
    delta.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      log_t[i] = std::log(data.times[static_cast<std::size_t>(i)]);
      delta[i] = data.status[static_cast<std::size_t>(i)];
    }
    for (const auto& group : spec.groups) {
      const auto& idx = group.covariate_indices;
      Eigen::MatrixXd x(n, static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        x.col(static_cast<Eigen::Index>(k)) =
            data.covariates.col(static_cast<Eigen::Index>(idx[k]));
      }
      designs.push_back(std::move(x));
    }
  }

  Eigen::VectorXd mu(std::size_t l, double alpha,
                     const Eigen::VectorXd& beta) const {
    const auto& x = designs[l];
    if (x.cols() == 0) return Eigen::VectorXd::Constant(log_t.size(), alpha);
    return (x * beta).array() + alpha;
  }

  Eigen::VectorXd mu(std::size_t l, const GroupParams& g) const {
    return mu(l, g.alpha, Eigen::Map<const Eigen::VectorXd>(
                              g.beta.data(), static_cast<Eigen::Index>(g.beta.size())));
  }

  // n x L matrix of z_il = (log T_i - mu_il) / sigma_l.
  Eigen::MatrixXd standardized(const Theta& theta) const {
    Eigen::MatrixXd z(log_t.size(), static_cast<Eigen::Index>(designs.size()));
    for (std::size_t l = 0; l < designs.size(); ++l) {
      z.col(static_cast<Eigen::Index>(l)) =
          (log_t - mu(l, theta.groups[l])) / theta.groups[l].sigma;
    }
    return z;
  }
};

double log_likelihood_impl(const Workspace& ws, const Theta& theta) {
  const Eigen::MatrixXd z = ws.standardized(theta);
  const Eigen::Index n = z.rows();
  const Eigen::Index num_groups = z.cols();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double cum_hazard = 0.0;
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < num_groups; ++l) {
      cum_hazard += std::exp(z(i, l));
      top = std::max(top, z(i, l) - std::log(theta.groups[static_cast<std::size_t>(l)].sigma));
    }
    double term = -cum_hazard;
    if (ws.delta[i] != 0.0) {
      double sum = 0.0;
      for (Eigen::Index l = 0; l < num_groups; ++l) {
        sum += std::exp(z(i, l) -
                        std::log(theta.groups[static_cast<std::size_t>(l)].sigma) - top);
      }
      term += top + std::log(sum) - ws.log_t[i];
    }
    if (!std::isfinite(term)) {
      std::ostringstream os;
      os << "non-finite log-likelihood contribution at subject " << i + 1;
      throw NumericError(os.str(), static_cast<std::size_t>(i));
    }
    total += term;
  }
  return total;
}

EtaMatrix e_step_impl(const Workspace& ws, const Theta& theta) {
  EtaMatrix eta = ws.standardized(theta);
  for (std::size_t l = 0; l < theta.groups.size(); ++l) {
    eta.col(static_cast<Eigen::Index>(l)).array() -= std::log(theta.groups[l].sigma);
  }
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const double top = eta.row(i).maxCoeff();
    eta.row(i) = (eta.row(i).array() - top).exp();
    eta.row(i) /= eta.row(i).sum();
  }
  return eta;
}

// Q_l at (alpha, beta, sigma) given weights w_i = delta_i eta_il.
double q_group_value(const Workspace& ws, std::size_t l,
                     const Eigen::VectorXd& weight, double alpha,
                     const Eigen::VectorXd& beta, double sigma) {
  const Eigen::ArrayXd z = (ws.log_t - ws.mu(l, alpha, beta)).array() / sigma;
  return (weight.array() * (z - std::log(sigma) - ws.log_t.array())).sum() -
         z.exp().sum();
}

struct GroupState {
  double alpha;
  Eigen::VectorXd beta;
  double sigma;
};

// Smooth (alpha, beta) part of the penalized group objective at fixed sigma,
// up to terms constant in (alpha, beta).
double smooth_part(const Workspace& ws, std::size_t l,
                   const Eigen::VectorXd& weight, const GroupState& s,
                   double lambda1, Eigen::ArrayXd* z_out = nullptr) {
  Eigen::ArrayXd z = (ws.log_t - ws.mu(l, s.alpha, s.beta)).array() / s.sigma;
  const double value =
      (weight.array() * z).sum() - z.exp().sum() - lambda1 * std::exp(-s.alpha);
  if (z_out) *z_out = std::move(z);
  return value;
}

// Proximal gradient ascent on (alpha, beta) with backtracking. Returns false
// when no ascent step could be found.
bool update_location(const Workspace& ws, std::size_t l,
                     const Eigen::VectorXd& weight, GroupState& s,
                     const PenaltyConfig& penalty, const FitConfig& config) {
  const auto& x = ws.designs[l];
  Eigen::ArrayXd z;
  double value = smooth_part(ws, l, weight, s, penalty.lambda1, &z);
  double curvature = z.exp().sum() / (s.sigma * s.sigma);
  double step = config.inner_step_size / std::max(curvature, 1e-12);
  bool any_step = false;
  for (int it = 0; it < config.inner_iters; ++it) {
    const Eigen::VectorXd resid = (z.exp() - weight.array()).matrix() / s.sigma;
    const double g_alpha = resid.sum() + penalty.lambda1 * std::exp(-s.alpha);
    const Eigen::VectorXd g_beta = x.transpose() * resid;

    bool accepted = false;
    GroupState trial = s;
    double trial_value = 0.0;
    Eigen::ArrayXd trial_z;
    for (int bt = 0; bt < 60; ++bt) {
      trial.alpha = s.alpha + step * g_alpha;
      for (Eigen::Index k = 0; k < s.beta.size(); ++k) {
        trial.beta[k] =
            soft_threshold(s.beta[k] + step * g_beta[k], step * penalty.lambda2);
      }
      const double d_alpha = trial.alpha - s.alpha;
      const Eigen::VectorXd d_beta = trial.beta - s.beta;
      trial_value = smooth_part(ws, l, weight, trial, penalty.lambda1, &trial_z);
      const double model = value + g_alpha * d_alpha + g_beta.dot(d_beta) -
                           (d_alpha * d_alpha + d_beta.squaredNorm()) / (2 * step);
      if (std::isfinite(trial_value) && trial_value >= model) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return any_step;
    const double change = std::max(std::abs(trial.alpha - s.alpha),
                                   s.beta.size() ? (trial.beta - s.beta).lpNorm<Eigen::Infinity>() : 0.0);
    s = trial;
    value = trial_value;
    z = std::move(trial_z);
    any_step = true;
    step *= 2.0;
    if (change < config.inner_tolerance) break;
  }
  return true;
}

// Golden-section maximization of Q_l over sigma at fixed (alpha, beta).
void update_scale(const Workspace& ws, std::size_t l,
                  const Eigen::VectorXd& weight, GroupState& s,
                  const FitConfig& config) {
  const Eigen::ArrayXd resid = (ws.log_t - ws.mu(l, s.alpha, s.beta)).array();
  const double w_sum = weight.sum();
  const double w_resid = (weight.array() * resid).sum();
  auto objective = [&](double sigma) {
    return w_resid / sigma - w_sum * std::log(sigma) - (resid / sigma).exp().sum();
  };
  double a = std::max(config.sigma_bracket.lower, config.sigma_floor);
  double b = config.sigma_bracket.upper;
  double c = b - kInvGolden * (b - a);
  double d = a + kInvGolden * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  while (b - a > config.sigma_tolerance) {
    if (fc > fd || !std::isfinite(fd)) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvGolden * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvGolden * (b - a);
      fd = objective(d);
    }
  }
  const double candidate = 0.5 * (a + b);
  if (objective(candidate) >= objective(s.sigma)) s.sigma = candidate;
}

bool m_step_group(const Workspace& ws, std::size_t l, const EtaMatrix& eta,
                  GroupParams& g, const PenaltyConfig& penalty,
                  const FitConfig& config) {
  const Eigen::VectorXd weight =
      ws.delta.cwiseProduct(eta.col(static_cast<Eigen::Index>(l)));
  GroupState s{g.alpha,
               Eigen::Map<const Eigen::VectorXd>(g.beta.data(),
                                                 static_cast<Eigen::Index>(g.beta.size())),
               std::max(g.sigma, std::max(config.sigma_bracket.lower, config.sigma_floor))};
  bool moved = false;
  for (int sweep = 0; sweep < config.m_step_sweeps; ++sweep) {
    const GroupState before = s;
    moved |= update_location(ws, l, weight, s, penalty, config);
    update_scale(ws, l, weight, s, config);
    const double change = std::max(
        {std::abs(s.alpha - before.alpha), std::abs(s.sigma - before.sigma),
         s.beta.size() ? (s.beta - before.beta).lpNorm<Eigen::Infinity>() : 0.0});
    if (change < config.inner_tolerance) break;
  }
  g.alpha = s.alpha;
  g.beta.assign(s.beta.data(), s.beta.data() + s.beta.size());
  g.sigma = s.sigma;
  return !moved;
}

Theta m_step_impl(const Workspace& ws, const Theta& theta, const EtaMatrix& eta,
                  const PenaltyConfig& penalty, const FitConfig& config,
                  std::vector<bool>* stalled) {
  Theta next = theta;
  if (stalled) stalled->assign(theta.groups.size(), false);
  for (std::size_t l = 0; l < theta.groups.size(); ++l) {
    const bool stuck = m_step_group(ws, l, eta, next.groups[l], penalty, config);
    if (stalled) (*stalled)[l] = stuck;
  }
  return next;
}

double distance(const Theta& a, const Theta& b) {
  const auto fa = a.flatten();
  const auto fb = b.flatten();
  double sum = 0.0;
  for (std::size_t k = 0; k < fa.size(); ++k) sum += (fa[k] - fb[k]) * (fa[k] - fb[k]);
  return std::sqrt(sum);
}

FitResult run_em(const Workspace& ws, Theta theta, const PenaltyConfig& penalty,
                 const FitConfig& config) {
  FitResult result;
  double ll = log_likelihood_impl(ws, theta);
  result.loglik_trace.push_back(ll);
  result.penalized_trace.push_back(ll - penalty.total(theta));
  for (int m = 1; m <= config.max_em_iters; ++m) {
    const EtaMatrix eta = e_step_impl(ws, theta);
    Theta next = m_step_impl(ws, theta, eta, penalty, config, nullptr);
    ll = log_likelihood_impl(ws, next);
    result.loglik_trace.push_back(ll);
    result.penalized_trace.push_back(ll - penalty.total(next));
    const double change = distance(next, theta);
    theta = std::move(next);
    result.n_iters = m;
    if (change < config.epsilon) {
      result.converged = true;
      break;
    }
  }
  result.theta_hat = std::move(theta);
  return result;
}

std::vector<double> score_impl(const Workspace& ws, const Theta& theta) {
  const Eigen::MatrixXd z = ws.standardized(theta);
  const EtaMatrix eta = e_step_impl(ws, theta);
  std::vector<double> grad;
  grad.reserve(theta.flat_size());
  for (std::size_t l = 0; l < theta.groups.size(); ++l) {
    const auto col = static_cast<Eigen::Index>(l);
    const double sigma = theta.groups[l].sigma;
    const Eigen::ArrayXd cum = z.col(col).array().exp();
    const Eigen::ArrayXd w = ws.delta.array() * eta.col(col).array();
    const Eigen::VectorXd g_mu = ((cum - w) / sigma).matrix();
    grad.push_back(g_mu.sum());
    const Eigen::VectorXd g_beta = ws.designs[l].transpose() * g_mu;
    grad.insert(grad.end(), g_beta.data(), g_beta.data() + g_beta.size());
    const Eigen::ArrayXd r = z.col(col).array() * sigma;
    grad.push_back((w * (-r / (sigma * sigma) - 1.0 / sigma) +
                    r * cum / (sigma * sigma))
                       .sum());
  }
  return grad;
}

}  // namespace

void PenaltyConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !std::isfinite(lambda1) ||
      !std::isfinite(lambda2)) {
    throw ConfigError("penalty weights must be finite and nonnegative");
  }
}

double PenaltyConfig::group_penalty(const GroupParams& g) const {
  double l1 = 0.0;
  for (double b : g.beta) l1 += std::abs(b);
  return lambda1 * std::exp(-g.alpha) + lambda2 * l1;
}

double PenaltyConfig::total(const Theta& theta) const {
  double sum = 0.0;
  for (const auto& g : theta.groups) sum += group_penalty(g);
  return sum;
}

void FitConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (max_em_iters < 1) throw ConfigError("max_em_iters must be at least 1");
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be positive");
  if (!(inner_step_size > 0.0)) throw ConfigError("inner_step_size must be positive");
  if (inner_iters < 1) throw ConfigError("inner_iters must be at least 1");
  if (!(sigma_bracket.lower >= sigma_floor) ||
      !(sigma_bracket.upper > sigma_bracket.lower)) {
    throw ConfigError("sigma bracket must satisfy sigma_floor <= lower < upper");
  }
  if (!(sigma_tolerance > 0.0)) throw ConfigError("sigma_tolerance must be positive");
  if (m_step_sweeps < 1) throw ConfigError("m_step_sweeps must be at least 1");
  if (n_starts < 1) throw ConfigError("n_starts must be at least 1");
  if (!(start_jitter >= 0.0)) throw ConfigError("start_jitter must be nonnegative");
}

double log_likelihood(const Theta& theta, const ModelSpec& spec,
                      const Dataset& data) {
  theta.validate(spec);
  check_dimensions(spec, data);
  return log_likelihood_impl(Workspace(spec, data), theta);
}

std::vector<double> score(const Theta& theta, const ModelSpec& spec,
                          const Dataset& data) {
  theta.validate(spec);
  check_dimensions(spec, data);
  return score_impl(Workspace(spec, data), theta);
}

EtaMatrix e_step(const Theta& theta, const ModelSpec& spec,
                 const Dataset& data) {
  theta.validate(spec);
  check_dimensions(spec, data);
  return e_step_impl(Workspace(spec, data), theta);
}

double q_group(std::size_t l, const Theta& theta, const ModelSpec& spec,
               const Dataset& data, const EtaMatrix& eta) {
  theta.validate(spec);
  check_dimensions(spec, data);
  check_eta(eta, spec, data);
  if (l >= spec.num_groups()) throw SpecError("group index out of range");
  const Workspace ws(spec, data);
  const auto& g = theta.groups[l];
  const Eigen::VectorXd weight = ws.delta.cwiseProduct(eta.col(static_cast<Eigen::Index>(l)));
  return q_group_value(ws, l, weight, g.alpha,
                       Eigen::Map<const Eigen::VectorXd>(g.beta.data(),
                                                         static_cast<Eigen::Index>(g.beta.size())),
                       g.sigma);
}

double q_function(const Theta& theta, const ModelSpec& spec,
                  const Dataset& data, const EtaMatrix& eta) {
  double total = 0.0;
  for (std::size_t l = 0; l < spec.num_groups(); ++l) {
    total += q_group(l, theta, spec, data, eta);
  }
  return total;
}

double penalized_q_group(std::size_t l, const Theta& theta,
                         const ModelSpec& spec, const Dataset& data,
                         const EtaMatrix& eta, const PenaltyConfig& penalty) {
  return q_group(l, theta, spec, data, eta) -
         penalty.group_penalty(theta.groups.at(l));
}

GroupGradient q_gradients(std::size_t l, const Theta& theta,
                          const ModelSpec& spec, const Dataset& data,
                          const EtaMatrix& eta, const PenaltyConfig& penalty,
                          double sigma_floor) {
  theta.validate(spec);
  check_dimensions(spec, data);
  check_eta(eta, spec, data);
  if (l >= spec.num_groups()) throw SpecError("group index out of range");
  const Workspace ws(spec, data);
  const auto& g = theta.groups[l];
  GroupGradient out;
  double sigma = g.sigma;
  if (sigma < sigma_floor) {
    sigma = sigma_floor;
    out.sigma_clipped = true;
  }
  const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(
      g.beta.data(), static_cast<Eigen::Index>(g.beta.size()));
  const Eigen::ArrayXd r = (ws.log_t - ws.mu(l, g.alpha, beta)).array();
  const Eigen::ArrayXd cum = (r / sigma).exp();
  const Eigen::ArrayXd w =
      ws.delta.array() * eta.col(static_cast<Eigen::Index>(l)).array();
  const Eigen::VectorXd g_mu = ((cum - w) / sigma).matrix();
  out.alpha = g_mu.sum() + penalty.lambda1 * std::exp(-g.alpha);
  const Eigen::VectorXd g_beta = ws.designs[l].transpose() * g_mu;
  out.beta.resize(g.beta.size());
  for (std::size_t k = 0; k < g.beta.size(); ++k) {
    out.beta[k] = g_beta[static_cast<Eigen::Index>(k)] - penalty.lambda2 * sign(g.beta[k]);
  }
  const double s2 = sigma * sigma;
  out.sigma = (w * (-r / s2 - 1.0 / sigma) + r * cum / s2).sum();
  return out;
}

MStepResult m_step(const Theta& theta, const ModelSpec& spec,
                   const Dataset& data, const EtaMatrix& eta,
                   const PenaltyConfig& penalty, const FitConfig& config) {
  theta.validate(spec);
  check_dimensions(spec, data);
  check_eta(eta, spec, data);
  penalty.validate();
  config.validate();
  MStepResult out;
  out.theta = m_step_impl(Workspace(spec, data), theta, eta, penalty, config,
                          &out.stalled);
  return out;
}

Theta default_initialization(const ModelSpec& spec, const Dataset& data) {
  Theta theta;
  for (const auto& group : spec.groups) {
    const WeibullAftFit single = fit_weibull_aft(data, group.covariate_indices);
    GroupParams g = single.params;
    g.sigma = 1.0;
    theta.groups.push_back(std::move(g));
  }
  return theta;
}

FitResult fit_em(const ModelSpec& spec, const Dataset& data,
                 const PenaltyConfig& penalty, const FitConfig& config,
                 const std::optional<Theta>& theta_init) {
  spec.validate();
  data.validate();
  check_dimensions(spec, data);
  penalty.validate();
  config.validate();

  std::vector<Theta> starts;
  if (theta_init) {
    theta_init->validate(spec);
    starts.push_back(*theta_init);
  } else {
    starts.push_back(default_initialization(spec, data));
    const Rng root(config.seed);
    for (int k = 1; k < config.n_starts; ++k) {
      Rng rng = root.split(static_cast<std::uint64_t>(k));
      Theta jittered = starts.front();
      for (auto& g : jittered.groups) {
        g.alpha += config.start_jitter * rng.normal();
        for (double& b : g.beta) b += config.start_jitter * rng.normal();
      }
      starts.push_back(std::move(jittered));
    }
  }

  const Workspace ws(spec, data);
  std::optional<FitResult> best;
  std::optional<NumericError> last_error;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    try {
      FitResult r = run_em(ws, starts[k], penalty, config);
      r.best_start = static_cast<int>(k);
      if (!best || r.penalized_objective() > best->penalized_objective()) {
        best = std::move(r);
      }
    } catch (const NumericError& e) {
      last_error = e;
    }
  }
  if (!best) throw *last_error;

  FitResult result = std::move(*best);
  result.winning_probs = e_step_impl(ws, result.theta_hat);
  result.censored_rows.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    result.censored_rows[i] = data.status[i] == 0;
  }
  if (config.compute_standard_errors) {
    try {
      result.std_errors = standard_errors(result.theta_hat, spec, data);
    } catch (const SingularHessianError& e) {
      result.std_error_message = e.what();
    }
  }
  return result;
}

std::vector<double> standard_errors(const Theta& theta_hat,
                                    const ModelSpec& spec,
                                    const Dataset& data) {
  theta_hat.validate(spec);
  check_dimensions(spec, data);
  const Workspace ws(spec, data);
  const std::vector<double> center = theta_hat.flatten();
  const auto d = static_cast<Eigen::Index>(center.size());
  Eigen::MatrixXd hessian(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double h = 1e-5 * (1.0 + std::abs(center[static_cast<std::size_t>(j)]));
    std::vector<double> up = center;
    std::vector<double> down = center;
    up[static_cast<std::size_t>(j)] += h;
    down[static_cast<std::size_t>(j)] -= h;
    const auto g_up = score_impl(ws, Theta::unflatten(spec, up));
    const auto g_down = score_impl(ws, Theta::unflatten(spec, down));
    for (Eigen::Index k = 0; k < d; ++k) {
      hessian(k, j) = (g_up[static_cast<std::size_t>(k)] -
                       g_down[static_cast<std::size_t>(k)]) / (2 * h);
    }
  }
  const Eigen::MatrixXd info = -0.5 * (hessian + hessian.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  if (eig.info() != Eigen::Success) {
    throw SingularHessianError("eigen-decomposition of the information failed");
  }
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double scale = values.cwiseAbs().maxCoeff();
  if (values.minCoeff() <= 1e-10 * scale) {
    const auto labels = Theta::flat_labels(spec);
    std::ostringstream os;
    os << "observed information is singular or indefinite; near-null directions:";
    for (Eigen::Index k = 0; k < d; ++k) {
      if (values[k] > 1e-10 * scale) continue;
      os << " [";
      bool first = true;
      for (Eigen::Index j = 0; j < d; ++j) {
        if (std::abs(eig.eigenvectors()(j, k)) < 0.3) continue;
        os << (first ? "" : ", ") << labels[static_cast<std::size_t>(j)];
        first = false;
      }
      os << "]";
    }
    throw SingularHessianError(os.str());
  }
  std::vector<double> se(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    double var = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double v = eig.eigenvectors()(j, k);
      var += v * v / values[k];
    }
    se[static_cast<std::size_t>(j)] = std::sqrt(var);
  }
  return se;
}

}  // namespace cweibull
