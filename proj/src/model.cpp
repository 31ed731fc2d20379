#include "cweibull/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cweibull/error.hpp"

namespace cweibull {

namespace {

std::string group_label(const ModelSpec& spec, std::size_t l) {
  const auto& name = spec.groups[l].name;
  return name.empty() ? "CF" + std::to_string(l + 1) : name;
}

void require_positive_time(double t, const char* what) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    std::ostringstream os;
    os << what << ": time must be positive and finite, got " << t;
    throw DomainError(os.str());
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (groups.empty()) throw SpecError("model needs at least one group");
  std::set<std::vector<std::size_t>> seen;
  for (std::size_t l = 0; l < groups.size(); ++l) {
    const auto& idx = groups[l].covariate_indices;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= p) {
        throw SpecError("group " + group_label(*this, l) + ": covariate index " +
                        std::to_string(idx[k]) + " out of range for p = " +
                        std::to_string(p));
      }
      if (k > 0 && idx[k] <= idx[k - 1]) {
        throw SpecError("group " + group_label(*this, l) +
                        ": covariate indices must be strictly increasing");
      }
    }
    if (!seen.insert(idx).second) {
      throw SpecError("group " + group_label(*this, l) +
                      " repeats the covariate set of an earlier group "
                      "(unidentifiable)");
    }
  }
}

void Theta::validate(const ModelSpec& spec) const {
  if (groups.size() != spec.num_groups()) {
    throw SpecError("theta has " + std::to_string(groups.size()) +
                    " groups, model has " + std::to_string(spec.num_groups()));
  }
  for (std::size_t l = 0; l < groups.size(); ++l) {
    const auto& g = groups[l];
    if (g.beta.size() != spec.groups[l].covariate_indices.size()) {
      throw SpecError("group " + group_label(spec, l) + ": beta has " +
                      std::to_string(g.beta.size()) + " entries, covariate set has " +
                      std::to_string(spec.groups[l].covariate_indices.size()));
    }
    if (!(g.sigma > 0.0) || !std::isfinite(g.sigma)) {
      throw SpecError("group " + group_label(spec, l) + ": sigma must be positive");
    }
    if (!std::isfinite(g.alpha) ||
        !std::all_of(g.beta.begin(), g.beta.end(),
                     [](double b) { return std::isfinite(b); })) {
      throw SpecError("group " + group_label(spec, l) + ": non-finite coefficient");
    }
  }
}

std::size_t Theta::flat_size() const noexcept {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.beta.size() + 2;
  return n;
}

std::vector<double> Theta::flatten() const {
  std::vector<double> out;
  out.reserve(flat_size());
  for (const auto& g : groups) {
    out.push_back(g.alpha);
    out.insert(out.end(), g.beta.begin(), g.beta.end());
    out.push_back(g.sigma);
  }
  return out;
}

Theta Theta::unflatten(const ModelSpec& spec, std::span<const double> flat) {
  Theta theta;
  std::size_t k = 0;
  for (const auto& group : spec.groups) {
    const std::size_t p_l = group.covariate_indices.size();
    if (k + p_l + 2 > flat.size()) throw SpecError("flattened theta too short");
    GroupParams g;
    g.alpha = flat[k++];
    g.beta.assign(flat.begin() + static_cast<std::ptrdiff_t>(k),
                  flat.begin() + static_cast<std::ptrdiff_t>(k + p_l));
    k += p_l;
    g.sigma = flat[k++];
    theta.groups.push_back(std::move(g));
  }
  if (k != flat.size()) throw SpecError("flattened theta too long");
  return theta;
}

std::vector<std::string> Theta::flat_labels(const ModelSpec& spec) {
  std::vector<std::string> labels;
  for (std::size_t l = 0; l < spec.num_groups(); ++l) {
    const std::string g = group_label(spec, l);
    labels.push_back(g + ".alpha");
    for (std::size_t j : spec.groups[l].covariate_indices) {
      labels.push_back(g + ".beta[x" + std::to_string(j + 1) + "]");
    }
    labels.push_back(g + ".sigma");
  }
  return labels;
}

void Dataset::validate() const {
  const std::size_t n = times.size();
  if (n == 0) throw SpecError("dataset is empty");
  if (status.size() != n || static_cast<std::size_t>(covariates.rows()) != n) {
    throw SpecError("dataset columns have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(times[i] > 0.0) || !std::isfinite(times[i])) {
      throw SpecError("row " + std::to_string(i + 1) + ": time must be positive");
    }
    if (status[i] != 0 && status[i] != 1) {
      throw SpecError("row " + std::to_string(i + 1) + ": status must be 0 or 1");
    }
  }
  if (!covariates.allFinite()) throw SpecError("covariate matrix has missing values");
}

double group_log_scale(const GroupParams& params, RowView x,
                       const GroupSpec& group) {
  if (params.beta.size() != group.covariate_indices.size()) {
    throw SpecError("beta length does not match the group covariate set");
  }
  double mu = params.alpha;
  for (std::size_t k = 0; k < params.beta.size(); ++k) {
    const std::size_t j = group.covariate_indices[k];
    if (j >= x.size()) throw SpecError("covariate row shorter than group index");
    mu += x[j] * params.beta[k];
  }
  return mu;
}

ConditionalModel::ConditionalModel(const Theta& theta, const ModelSpec& spec,
                                   RowView x) {
  if (theta.groups.size() != spec.num_groups()) {
    throw SpecError("theta and model disagree on the number of groups");
  }
  if (x.size() != spec.p) {
    throw SpecError("covariate row has " + std::to_string(x.size()) +
                    " entries, model expects " + std::to_string(spec.p));
  }
  mu_.reserve(spec.num_groups());
  sigma_.reserve(spec.num_groups());
  for (std::size_t l = 0; l < spec.num_groups(); ++l) {
    mu_.push_back(group_log_scale(theta.groups[l], x, spec.groups[l]));
    sigma_.push_back(theta.groups[l].sigma);
  }
  log_sigma_.reserve(sigma_.size());
  for (double s : sigma_) log_sigma_.push_back(std::log(s));
}

ConditionalModel::ConditionalModel(std::vector<double> mu,
                                   std::vector<double> sigma)
    : mu_(std::move(mu)), sigma_(std::move(sigma)) {
  if (mu_.size() != sigma_.size() || mu_.empty()) {
    throw SpecError("conditional model needs matching, nonempty mu and sigma");
  }
  for (double s : sigma_) {
    if (!(s > 0.0)) throw SpecError("sigma must be positive");
    log_sigma_.push_back(std::log(s));
  }
}

double ConditionalModel::cumulative_hazard(double t) const {
  if (t == 0.0) return 0.0;
  require_positive_time(t, "cumulative hazard");
  const double log_t = std::log(t);
  double total = 0.0;
  for (std::size_t l = 0; l < mu_.size(); ++l) {
    total += std::exp(log_cumulative_hazard(l, log_t));
  }
  return total;
}

double ConditionalModel::log_survival(double t) const {
  return -cumulative_hazard(t);
}

double ConditionalModel::survival(double t) const {
  return std::exp(log_survival(t));
}

std::vector<double> ConditionalModel::group_hazards(double t) const {
  require_positive_time(t, "hazard");
  const double log_t = std::log(t);
  std::vector<double> h(mu_.size());
  for (std::size_t l = 0; l < mu_.size(); ++l) {
    h[l] = std::exp(log_group_hazard(l, log_t));
  }
  return h;
}

double ConditionalModel::log_hazard(double t) const {
  require_positive_time(t, "hazard");
  const double log_t = std::log(t);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < mu_.size(); ++l) {
    top = std::max(top, log_group_hazard(l, log_t));
  }
  double sum = 0.0;
  for (std::size_t l = 0; l < mu_.size(); ++l) {
    sum += std::exp(log_group_hazard(l, log_t) - top);
  }
  return top + std::log(sum);
}

double ConditionalModel::hazard(double t) const {
  return std::exp(log_hazard(t));
}

double ConditionalModel::density(double t) const {
  return std::exp(log_survival(t) + log_hazard(t));
}

std::vector<double> ConditionalModel::winning_probability(double t) const {
  const double log_h = log_hazard(t);
  const double log_t = std::log(t);
  std::vector<double> eta(mu_.size());
  for (std::size_t l = 0; l < mu_.size(); ++l) {
    eta[l] = std::exp(log_group_hazard(l, log_t) - log_h);
  }
  return eta;
}

double survival(const Theta& theta, const ModelSpec& spec, RowView x,
                double t) {
  return ConditionalModel(theta, spec, x).survival(t);
}

double hazard(const Theta& theta, const ModelSpec& spec, RowView x, double t) {
  return ConditionalModel(theta, spec, x).hazard(t);
}

std::vector<double> group_hazards(const Theta& theta, const ModelSpec& spec,
                                  RowView x, double t) {
  return ConditionalModel(theta, spec, x).group_hazards(t);
}

double density(const Theta& theta, const ModelSpec& spec, RowView x, double t) {
  return ConditionalModel(theta, spec, x).density(t);
}

std::vector<double> winning_probability(const Theta& theta,
                                        const ModelSpec& spec, RowView x,
                                        double t) {
  return ConditionalModel(theta, spec, x).winning_probability(t);
}

Event sample_event(const ConditionalModel& model, Rng& rng) {
  Event event;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < model.num_groups(); ++l) {
    // P(eps > e) = exp(-e^e) for eps = log(-log(1 - U)).
    const double eps = std::log(-std::log1p(-rng.uniform()));
    const double log_t = model.mu()[l] + model.sigma()[l] * eps;
    if (log_t < best) {
      best = log_t;
      event.cause = l;
    }
  }
  event.time = std::exp(best);
  return event;
}

Event sample_event(const Theta& theta, const ModelSpec& spec, RowView x,
                   Rng& rng) {
  return sample_event(ConditionalModel(theta, spec, x), rng);
}

TailBounds mills_ratio_tail(const ConditionalModel& model, double truncation) {
  if (!(truncation > 0.0) || !std::isfinite(truncation)) {
    throw ConfigError("truncation point M must be positive and finite");
  }
  const double log_s = model.log_survival(truncation);
  if (!(log_s < std::log(0.5))) {
    throw ConfigError("truncation point M too small: S(M) >= 0.5");
  }
  const double log_h = model.log_hazard(truncation);
  // M * sum_k zeta_k(M) = M h(M)
  const double m_h = std::exp(std::log(truncation) + log_h);
  if (!(m_h > 1.0)) {
    throw ConfigError("truncation point M too small: M * h(M) <= 1");
  }
  const double sigma_min =
      *std::min_element(model.sigma().begin(), model.sigma().end());
  TailBounds b;
  b.term = std::exp(log_s - log_h);
  b.lower = b.term * (1.0 - (1.0 / sigma_min) / m_h);
  b.upper = b.term * (1.0 + 1.0 / (m_h - 1.0));
  return b;
}

double auto_truncation(const ConditionalModel& model, double survival_level) {
  if (!(survival_level > 0.0 && survival_level < 0.5)) {
    throw ConfigError("automatic truncation level must lie in (0, 0.5)");
  }
  const double target = -std::log(survival_level);
  auto cum_hazard_at = [&](double log_t) {
    double total = 0.0;
    for (std::size_t l = 0; l < model.num_groups(); ++l) {
      total += std::exp(model.log_cumulative_hazard(l, log_t));
    }
    return total;
  };
  double lo = *std::min_element(model.mu().begin(), model.mu().end());
  double hi = lo;
  while (cum_hazard_at(lo) >= target) lo -= 1.0;
  while (cum_hazard_at(hi) < target) hi += 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (cum_hazard_at(mid) < target ? lo : hi) = mid;
  }
  double m = std::exp(hi);
  while (std::exp(std::log(m) + model.log_hazard(m)) <= 1.0) m *= 2.0;
  return m;
}

ExpectedTime expected_survival_time(const ConditionalModel& model,
                                    std::optional<double> truncation,
                                    const QuadratureConfig& config) {
  if (!(config.abs_tolerance > 0.0)) {
    throw ConfigError("quadrature tolerance must be positive");
  }
  ExpectedTime out;
  out.truncation = truncation ? *truncation
                              : auto_truncation(model, config.auto_survival_level);
  const TailBounds tail = mills_ratio_tail(model, out.truncation);

  auto integrand = [&](double t) { return t > 0.0 ? model.survival(t) : 1.0; };
  using Quadrature = boost::math::quadrature::gauss_kronrod<double, 15>;
  // Boost's tolerance is relative to the L1 norm; a coarse pass sets the scale.
  const double rough = Quadrature::integrate(integrand, 0.0, out.truncation, 5, 1e-3);
  const double rel_tol = std::max(config.abs_tolerance / std::max(rough, 1e-300),
                                  4 * std::numeric_limits<double>::epsilon());
  out.finite_part = Quadrature::integrate(integrand, 0.0, out.truncation,
                                          config.max_depth, rel_tol);
  out.tail_term = tail.term;
  out.tail_lower = tail.lower;
  out.tail_upper = tail.upper;
  out.estimate = out.finite_part + out.tail_term;
  return out;
}

ExpectedTime expected_survival_time(const Theta& theta, const ModelSpec& spec,
                                    RowView x, std::optional<double> truncation,
                                    const QuadratureConfig& config) {
  return expected_survival_time(ConditionalModel(theta, spec, x), truncation,
                                config);
}

}  // namespace cweibull
