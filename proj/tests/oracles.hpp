#pragma once

// Reference computations written directly from the textbook Weibull forms
// (t / scale)^shape, independently of the library's log-scale arithmetic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

struct Component {
  double mu;
  double sigma;
};

inline double component_cumhaz(const Component& c, double t) {
  return std::pow(t / std::exp(c.mu), 1.0 / c.sigma);
}

inline double component_hazard(const Component& c, double t) {
  const double shape = 1.0 / c.sigma;
  const double scale = std::exp(c.mu);
  return shape / scale * std::pow(t / scale, shape - 1.0);
}

inline double survival(const std::vector<Component>& cs, double t) {
  double s = 1.0;
  for (const auto& c : cs) s *= std::exp(-component_cumhaz(c, t));
  return s;
}

inline double hazard(const std::vector<Component>& cs, double t) {
  double h = 0.0;
  for (const auto& c : cs) h += component_hazard(c, t);
  return h;
}

// f(t, K = l) = h_l(t) S(t)
inline double cause_density(const std::vector<Component>& cs, std::size_t l, double t) {
  return component_hazard(cs[l], t) * survival(cs, t);
}

// Composite trapezoid rule on [a, b] with n panels.
inline double trapezoid(const std::function<double(double)>& f, double a, double b,
                        std::size_t n) {
  const double h = (b - a) / static_cast<double>(n);
  double sum = 0.5 * (f(a) + f(b));
  for (std::size_t k = 1; k < n; ++k) sum += f(a + h * static_cast<double>(k));
  return sum * h;
}

// Integral of S over [a, inf), cut where S falls below 1e-16.
inline double survival_integral(const std::vector<Component>& cs, double a,
                                std::size_t panels = 2'000'000) {
  double b = std::max(a, 1e-3);
  while (survival(cs, b) > 1e-16) b *= 1.5;
  return trapezoid([&](double t) { return survival(cs, t); }, a, b, panels);
}

// Log of prod_i f(T_i)^d_i S(T_i)^(1-d_i), one subject at a time.
inline double log_likelihood(const std::vector<std::vector<Component>>& subjects,
                             const std::vector<double>& times,
                             const std::vector<int>& status) {
  double prod = 1.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double s = survival(subjects[i], times[i]);
    prod *= status[i] ? hazard(subjects[i], times[i]) * s : s;
  }
  return std::log(prod);
}

// Harrell's C by enumerating ordered pairs.
inline double c_index(const std::vector<double>& risk, const std::vector<double>& times,
                      const std::vector<int>& status) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (i == j || !status[i] || !(times[i] < times[j])) continue;
      den += 1.0;
      num += risk[i] > risk[j] ? 1.0 : (risk[i] == risk[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

// Mann-Whitney statistic over (case, control) pairs for uncensored data.
inline double auc(const std::vector<double>& marker, const std::vector<double>& times,
                  double horizon) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] <= horizon)) continue;
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!(times[j] > horizon)) continue;
      den += 1.0;
      num += marker[i] > marker[j] ? 1.0 : (marker[i] == marker[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

}  // namespace oracle
