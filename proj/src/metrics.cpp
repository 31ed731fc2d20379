#include "cweibull/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cweibull/error.hpp"

namespace cweibull {

namespace {

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || b != c) throw SpecError("metric inputs have mismatched lengths");
}

std::vector<std::size_t> order_by_time(std::span<const double> times) {
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  return order;
}

StepSurvival censoring_survival(std::span<const double> times,
                                std::span<const int> status) {
  std::vector<int> flipped(status.size());
  for (std::size_t i = 0; i < status.size(); ++i) flipped[i] = 1 - status[i];
  return kaplan_meier(times, flipped);
}

// Linear-interpolation quantile of sorted data.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double StepSurvival::at(double t) const {
  const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

double StepSurvival::left_limit(double t) const {
  const auto it = std::lower_bound(jump_times.begin(), jump_times.end(), t);
  if (it == jump_times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

StepSurvival kaplan_meier(std::span<const double> times,
                          std::span<const int> status) {
  if (times.empty()) throw SpecError("Kaplan-Meier needs at least one subject");
  if (times.size() != status.size()) {
    throw SpecError("Kaplan-Meier inputs have mismatched lengths");
  }
  const auto order = order_by_time(times);
  StepSurvival km;
  double surv = 1.0;
  std::size_t at_risk = times.size();
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = times[order[k]];
    std::size_t events = 0;
    std::size_t leaving = 0;
    while (k < order.size() && times[order[k]] == t) {
      events += status[order[k]] == 1;
      ++leaving;
      ++k;
    }
    if (events > 0) {
      surv *= 1.0 - static_cast<double>(events) / static_cast<double>(at_risk);
      km.jump_times.push_back(t);
      km.values.push_back(surv);
    }
    at_risk -= leaving;
  }
  return km;
}

Concordance concordance_index(std::span<const double> risk,
                              std::span<const double> times,
                              std::span<const int> status) {
  check_lengths(risk.size(), times.size(), status.size());
  double concordant = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (status[i] != 1) continue;
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!(times[i] < times[j])) continue;
      pairs += 1.0;
      if (risk[i] > risk[j]) {
        concordant += 1.0;
      } else if (risk[i] == risk[j]) {
        concordant += 0.5;
      }
    }
  }
  Concordance c;
  c.comparable_pairs = pairs;
  if (pairs == 0.0) {
    c.no_comparable_pairs = true;
    return c;
  }
  c.value = concordant / pairs;
  return c;
}

Concordance concordance_index_ipcw(std::span<const double> risk,
                                   std::span<const double> times,
                                   std::span<const int> status, double tau) {
  check_lengths(risk.size(), times.size(), status.size());
  const StepSurvival g = censoring_survival(times, status);
  double concordant = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (status[i] != 1 || !(times[i] < tau)) continue;
    const double gi = g.left_limit(times[i]);
    if (gi <= 0.0) continue;
    const double w = 1.0 / (gi * gi);
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!(times[i] < times[j])) continue;
      pairs += w;
      if (risk[i] > risk[j]) {
        concordant += w;
      } else if (risk[i] == risk[j]) {
        concordant += 0.5 * w;
      }
    }
  }
  Concordance c;
  c.comparable_pairs = pairs;
  if (pairs == 0.0) {
    c.no_comparable_pairs = true;
    return c;
  }
  c.value = concordant / pairs;
  return c;
}

RocCurve time_dependent_roc(std::span<const double> marker,
                            std::span<const double> times,
                            std::span<const int> status, double horizon) {
  check_lengths(marker.size(), times.size(), status.size());
  const StepSurvival g = censoring_survival(times, status);
  RocCurve roc;
  roc.horizon = horizon;

  std::vector<double> case_weight(times.size(), 0.0);
  std::vector<bool> control(times.size(), false);
  double total_case = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] > horizon) {
      control[i] = true;
      ++roc.n_controls;
    } else if (status[i] == 1) {
      const double gi = g.left_limit(times[i]);
      if (gi <= 0.0) continue;
      case_weight[i] = 1.0 / gi;
      total_case += case_weight[i];
      ++roc.n_cases;
    }
  }
  if (roc.n_cases == 0 || roc.n_controls == 0) {
    throw DegenerateHorizonError("no " +
                                 std::string(roc.n_cases == 0 ? "cases" : "controls") +
                                 " at horizon " + std::to_string(horizon));
  }

  std::vector<std::size_t> order(marker.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return marker[a] > marker[b]; });
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);
  double tp = 0.0;
  double fp = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double cut = marker[order[k]];
    while (k < order.size() && marker[order[k]] == cut) {
      tp += case_weight[order[k]];
      fp += control[order[k]] ? 1.0 : 0.0;
      ++k;
    }
    roc.thresholds.push_back(cut);
    roc.tpr.push_back(tp / total_case);
    roc.fpr.push_back(fp / static_cast<double>(roc.n_controls));
  }
  roc.auc = 0.0;
  for (std::size_t m = 1; m < roc.fpr.size(); ++m) {
    roc.auc += (roc.fpr[m] - roc.fpr[m - 1]) * (roc.tpr[m] + roc.tpr[m - 1]) / 2.0;
  }
  return roc;
}

IntegratedAuc integrated_auc(const MarkerProvider& marker_at,
                             std::span<const double> times,
                             std::span<const int> status,
                             std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("iAUC grid is empty");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) throw ConfigError("iAUC grid must be increasing");
  }
  IntegratedAuc out;
  for (double t : grid) {
    try {
      const std::vector<double> marker = marker_at(t);
      out.aucs.push_back(time_dependent_roc(marker, times, status, t).auc);
      out.grid.push_back(t);
    } catch (const DegenerateHorizonError&) {
      out.skipped.push_back(t);
    }
  }
  if (out.grid.empty()) {
    throw DegenerateHorizonError("every iAUC grid point is degenerate");
  }
  if (out.grid.size() == 1) {
    out.value = out.aucs.front();
    return out;
  }
  const StepSurvival km = kaplan_meier(times, status);
  double weighted = 0.0;
  double total = 0.0;
  for (std::size_t k = 1; k < out.grid.size(); ++k) {
    const double w = km.at(out.grid[k - 1]) - km.at(out.grid[k]);
    weighted += w * 0.5 * (out.aucs[k - 1] + out.aucs[k]);
    total += w;
  }
  if (total > 0.0) {
    out.value = weighted / total;
  } else {
    out.value = std::accumulate(out.aucs.begin(), out.aucs.end(), 0.0) /
                static_cast<double>(out.aucs.size());
  }
  return out;
}

std::vector<double> default_auc_grid(std::span<const double> times,
                                     std::span<const int> status) {
  std::vector<double> events;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (status[i] == 1) events.push_back(times[i]);
  }
  if (events.empty()) throw DegenerateHorizonError("no observed events for the AUC grid");
  std::sort(events.begin(), events.end());
  std::vector<double> grid;
  for (int d = 1; d <= 9; ++d) {
    const double q = quantile(events, d / 10.0);
    if (grid.empty() || q > grid.back()) grid.push_back(q);
  }
  return grid;
}

double risk_marker(const Theta& theta, const ModelSpec& spec, RowView x,
                   MarkerMode mode, double horizon) {
  const ConditionalModel model(theta, spec, x);
  switch (mode) {
    case MarkerMode::neg_expected_time:
      return -expected_survival_time(model).estimate;
    case MarkerMode::one_minus_survival_at:
      if (!(horizon > 0.0)) throw DomainError("marker horizon must be positive");
      // -expm1(log S) keeps resolution when S is close to 1.
      return -std::expm1(model.log_survival(horizon));
  }
  throw SpecError("unknown marker mode");
}

}  // namespace cweibull
