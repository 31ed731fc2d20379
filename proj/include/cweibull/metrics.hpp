#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cweibull/model.hpp"

namespace cweibull {

// Right-continuous step function, 1 before the first jump.
struct StepSurvival {
  std::vector<double> jump_times;
  std::vector<double> values;

  double at(double t) const;
  double left_limit(double t) const;
};

// Product-limit estimator. Events at a tied time are processed before
// censorings at that time.
StepSurvival kaplan_meier(std::span<const double> times,
                          std::span<const int> status);

struct Concordance {
  double value = 0.5;
  double comparable_pairs = 0.0;  // weighted count for the IPCW variant
  bool no_comparable_pairs = false;
};

// Harrell's C. Higher risk means an earlier predicted event; pair (i, j) is
// comparable when subject i has an observed event and T_i < T_j. Risk ties
// count one half.
Concordance concordance_index(std::span<const double> risk,
                              std::span<const double> times,
                              std::span<const int> status);

// Uno's IPCW-weighted C truncated at tau: comparable pairs weighted by
// 1 / G(T_i-)^2 with G the censoring-distribution Kaplan-Meier.
Concordance concordance_index_ipcw(std::span<const double> risk,
                                   std::span<const double> times,
                                   std::span<const int> status, double tau);

struct RocCurve {
  double horizon = 0.0;
  std::vector<double> thresholds;  // marker cut-offs, descending
  std::vector<double> fpr;         // starts at 0, ends at 1
  std::vector<double> tpr;
  double auc = 0.5;
  std::size_t n_cases = 0;
  std::size_t n_controls = 0;
};

// Cumulative/dynamic ROC at `horizon`: cases have T_i <= horizon with an
// observed event, weighted by 1 / G(T_i-); controls have T_i > horizon.
// Throws DegenerateHorizonError without cases or without controls.
RocCurve time_dependent_roc(std::span<const double> marker,
                            std::span<const double> times,
                            std::span<const int> status, double horizon);

using MarkerProvider = std::function<std::vector<double>(double)>;

struct IntegratedAuc {
  double value = 0.5;
  std::vector<double> grid;   // horizons with a valid ROC
  std::vector<double> aucs;
  std::vector<double> skipped;  // degenerate horizons
};

// Kaplan-Meier event-density weighted average of AUC(t) over the grid,
// trapezoidal between consecutive valid horizons.
IntegratedAuc integrated_auc(const MarkerProvider& marker_at,
                             std::span<const double> times,
                             std::span<const int> status,
                             std::span<const double> grid);

// Deciles of the observed event times from the 10th to the 90th percentile.
std::vector<double> default_auc_grid(std::span<const double> times,
                                     std::span<const int> status);

enum class MarkerMode { neg_expected_time, one_minus_survival_at };

// Higher value = higher risk in both modes.
double risk_marker(const Theta& theta, const ModelSpec& spec, RowView x,
                   MarkerMode mode, double horizon = 0.0);

}  // namespace cweibull
