#pragma once

#include <string>
#include <vector>

#include "slowvol/dynamics.hpp"
#include "slowvol/expansion.hpp"
#include "slowvol/merton.hpp"
#include "slowvol/strategy.hpp"
#include "slowvol/utility.hpp"

namespace slowvol {

struct MCEstimate {
  double mean = 0.0;
  double stderr_est = 0.0;
  long n_paths = 0;
  double absorbed_fraction = 0.0;
  bool stderr_cap_exceeded = false;
};

// Plain estimator of E[U(X_T)] under the given strategy.
MCEstimate estimate_value(const MarketModel& model, const UtilitySpec& utility,
                          const StrategyFn& strategy, StartPoint start, double horizon_T,
                          const PathConfig& cfg, double stderr_cap = 0.0);

// The frozen-factor optimal strategy (lambda(z)/sigma(z)) R(t,x; lambda(z)),
// closed form for power utility, heat representation otherwise.
StrategyFn merton_reference_strategy(const MarketModel& model, const UtilitySpec& utility,
                                     double horizon_T);

struct ConvergenceRow {
  double delta = 0.0;
  double estimate = 0.0;
  double stderr_est = 0.0;
  double comparator = 0.0;
  double error = 0.0;  // |estimate - comparator|
};

enum class Comparator { V0PlusSqrtDeltaV1, V0Only };

struct ConvergenceStudy {
  std::vector<ConvergenceRow> rows;  // in the caller's delta order
  double fitted_rate = 0.0;
  double rate_se = 0.0;
  double rate_ci_lo = 0.0;
  double rate_ci_hi = 0.0;
  bool budget_ok = true;        // stderr below predicted error at smallest delta
  bool inconclusive = false;    // noise dominates signal somewhere
  double degrade_delta = 0.0;   // first delta (descending) where |error| < 2 stderr
  double affine_a = 0.0;        // error ~ affine_a + affine_b * delta (weighted)
  double affine_b = 0.0;
};

// Rate study of |V^{pi0,delta} - (v0 + sqrt(delta) v1)| across deltas with
// common random numbers; the variance-reduced estimator pairs each delta
// against frozen-factor dynamics and regresses out terminal-noise functionals.
ConvergenceStudy convergence_study(const MarketModel& base_model, const UtilitySpec& utility,
                                   StartPoint start, double horizon_T,
                                   const std::vector<double>& deltas, const PathConfig& cfg,
                                   Comparator comparator = Comparator::V0PlusSqrtDeltaV1);

struct OptimalityRow {
  double delta = 0.0;
  double scaled_diff = 0.0;  // (Vtilde - V) / sqrt(delta)
  double stderr_est = 0.0;
};

struct OptimalityReport {
  std::vector<OptimalityRow> per_delta_table;
  double ell_hat = 0.0;       // smallest-delta scaled difference
  double ell_stderr = 0.0;
  double ell_richardson = 0.0;
  std::string case_tag;       // "(i)".."(iv)" or "indeterminate"
  bool indeterminate = false;
  double exponent_fit = 0.0;  // slope of log|scaled diff| vs log delta
  double exponent_ci_lo = 0.0;
  double exponent_ci_hi = 0.0;
  // O(1) comparison data for a family whose base strategy differs:
  double gap_smallest_delta = 0.0;   // unscaled Vtilde - V at smallest delta
  double gap_stderr = 0.0;
  double frozen_gap = 0.0;           // MC vtilde0 - v0 under frozen-factor dynamics
  double frozen_gap_stderr = 0.0;
};

// Paired (CRN) comparison of the family against the reference strategy
// across deltas, with the main-theorem case classification.
OptimalityReport optimality_compare(const MarketModel& base_model, const UtilitySpec& utility,
                                    const StrategyFamily& family, StartPoint start,
                                    double horizon_T, const std::vector<double>& deltas,
                                    const PathConfig& cfg);

}  // namespace slowvol
