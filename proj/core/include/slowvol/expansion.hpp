#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "slowvol/merton.hpp"
#include "slowvol/strategy.hpp"
#include "slowvol/utility.hpp"

namespace slowvol {

struct MarketModel;  // dynamics.hpp

// Model coefficients evaluated with the factor frozen at level z.
struct SlowFactorFrozen {
  double z = 1.0;
  std::function<double(double)> lambda_fn;
  std::function<double(double)> lambda_prime_fn;
  std::function<double(double)> g_fn;
  std::function<double(double)> sigma_fn;
  double rho = 0.0;
  double horizon_T = 1.0;
};

void validate(const SlowFactorFrozen& frozen);
SlowFactorFrozen freeze(const MarketModel& model, double z, double horizon_T);

// The Merton solution at lambda(z); building it is cheap, but callers doing
// grids should construct once and reuse.
MertonSolution frozen_merton(const SlowFactorFrozen& frozen, const UtilitySpec& utility,
                             HRep rep = HRep::Auto, int n_gh = 128);

double v0_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility, double t, double x);
double v0_z_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility, double t, double x);
double v1_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility, double t, double x);
double pi0_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility, double t, double x);

struct ValueWithError {
  double value = 0.0;
  double stderr_est = 0.0;  // 0 when a closed form was used
  bool mc_route = false;
  bool budget_warning = false;
};

struct FeynmanKacOptions {
  long n_paths = 20000;
  int n_time = 64;  // trapezoid points along the exact wealth path
  std::uint64_t seed = 12345;
  double target_stderr = 0.0;  // 0 disables the budget check
};

// Second-order own-perturbation cost term: closed form for the power
// utility with pi1 proportional to the reference strategy, otherwise a
// Feynman-Kac average over the exact frozen-factor wealth law. Always <= 0.
ValueWithError vtilde_2alpha_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility,
                                  const StrategyFamily& family, double t, double x,
                                  const FeynmanKacOptions& opts = {});

// First-order term of the perturbed family at the quarter exponent:
// v1 + vtilde^{2alpha} (the defining linear equation adds the two sources).
ValueWithError vtilde1_quarter_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility,
                                    const StrategyFamily& family, double t, double x,
                                    const FeynmanKacOptions& opts = {});

enum class ApproxFormula {
  V0PlusSqrtDeltaV1,
  V0PlusSqrtDeltaVtilde1,
  V0PlusDelta2AlphaVtilde2Alpha,
  Vtilde0,
  Indeterminate,
};

struct ApproxDescriptor {
  ApproxFormula formula = ApproxFormula::Indeterminate;
  double accuracy_exponent = 0.0;  // error is O(delta^accuracy_exponent)
  std::string region;              // "base-differs-ahead" / "perturbation-ahead" / ...
  std::string case_tag;            // "(i)".."(iv)" or "indeterminate"
  bool sampled_region = false;     // region came from sampling, not a user flag
};

// Chooses which expansion approximates the family's value and the expected
// error order. Region membership uses the family's structural flags when
// set; otherwise the strategies are sampled on a forward (u, x) grid and a
// sub-threshold result is reported indeterminate rather than guessed.
ApproxDescriptor approximation_select(const SlowFactorFrozen& frozen,
                                      const UtilitySpec& utility,
                                      const StrategyFamily& family, double t, double x);

// Bundled evaluators over a fixed frozen level, for table-style consumers.
struct ExpansionResult {
  std::function<double(double, double)> v0;
  std::function<double(double, double)> v1;
  std::function<double(double, double)> pi0;
};

ExpansionResult make_expansion(const SlowFactorFrozen& frozen, const UtilitySpec& utility);

}  // namespace slowvol
