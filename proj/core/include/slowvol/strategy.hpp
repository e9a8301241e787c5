#pragma once

#include <cmath>
#include <functional>
#include <optional>

namespace slowvol {

// Dollar amount invested in the risky asset at (t, x, z).
using StrategyFn = std::function<double(double t, double x, double z)>;

// Perturbed family: effective strategy pi0_base + delta^alpha * pi1_perturb.
struct StrategyFamily {
  StrategyFn pi0_base;
  StrategyFn pi1_perturb;
  double alpha = 0.5;
  bool identical_to_pi0 = false;  // user asserts pi0_base is the reference strategy

  // Structural tags (optional): they unlock closed forms and make region
  // tests exact instead of sampled.
  bool pi1_is_zero = false;
  std::optional<double> pi1_kappa_of_pi0;  // pi1 = kappa * (reference pi0)
  std::optional<double> pi0_scale;         // pi0_base = scale * (reference pi0)
};

void validate(const StrategyFamily& family);

inline StrategyFn effective_strategy(const StrategyFamily& family, double delta) {
  double w = std::pow(delta, family.alpha);
  StrategyFn base = family.pi0_base;
  StrategyFn pert = family.pi1_perturb;
  if (family.pi1_is_zero || !pert) return base;
  return [base, pert, w](double t, double x, double z) {
    return base(t, x, z) + w * pert(t, x, z);
  };
}

}  // namespace slowvol
