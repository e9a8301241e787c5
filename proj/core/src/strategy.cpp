#include "slowvol/strategy.hpp"

#include "slowvol/common.hpp"

namespace slowvol {

void validate(const StrategyFamily& family) {
  if (!family.pi0_base)
    throw validation_error("strategy family: base strategy evaluator must be set");
  if (!(family.alpha > 0.0) || !std::isfinite(family.alpha))
    throw validation_error("strategy family: alpha must be positive and finite");
  if (!family.pi1_is_zero && !family.pi1_perturb)
    throw validation_error(
        "strategy family: perturbation evaluator must be set unless flagged zero");
}

}  // namespace slowvol
