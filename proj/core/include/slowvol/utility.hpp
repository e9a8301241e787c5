#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

namespace slowvol {

// U(x) = x^gamma / gamma, gamma in (0,1).
struct PowerUtility {
  double gamma;
};

// U(x) = sum_i c_i x^{gamma_i} / gamma_i, c_i > 0, gamma_i in (0,1).
struct MixturePowers {
  std::vector<double> weight;
  std::vector<double> exponent;
};

// U(x) = sum_j w_j x^{y_j}: a discrete measure on exponents y_j in [0,1),
// weights acting as the measure itself (no 1/y factor). No atom at 0.
struct PowerMeasure {
  std::vector<double> atom_y;
  std::vector<double> weight;
};

// Defined through the inverse marginal I(y) = sum_j w_j y^{-s_j} with
// s_j in (0, support_bound]; U is recovered by integrating U' = I^{-1}
// upward from x_min = 1e-12 (the additive offset below x_min is dropped).
struct InverseMarginalMeasure {
  std::vector<double> atom_s;
  std::vector<double> weight;
  double support_bound;
};

using UtilitySpec =
    std::variant<PowerUtility, MixturePowers, PowerMeasure, InverseMarginalMeasure>;

// Throws validation_error with a specific message for any violated invariant
// (exponents outside (0,1), nonpositive weights, measure atom at zero, ...).
// Logarithmic-like specs (an inverse-marginal atom at s=0 would make U
// undefined near 0) are rejected here as well.
void validate(const UtilitySpec& spec);

std::string class_name(const UtilitySpec& spec);

double u_eval(const UtilitySpec& spec, double x);
double u_prime(const UtilitySpec& spec, double x);
double u_second(const UtilitySpec& spec, double x);

// I(y): the inverse of U' — closed form for PowerUtility and
// InverseMarginalMeasure, bracketed bisection + Newton polish otherwise.
// The hinted overload seeds the bracket (monotone sweeps of y reuse the
// previous root); hint_x <= 0 means no hint.
double inverse_marginal(const UtilitySpec& spec, double y);
double inverse_marginal(const UtilitySpec& spec, double y, double hint_x);

// Terminal risk tolerance R(x) = -U'(x)/U''(x) and its first two derivatives
// (analytic for every class; the inverse-marginal class goes through the
// marginal variable q = U'(x) where all sums are explicit).
double risk_tolerance_terminal(const UtilitySpec& spec, double x);
double risk_tolerance_terminal_dx(const UtilitySpec& spec, double x);
double risk_tolerance_terminal_dxx(const UtilitySpec& spec, double x);

// Same quantities as functions of the marginal y = U'(x); these avoid the
// inner root-find when the caller already works in marginal coordinates
// (the heat-representation integrands do).
double rbar_of_marginal(const UtilitySpec& spec, double y);
double rbar_prime_of_marginal(const UtilitySpec& spec, double y);
double rbar_second_of_marginal(const UtilitySpec& spec, double y);
double u_of_marginal(const UtilitySpec& spec, double y);  // U(I(y))

struct RiskProfile {
  // Empirical sup of |d^i/dx^i R^i(x)| over the grid, i = 1..5.
  std::array<double, 5> K_bounds;
  // Smallest K0 with R(x) <= K0 * x on the grid.
  double K0;
  // Log-slope of U at the top of the grid (asymptotic elasticity estimate).
  double elasticity_estimate;
  // Largest Richardson stencil-error estimate, relative to the derivative scale.
  double stencil_error;
};

struct Assumption1Report {
  RiskProfile profile;
  bool r_zero_at_origin;     // R(0+) ~ 0 within tolerance
  bool r_increasing;         // R strictly increasing on the grid
  bool ap_positive;          // Arrow-Pratt relative risk aversion > 0
  bool u_increasing_concave; // U' > 0 and U'' < 0 on the grid
  bool k_bounds_ok;          // all K_bounds <= K_max
  bool linear_bound_ok;      // R(x) <= K0 * x with K0 <= K_max
  bool elasticity_ok;        // elasticity estimate < 1
  std::vector<std::string> flags;
  bool pass() const {
    return r_zero_at_origin && r_increasing && ap_positive && u_increasing_concave &&
           k_bounds_ok && linear_bound_ok && elasticity_ok;
  }
};

// Verifies the admissibility conditions on a strictly increasing positive grid
// (>= 100 points spanning >= 4 decades): derivative bounds on R^i via
// Richardson-extrapolated central differences, the linear bound R <= K0 x,
// positivity/concavity scans, and the elasticity estimate.
Assumption1Report assumption1_check(const UtilitySpec& spec,
                                    const std::vector<double>& grid,
                                    double K_max = 1e6);

}  // namespace slowvol
