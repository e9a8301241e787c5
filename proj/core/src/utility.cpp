#include "slowvol/utility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "slowvol/common.hpp"
#include "slowvol/quadrature.hpp"

namespace slowvol {

namespace {

constexpr double kImmLowerLimit = 1e-12;  // lower integration limit for U = int I^{-1}

void require_positive_x(double x, const char* who) {
  if (!(x > 0.0)) throw validation_error(std::string(who) + ": requires x > 0");
}

void require_positive_y(double y, const char* who) {
  if (!(y > 0.0)) throw validation_error(std::string(who) + ": requires y > 0");
}

// sum_j w_j s_j^k q^{-s_j}; the k = 0..3 moments of the exponent measure
// carry R and its derivatives in marginal coordinates.
double imm_moment(const InverseMarginalMeasure& m, double q, int k) {
  double lq = std::log(q);
  double acc = 0.0;
  for (std::size_t j = 0; j < m.atom_s.size(); ++j) {
    double sk = 1.0;
    for (int i = 0; i < k; ++i) sk *= m.atom_s[j];
    acc += m.weight[j] * sk * std::exp(-m.atom_s[j] * lq);
  }
  return acc;
}

// Antiderivative of q * I'(q): A(q) = -sum_{s!=1} w s q^{1-s}/(1-s) - sum_{s=1} w ln q.
// U(I(y)) = A(y) - A(q0) with q0 = U'(x_min).
double imm_antiderivative(const InverseMarginalMeasure& m, double q) {
  double lq = std::log(q);
  double acc = 0.0;
  for (std::size_t j = 0; j < m.atom_s.size(); ++j) {
    double s = m.atom_s[j], w = m.weight[j];
    if (std::abs(s - 1.0) < 1e-12) {
      acc -= w * lq;
    } else {
      acc -= w * s / (1.0 - s) * std::exp((1.0 - s) * lq);
    }
  }
  return acc;
}

// Solve I(q) = x for q (I strictly decreasing onto (0,inf)).
double imm_marginal_of_wealth(const InverseMarginalMeasure& m, double x, double hint) {
  double q = hint > 0.0 ? hint : 1.0;
  // expanding bracket in log q
  double lo = q, hi = q;
  double f_lo = imm_moment(m, lo, 0), f_hi = f_lo;
  int guard = 0;
  while (f_lo < x) {  // I decreasing: need smaller q
    lo *= 0.25;
    f_lo = imm_moment(m, lo, 0);
    if (++guard > 600) throw numerical_error("inverse of I: bracket failure (low side)");
  }
  guard = 0;
  while (f_hi > x) {
    hi *= 4.0;
    f_hi = imm_moment(m, hi, 0);
    if (++guard > 600) throw numerical_error("inverse of I: bracket failure (high side)");
  }
  double llo = std::log(lo), lhi = std::log(hi);
  double lx = std::log(x);
  double u = 0.5 * (llo + lhi);
  for (int it = 0; it < 200; ++it) {
    q = std::exp(u);
    double I0 = imm_moment(m, q, 0);
    double g = std::log(I0) - lx;
    if (g > 0.0) llo = u; else lhi = u;
    double slope = -imm_moment(m, q, 1) / I0;  // d ln I / d ln q
    double step = g / slope;
    double un = u - step;
    if (!(un > llo && un < lhi)) un = 0.5 * (llo + lhi);
    if (std::abs(un - u) < 1e-15 * std::max(1.0, std::abs(u))) { u = un; break; }
    u = un;
  }
  return std::exp(u);
}

// Solve U'(x) = y for x, for the classes where U' is an explicit decreasing sum.
template <typename Marginal, typename LogSlope>
double invert_decreasing(Marginal&& uprime, LogSlope&& dlog, double y, const char* who,
                         double hint = -1.0) {
  double lo = hint > 0.0 ? hint : 1.0, hi = lo;
  double f_lo = uprime(lo), f_hi = f_lo;
  int guard = 0;
  while (f_lo < y) {
    lo *= 0.25;
    f_lo = uprime(lo);
    if (++guard > 600) throw numerical_error(std::string(who) + ": bracket failure");
  }
  guard = 0;
  while (f_hi > y) {
    hi *= 4.0;
    f_hi = uprime(hi);
    if (++guard > 600) throw numerical_error(std::string(who) + ": bracket failure");
  }
  double llo = std::log(lo), lhi = std::log(hi), ly = std::log(y);
  double u = 0.5 * (llo + lhi);
  for (int it = 0; it < 200; ++it) {
    double x = std::exp(u);
    double g = std::log(uprime(x)) - ly;
    if (g > 0.0) llo = u; else lhi = u;
    double un = u - g / dlog(x);
    if (!(un > llo && un < lhi)) un = 0.5 * (llo + lhi);
    if (std::abs(un - u) < 1e-15 * std::max(1.0, std::abs(u))) { u = un; break; }
    u = un;
  }
  return std::exp(u);
}

struct Derivs {
  double u1, u2, u3, u4;  // U', U'', U''', U''''
};

Derivs power_sum_derivs(const std::vector<double>& w, const std::vector<double>& g,
                        const std::vector<double>& coef, double x) {
  // d/dx of sum coef_i * x^{g_i}: coef already includes the measure/mixture weighting
  (void)w;
  Derivs d{0, 0, 0, 0};
  double lx = std::log(x);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double e = g[i];
    double p1 = coef[i] * e * std::exp((e - 1.0) * lx);
    d.u1 += p1;
    d.u2 += p1 * (e - 1.0) / x;
    d.u3 += p1 * (e - 1.0) * (e - 2.0) / (x * x);
    d.u4 += p1 * (e - 1.0) * (e - 2.0) * (e - 3.0) / (x * x * x);
  }
  return d;
}

Derivs derivs_at(const UtilitySpec& spec, double x) {
  if (const auto* p = std::get_if<PowerUtility>(&spec)) {
    return power_sum_derivs({}, {p->gamma}, {1.0 / p->gamma}, x);
  }
  if (const auto* m = std::get_if<MixturePowers>(&spec)) {
    std::vector<double> coef(m->weight.size());
    for (std::size_t i = 0; i < coef.size(); ++i) coef[i] = m->weight[i] / m->exponent[i];
    return power_sum_derivs({}, m->exponent, coef, x);
  }
  if (const auto* pm = std::get_if<PowerMeasure>(&spec)) {
    return power_sum_derivs({}, pm->atom_y, pm->weight, x);
  }
  const auto& imm = std::get<InverseMarginalMeasure>(spec);
  double q = imm_marginal_of_wealth(imm, x, -1.0);
  double S1 = imm_moment(imm, q, 1);
  Derivs d{};
  d.u1 = q;
  d.u2 = -q / S1;  // 1/I'(q)
  // higher derivatives are not needed through this path; risk-tolerance
  // derivatives for this class use the marginal-side formulas instead
  d.u3 = std::numeric_limits<double>::quiet_NaN();
  d.u4 = std::numeric_limits<double>::quiet_NaN();
  return d;
}

// U(b) - U(a) without the cancellation that hits the integrated class when
// the antiderivative carries a large constant: integrate over [a,b] directly.
double u_diff(const UtilitySpec& spec, double a, double b) {
  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&spec)) {
    double hint = -1.0;
    auto integrand = [&](double t) {
      hint = imm_marginal_of_wealth(*imm, t, hint);
      return hint;
    };
    double scale = imm_marginal_of_wealth(*imm, 0.5 * (a + b), -1.0);
    return adaptive_simpson(integrand, a, b, 1e-13 * (b - a) * scale, 40);
  }
  return u_eval(spec, b) - u_eval(spec, a);
}

}  // namespace

void validate(const UtilitySpec& spec) {
  if (const auto* p = std::get_if<PowerUtility>(&spec)) {
    if (!(p->gamma > 0.0 && p->gamma < 1.0))
      throw validation_error("power utility: exponent must lie strictly inside (0,1); "
                             "logarithmic and negative exponents are not supported");
    return;
  }
  if (const auto* m = std::get_if<MixturePowers>(&spec)) {
    if (m->weight.empty() || m->weight.size() != m->exponent.size())
      throw validation_error("mixture utility: weights/exponents must be nonempty and match");
    for (double c : m->weight)
      if (!(c > 0.0)) throw validation_error("mixture utility: weights must be positive");
    for (double g : m->exponent)
      if (!(g > 0.0 && g < 1.0))
        throw validation_error("mixture utility: exponents must lie strictly inside (0,1)");
    return;
  }
  if (const auto* pm = std::get_if<PowerMeasure>(&spec)) {
    if (pm->atom_y.empty() || pm->atom_y.size() != pm->weight.size())
      throw validation_error("power-measure utility: atoms/weights must be nonempty and match");
    for (double w : pm->weight)
      if (!(w > 0.0)) throw validation_error("power-measure utility: weights must be positive");
    for (double y : pm->atom_y) {
      if (!(y >= 0.0 && y < 1.0))
        throw validation_error("power-measure utility: atoms must lie in [0,1)");
      if (y == 0.0)
        throw validation_error("power-measure utility: an atom at 0 is not allowed");
    }
    return;
  }
  const auto& imm = std::get<InverseMarginalMeasure>(spec);
  if (imm.atom_s.empty() || imm.atom_s.size() != imm.weight.size())
    throw validation_error("inverse-marginal utility: atoms/weights must be nonempty and match");
  if (!(imm.support_bound > 0.0) || !std::isfinite(imm.support_bound))
    throw validation_error("inverse-marginal utility: support bound must be positive and finite");
  for (double w : imm.weight)
    if (!(w > 0.0)) throw validation_error("inverse-marginal utility: weights must be positive");
  for (double s : imm.atom_s) {
    if (!(s > 0.0))
      throw validation_error(
          "inverse-marginal utility: atoms at s = 0 make I non-surjective and U "
          "undefined near 0; they are rejected");
    if (s > imm.support_bound)
      throw validation_error("inverse-marginal utility: atom exceeds the support bound");
  }
}

std::string class_name(const UtilitySpec& spec) {
  if (std::holds_alternative<PowerUtility>(spec)) return "power";
  if (std::holds_alternative<MixturePowers>(spec)) return "mixture_powers";
  if (std::holds_alternative<PowerMeasure>(spec)) return "power_measure";
  return "inverse_marginal_measure";
}

double u_eval(const UtilitySpec& spec, double x) {
  require_positive_x(x, "u_eval");
  if (const auto* p = std::get_if<PowerUtility>(&spec))
    return std::pow(x, p->gamma) / p->gamma;
  if (const auto* m = std::get_if<MixturePowers>(&spec)) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m->weight.size(); ++i)
      acc += m->weight[i] * std::pow(x, m->exponent[i]) / m->exponent[i];
    return acc;
  }
  if (const auto* pm = std::get_if<PowerMeasure>(&spec)) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pm->weight.size(); ++i)
      acc += pm->weight[i] * std::pow(x, pm->atom_y[i]);
    return acc;
  }
  // U' = I^{-1} integrated upward from the fixed lower limit. The integrand
  // is steep near the lower limit when small exponents dominate, so the
  // interval is split geometrically before handing pieces to the adaptive rule.
  const auto& imm = std::get<InverseMarginalMeasure>(spec);
  double lo = kImmLowerLimit;
  if (x <= lo) return 0.0;
  double hint = -1.0;
  auto integrand = [&](double t) {
    hint = imm_marginal_of_wealth(imm, t, hint);
    return hint;
  };
  double acc = 0.0;
  double a = lo;
  while (a < x) {
    double b = std::min(x, a * 16.0);
    acc += adaptive_simpson(integrand, a, b, 1e-13 * std::max(1.0, acc), 40);
    a = b;
  }
  return acc;
}

double u_prime(const UtilitySpec& spec, double x) {
  require_positive_x(x, "u_prime");
  return derivs_at(spec, x).u1;
}

double u_second(const UtilitySpec& spec, double x) {
  require_positive_x(x, "u_second");
  return derivs_at(spec, x).u2;
}

double inverse_marginal(const UtilitySpec& spec, double y) {
  return inverse_marginal(spec, y, -1.0);
}

double inverse_marginal(const UtilitySpec& spec, double y, double hint_x) {
  require_positive_y(y, "inverse_marginal");
  if (const auto* p = std::get_if<PowerUtility>(&spec))
    return std::exp(std::log(y) / (p->gamma - 1.0));
  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&spec))
    return imm_moment(*imm, y, 0);
  auto uprime = [&](double x) { return derivs_at(spec, x).u1; };
  auto dlog = [&](double x) {
    Derivs d = derivs_at(spec, x);
    return x * d.u2 / d.u1;  // d ln U' / d ln x, negative
  };
  return invert_decreasing(uprime, dlog, y, "inverse_marginal", hint_x);
}

double risk_tolerance_terminal(const UtilitySpec& spec, double x) {
  require_positive_x(x, "risk_tolerance_terminal");
  if (const auto* p = std::get_if<PowerUtility>(&spec)) return x / (1.0 - p->gamma);
  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&spec)) {
    double q = imm_marginal_of_wealth(*imm, x, -1.0);
    return imm_moment(*imm, q, 1);
  }
  Derivs d = derivs_at(spec, x);
  return -d.u1 / d.u2;
}

double risk_tolerance_terminal_dx(const UtilitySpec& spec, double x) {
  require_positive_x(x, "risk_tolerance_terminal_dx");
  if (const auto* p = std::get_if<PowerUtility>(&spec)) return 1.0 / (1.0 - p->gamma);
  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&spec)) {
    double q = imm_marginal_of_wealth(*imm, x, -1.0);
    return imm_moment(*imm, q, 2) / imm_moment(*imm, q, 1);
  }
  Derivs d = derivs_at(spec, x);
  return -1.0 + d.u1 * d.u3 / (d.u2 * d.u2);
}

double risk_tolerance_terminal_dxx(const UtilitySpec& spec, double x) {
  require_positive_x(x, "risk_tolerance_terminal_dxx");
  if (std::holds_alternative<PowerUtility>(spec)) return 0.0;
  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&spec)) {
    double q = imm_marginal_of_wealth(*imm, x, -1.0);
    double S1 = imm_moment(*imm, q, 1);
    double S2 = imm_moment(*imm, q, 2);
    double S3 = imm_moment(*imm, q, 3);
    return (S3 * S1 - S2 * S2) / (S1 * S1 * S1);
  }
  Derivs d = derivs_at(spec, x);
  return d.u3 / d.u2 + d.u1 * d.u4 / (d.u2 * d.u2) -
         2.0 * d.u1 * d.u3 * d.u3 / (d.u2 * d.u2 * d.u2);
}

double rbar_of_marginal(const UtilitySpec& spec, double y) {
  require_positive_y(y, "rbar_of_marginal");
  if (const auto* p = std::get_if<PowerUtility>(&spec))
    return std::exp(std::log(y) / (p->gamma - 1.0)) / (1.0 - p->gamma);
  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&spec))
    return imm_moment(*imm, y, 1);
  return risk_tolerance_terminal(spec, inverse_marginal(spec, y));
}

double rbar_prime_of_marginal(const UtilitySpec& spec, double y) {
  require_positive_y(y, "rbar_prime_of_marginal");
  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&spec))
    return imm_moment(*imm, y, 2) / imm_moment(*imm, y, 1);
  return risk_tolerance_terminal_dx(spec, inverse_marginal(spec, y));
}

double rbar_second_of_marginal(const UtilitySpec& spec, double y) {
  require_positive_y(y, "rbar_second_of_marginal");
  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&spec)) {
    double S1 = imm_moment(*imm, y, 1);
    double S2 = imm_moment(*imm, y, 2);
    double S3 = imm_moment(*imm, y, 3);
    return (S3 * S1 - S2 * S2) / (S1 * S1 * S1);
  }
  return risk_tolerance_terminal_dxx(spec, inverse_marginal(spec, y));
}

double u_of_marginal(const UtilitySpec& spec, double y) {
  require_positive_y(y, "u_of_marginal");
  if (const auto* p = std::get_if<PowerUtility>(&spec)) {
    double a = 1.0 / (1.0 - p->gamma);
    return std::exp(-a * p->gamma * std::log(y)) / p->gamma;
  }
  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&spec)) {
    double q0 = imm_marginal_of_wealth(*imm, kImmLowerLimit, -1.0);
    return imm_antiderivative(*imm, y) - imm_antiderivative(*imm, q0);
  }
  return u_eval(spec, inverse_marginal(spec, y));
}

namespace {

// Central-difference tables of order O(h^2); offsets are symmetric.
struct Stencil {
  int half;               // max |offset|
  const double* coef;     // length 2*half+1, divided by h^order outside
};

const double kC1[] = {-0.5, 0.0, 0.5};
const double kC2[] = {1.0, -2.0, 1.0};
const double kC3[] = {-0.5, 1.0, 0.0, -1.0, 0.5};
const double kC4[] = {1.0, -4.0, 6.0, -4.0, 1.0};
const double kC5[] = {-0.5, 2.0, -2.5, 0.0, 2.5, -2.0, 0.5};

Stencil stencil_for(int order) {
  switch (order) {
    case 1: return {1, kC1};
    case 2: return {1, kC2};
    case 3: return {2, kC3};
    case 4: return {2, kC4};
    default: return {3, kC5};
  }
}

template <typename F>
double central_diff(F&& f, double x, double h, int order) {
  Stencil s = stencil_for(order);
  double acc = 0.0;
  for (int k = -s.half; k <= s.half; ++k) acc += s.coef[k + s.half] * f(x + k * h);
  return acc / std::pow(h, order);
}

}  // namespace

Assumption1Report assumption1_check(const UtilitySpec& spec,
                                    const std::vector<double>& grid, double K_max) {
  validate(spec);
  if (grid.size() < 100)
    throw validation_error("assumption1_check: grid must have at least 100 points");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || (i > 0 && !(grid[i] > grid[i - 1])))
      throw validation_error("assumption1_check: grid must be strictly increasing and positive");
  }
  if (grid.back() / grid.front() < 1e4)
    throw validation_error("assumption1_check: grid must span at least 4 decades");

  Assumption1Report rep{};
  rep.profile.K_bounds.fill(0.0);
  rep.profile.K0 = 0.0;
  rep.profile.stencil_error = 0.0;

  const double eps = std::numeric_limits<double>::epsilon();
  double prev_r = -1.0;
  rep.r_increasing = true;
  rep.ap_positive = true;
  rep.u_increasing_concave = true;

  for (double x : grid) {
    double r = risk_tolerance_terminal(spec, x);
    if (!(r > prev_r)) rep.r_increasing = false;
    prev_r = r;
    rep.profile.K0 = std::max(rep.profile.K0, r / x);

    double ap = -x * u_second(spec, x) / u_prime(spec, x);
    if (!(ap > 0.0)) rep.ap_positive = false;

    // scan monotonicity/concavity of U itself by finite differences
    double hu = x * 1e-5;
    double d_right = u_diff(spec, x, x + hu);
    double d_left = u_diff(spec, x - hu, x);
    double up = (d_right + d_left) / (2.0 * hu);
    double us = (d_right - d_left) / (hu * hu);
    if (!(up > 0.0) || !(us < 0.0)) rep.u_increasing_concave = false;

    for (int order = 1; order <= 5; ++order) {
      auto f = [&](double t) {
        double rt = risk_tolerance_terminal(spec, t);
        return std::pow(rt, order);
      };
      // Per-order step balancing truncation against roundoff, then one
      // Richardson pass; the fixed relative step of a naive stencil is
      // unusable at order 5.
      double h = x * std::pow(eps, 1.0 / (order + 2));
      double d_h = central_diff(f, x, h, order);
      double d_h2 = central_diff(f, x, 0.5 * h, order);
      double d = (4.0 * d_h2 - d_h) / 3.0;
      double err = std::abs(d_h2 - d_h) / 3.0;
      rep.profile.K_bounds[order - 1] = std::max(rep.profile.K_bounds[order - 1], std::abs(d));
      rep.profile.stencil_error =
          std::max(rep.profile.stencil_error, err / std::max(1.0, std::abs(d)));
    }
  }

  double x_lo = grid.front() * 1e-4;
  rep.r_zero_at_origin = risk_tolerance_terminal(spec, x_lo) < 1e-4 * rep.profile.K0 *
                                                                   grid.front() +
                                                               1e-12;

  std::size_t n = grid.size();
  rep.profile.elasticity_estimate =
      (std::log(u_eval(spec, grid[n - 1])) - std::log(u_eval(spec, grid[n - 2]))) /
      (std::log(grid[n - 1]) - std::log(grid[n - 2]));

  rep.k_bounds_ok = true;
  for (double k : rep.profile.K_bounds)
    if (!(k <= K_max)) rep.k_bounds_ok = false;
  rep.linear_bound_ok = rep.profile.K0 <= K_max;
  rep.elasticity_ok = rep.profile.elasticity_estimate < 1.0;

  if (rep.profile.stencil_error > 1e-3)
    rep.flags.push_back("derivative stencil error above 1e-3; grid or step too coarse");
  if (!rep.k_bounds_ok) rep.flags.push_back("a derivative bound exceeds K_max");
  if (!rep.r_increasing) rep.flags.push_back("risk tolerance not strictly increasing");
  return rep;
}

}  // namespace slowvol
