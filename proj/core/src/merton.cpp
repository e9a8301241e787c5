#include "slowvol/merton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "slowvol/common.hpp"
#include "slowvol/quadrature.hpp"

namespace slowvol {

namespace {

constexpr double kExpCap = 700.0;  // exp() overflow guard, log-domain first

double checked_exp(double arg, const char* who) {
  if (std::abs(arg) > kExpCap)
    throw numerical_error(std::string(who) + ": exponent magnitude exceeds cap");
  return std::exp(arg);
}

bool closed_form_available(const UtilitySpec& u) {
  return std::holds_alternative<PowerUtility>(u) ||
         std::holds_alternative<InverseMarginalMeasure>(u);
}

bool use_closed_form(const MertonSolution& sol) {
  switch (sol.rep) {
    case HRep::ClosedForm: return true;
    case HRep::Quadrature: return false;
    default: return closed_form_available(sol.utility);
  }
}

void check_time(const MertonSolution& sol, double t, const char* who) {
  if (!(t >= 0.0 && t <= sol.ctx.horizon_T))
    throw validation_error(std::string(who) + ": t outside [0, T]");
}

// One pass over the Gauss-Hermite nodes accumulating weighted values of a
// marginal-coordinate integrand. Nodes are ascending, so the wealth roots
// move monotonically and warm-start each other for the root-found classes.
template <typename PerNode>
double gh_accumulate(const MertonSolution& sol, double center, double spread,
                     PerNode&& per_node) {
  const GaussHermite& gh = GaussHermite::cached(sol.n_gh);
  double acc = 0.0;
  double hint = -1.0;
  for (int i = 0; i < gh.size(); ++i) {
    double s = center + spread * gh.nodes()[i];
    double y = checked_exp(-s, "heat quadrature");
    acc += gh.weights()[i] * per_node(y, hint);
    (void)hint;
  }
  return acc;
}

// d^k H / dx^k through the closed forms (power / exponential-sum classes).
double heat_closed(const MertonSolution& sol, double x, double tau, int k) {
  double lam2tau = sol.ctx.lambda * sol.ctx.lambda * tau;
  if (const auto* p = std::get_if<PowerUtility>(&sol.utility)) {
    double a = 1.0 / (1.0 - p->gamma);
    double ak = 1.0;
    for (int i = 0; i < k; ++i) ak *= a;
    return ak * checked_exp(a * x + 0.5 * lam2tau * a * a, "heat_solve");
  }
  const auto& imm = std::get<InverseMarginalMeasure>(sol.utility);
  double acc = 0.0;
  for (std::size_t j = 0; j < imm.atom_s.size(); ++j) {
    double s = imm.atom_s[j];
    double sk = 1.0;
    for (int i = 0; i < k; ++i) sk *= s;
    acc += imm.weight[j] * sk * checked_exp(s * x + 0.5 * lam2tau * s * s, "heat_solve");
  }
  return acc;
}

double heat_quadrature(const MertonSolution& sol, double x, double tau, int k) {
  double spread = sol.ctx.lambda * std::sqrt(tau);
  switch (k) {
    case 0:
      return gh_accumulate(sol, x, spread, [&](double y, double& hint) {
        if (std::holds_alternative<MixturePowers>(sol.utility) ||
            std::holds_alternative<PowerMeasure>(sol.utility)) {
          hint = inverse_marginal(sol.utility, y, hint);
          return hint;
        }
        return inverse_marginal(sol.utility, y);
      });
    case 1:
      return gh_accumulate(sol, x, spread, [&](double y, double&) {
        return rbar_of_marginal(sol.utility, y);
      });
    case 2:
      return gh_accumulate(sol, x, spread, [&](double y, double&) {
        return rbar_prime_of_marginal(sol.utility, y) * rbar_of_marginal(sol.utility, y);
      });
    default:
      return gh_accumulate(sol, x, spread, [&](double y, double&) {
        double r = rbar_of_marginal(sol.utility, y);
        double rp = rbar_prime_of_marginal(sol.utility, y);
        double rpp = rbar_second_of_marginal(sol.utility, y);
        return (rpp * r + rp * rp) * r;
      });
  }
}

double heat_dk(const MertonSolution& sol, double x, double t, int k, const char* who) {
  check_time(sol, t, who);
  double tau = sol.ctx.horizon_T - t;
  if (use_closed_form(sol)) return heat_closed(sol, x, tau, k);
  return heat_quadrature(sol, x, tau, k);
}

}  // namespace

void validate(const SharpeContext& ctx) {
  if (!(ctx.sigma > 0.0)) throw validation_error("sharpe context: sigma must be positive");
  if (!(ctx.horizon_T > 0.0)) throw validation_error("sharpe context: horizon must be positive");
  if (!(ctx.t >= 0.0 && ctx.t <= ctx.horizon_T))
    throw validation_error("sharpe context: t must lie in [0, T]");
  if (!std::isfinite(ctx.lambda)) throw validation_error("sharpe context: lambda must be finite");
}

MertonSolution make_merton_solution(UtilitySpec utility, SharpeContext ctx, HRep rep,
                                    int n_gh) {
  validate(utility);
  validate(ctx);
  if (n_gh < 2 || n_gh > 1024)
    throw validation_error("merton solution: node count out of range [2, 1024]");
  if (rep == HRep::ClosedForm && !closed_form_available(utility))
    throw validation_error("merton solution: no closed form for this utility class");
  GaussHermite::cached(n_gh);  // warm the node cache; value integrals use it either way
  return MertonSolution{std::move(utility), ctx, rep, n_gh};
}

double heat_solve(const MertonSolution& sol, double x, double t) {
  return heat_dk(sol, x, t, 0, "heat_solve");
}
double heat_solve_dx(const MertonSolution& sol, double x, double t) {
  return heat_dk(sol, x, t, 1, "heat_solve_dx");
}
double heat_solve_dxx(const MertonSolution& sol, double x, double t) {
  return heat_dk(sol, x, t, 2, "heat_solve_dxx");
}
double heat_solve_dxxx(const MertonSolution& sol, double x, double t) {
  return heat_dk(sol, x, t, 3, "heat_solve_dxxx");
}

double heat_invert(const MertonSolution& sol, double y, double t) {
  check_time(sol, t, "heat_invert");
  if (!(y > 0.0) || !std::isfinite(y))
    throw validation_error("heat_invert: y must be positive and finite");
  double tau = sol.ctx.horizon_T - t;
  double lam2tau = sol.ctx.lambda * sol.ctx.lambda * tau;

  if (const auto* p = std::get_if<PowerUtility>(&sol.utility); p && use_closed_form(sol)) {
    double a = 1.0 / (1.0 - p->gamma);
    return (std::log(y) - 0.5 * lam2tau * a * a) / a;
  }
  const auto* imm = std::get_if<InverseMarginalMeasure>(&sol.utility);
  if (imm && use_closed_form(sol) && imm->atom_s.size() == 1) {
    double s = imm->atom_s[0];
    return (std::log(y / imm->weight[0]) - 0.5 * lam2tau * s * s) / s;
  }

  // H is strictly increasing from 0 to infinity; seed from the terminal
  // relation H(x,T) = I(e^{-x}) and expand an additive bracket.
  double x0;
  if (imm) {
    // Solve sum_j w_j e^{s_j x} = y in the log domain; u_prime(y) itself
    // under/overflows for extreme y that H can still represent.
    const double ly = std::log(y);
    double s_lo = imm->atom_s[0], s_hi = imm->atom_s[0];
    for (double s : imm->atom_s) {
      s_lo = std::min(s_lo, s);
      s_hi = std::max(s_hi, s);
    }
    double x = ly / (ly >= 0.0 ? s_hi : s_lo);
    for (int it = 0; it < 80; ++it) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < imm->atom_s.size(); ++j)
        mx = std::max(mx, std::log(imm->weight[j]) + imm->atom_s[j] * x);
      double s0 = 0.0, s1 = 0.0;
      for (std::size_t j = 0; j < imm->atom_s.size(); ++j) {
        double e = std::exp(std::log(imm->weight[j]) + imm->atom_s[j] * x - mx);
        s0 += e;
        s1 += imm->atom_s[j] * e;
      }
      double g = mx + std::log(s0) - ly;
      double x_next = x - g * s0 / s1;
      bool done = std::abs(x_next - x) <= 1e-12 * std::max(1.0, std::abs(x));
      x = x_next;
      if (done) break;
    }
    x0 = x;
  } else {
    x0 = -std::log(u_prime(sol.utility, y));
  }
  if (!std::isfinite(x0)) x0 = 0.0;  // u_prime under/overflow; expand from 0
  double lo = x0, hi = x0;
  auto H = [&](double x) { return heat_dk(sol, x, t, 0, "heat_invert"); };
  double f_lo, f_hi;
  bool seeded = true;
  try {
    f_lo = f_hi = H(x0);
  } catch (const numerical_error&) {
    seeded = false;
  }
  if (!seeded) {
    // The integrand over/underflows at the seed; |x| near 0 always
    // evaluates, so walk toward 0 and either resume from there or report
    // the reachable range seen at the first evaluable point.
    const double dir = x0 > 0.0 ? -1.0 : 1.0;
    double back = std::max(1.0, 0.5 * lam2tau);
    double x_ok = x0;
    int guard = 0;
    for (;;) {
      x_ok += dir * back;
      back *= 2.0;
      try {
        f_lo = f_hi = H(x_ok);
        break;
      } catch (const numerical_error&) {
        if (++guard > 200 || !std::isfinite(x_ok))
          throw bracket_error("heat_invert: seed point overflows", 0.0,
                              std::numeric_limits<double>::infinity());
      }
    }
    if (dir < 0.0 && f_hi < y)
      throw bracket_error("heat_invert: target above reachable range", 0.0, f_hi);
    if (dir > 0.0 && f_lo > y)
      throw bracket_error("heat_invert: target below reachable range", f_lo,
                          std::numeric_limits<double>::infinity());
    lo = hi = x_ok;
  }
  double step = std::max(1.0, 0.5 * lam2tau);
  int guard = 0;
  while (f_lo > y) {
    double last_good = f_lo;
    lo -= step;
    step *= 2.0;
    try {
      f_lo = H(lo);
    } catch (const numerical_error&) {
      throw bracket_error("heat_invert: target below reachable range", last_good,
                          std::numeric_limits<double>::infinity());
    }
    if (++guard > 200)
      throw bracket_error("heat_invert: target below reachable range", f_lo,
                          std::numeric_limits<double>::infinity());
  }
  step = std::max(1.0, 0.5 * lam2tau);
  guard = 0;
  while (f_hi < y) {
    double last_good = f_hi;
    hi += step;
    step *= 2.0;
    try {
      f_hi = H(hi);
    } catch (const numerical_error&) {
      throw bracket_error("heat_invert: target above reachable range", 0.0, last_good);
    }
    if (++guard > 200)
      throw bracket_error("heat_invert: target above reachable range", 0.0, f_hi);
  }

  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    double val = H(x);
    if (std::abs(val - y) <= 1e-11 * y) return x;
    if (val < y) lo = x; else hi = x;
    double deriv = heat_dk(sol, x, t, 1, "heat_invert");
    double xn = x - (val - y) / deriv;
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    x = xn;
  }
  if (std::abs(H(x) - y) <= 1e-9 * y) return x;  // loose fallback before failing
  throw numerical_error("heat_invert: did not converge to tolerance");
}

namespace {

// Per-atom antiderivative of q I'(q) for the exponential-sum class, up to a
// constant fixed elsewhere.
double imm_A(const InverseMarginalMeasure& imm, double lq) {
  double acc = 0.0;
  for (std::size_t j = 0; j < imm.atom_s.size(); ++j) {
    double s = imm.atom_s[j], w = imm.weight[j];
    if (std::abs(s - 1.0) < 1e-12) acc -= w * lq;
    else acc -= w * s / (1.0 - s) * std::exp((1.0 - s) * lq);
  }
  return acc;
}

}  // namespace

double merton_value(const MertonSolution& sol, double x, double t) {
  check_time(sol, t, "merton_value");
  if (!(x > 0.0)) throw validation_error("merton_value: requires x > 0");
  double tau = sol.ctx.horizon_T - t;
  double lam = sol.ctx.lambda;
  if (tau == 0.0 || lam == 0.0) return u_eval(sol.utility, x);

  if (const auto* p = std::get_if<PowerUtility>(&sol.utility); p && use_closed_form(sol)) {
    double g = p->gamma;
    return std::pow(x, g) / g * checked_exp(lam * lam * g * tau / (2.0 * (1.0 - g)),
                                            "merton_value");
  }
  double xi = heat_invert(sol, x, t);
  double eta = xi + lam * lam * tau;

  if (const auto* imm = std::get_if<InverseMarginalMeasure>(&sol.utility);
      imm && use_closed_form(sol)) {
    // Terminal marginal along the exact wealth is lognormal:
    // q_T = exp(-eta - lam sqrt(tau) N), so each atom term integrates in
    // closed form against the Gaussian.
    double acc = 0.0;
    for (std::size_t j = 0; j < imm->atom_s.size(); ++j) {
      double s = imm->atom_s[j], w = imm->weight[j];
      if (std::abs(s - 1.0) < 1e-12) {
        acc += w * eta;  // -w E[ln q_T]
      } else {
        double arg = (s - 1.0) * eta + 0.5 * (1.0 - s) * (1.0 - s) * lam * lam * tau;
        acc -= w * s / (1.0 - s) * checked_exp(arg, "merton_value");
      }
    }
    // shift so that the result matches U's additive convention
    double A_q0 = imm_A(*imm, 0.0) - u_of_marginal(sol.utility, 1.0);
    return acc - A_q0;
  }

  double spread = lam * std::sqrt(tau);
  return gh_accumulate(sol, eta, spread, [&](double y, double& hint) {
    if (std::holds_alternative<MixturePowers>(sol.utility) ||
        std::holds_alternative<PowerMeasure>(sol.utility)) {
      hint = inverse_marginal(sol.utility, y, hint);
      return u_eval(sol.utility, hint);
    }
    return u_of_marginal(sol.utility, y);
  });
}

double merton_value_dx(const MertonSolution& sol, double x, double t) {
  check_time(sol, t, "merton_value_dx");
  if (!(x > 0.0)) throw validation_error("merton_value_dx: requires x > 0");
  double tau = sol.ctx.horizon_T - t;
  double xi = heat_invert(sol, x, t);
  return checked_exp(-xi - 0.5 * sol.ctx.lambda * sol.ctx.lambda * tau, "merton_value_dx");
}

double merton_value_dxx(const MertonSolution& sol, double x, double t) {
  return -merton_value_dx(sol, x, t) / risk_tolerance(sol, x, t);
}

double risk_tolerance(const MertonSolution& sol, double x, double t) {
  check_time(sol, t, "risk_tolerance");
  if (!(x > 0.0)) throw validation_error("risk_tolerance: requires x > 0");
  if (const auto* p = std::get_if<PowerUtility>(&sol.utility); p && use_closed_form(sol))
    return x / (1.0 - p->gamma);
  double xi = heat_invert(sol, x, t);
  return heat_dk(sol, xi, t, 1, "risk_tolerance");
}

double risk_tolerance_dx(const MertonSolution& sol, double x, double t) {
  check_time(sol, t, "risk_tolerance_dx");
  if (!(x > 0.0)) throw validation_error("risk_tolerance_dx: requires x > 0");
  if (const auto* p = std::get_if<PowerUtility>(&sol.utility); p && use_closed_form(sol))
    return 1.0 / (1.0 - p->gamma);
  double xi = heat_invert(sol, x, t);
  return heat_dk(sol, xi, t, 2, "risk_tolerance_dx") / heat_dk(sol, xi, t, 1, "risk_tolerance_dx");
}

double risk_tolerance_dxx(const MertonSolution& sol, double x, double t) {
  check_time(sol, t, "risk_tolerance_dxx");
  if (!(x > 0.0)) throw validation_error("risk_tolerance_dxx: requires x > 0");
  if (std::holds_alternative<PowerUtility>(sol.utility) && use_closed_form(sol)) return 0.0;
  double xi = heat_invert(sol, x, t);
  double h1 = heat_dk(sol, xi, t, 1, "risk_tolerance_dxx");
  double h2 = heat_dk(sol, xi, t, 2, "risk_tolerance_dxx");
  double h3 = heat_dk(sol, xi, t, 3, "risk_tolerance_dxx");
  return (h3 / h1 - (h2 / h1) * (h2 / h1)) / h1;
}

double merton_strategy(const MertonSolution& sol, double x, double t) {
  return sol.ctx.lambda / sol.ctx.sigma * risk_tolerance(sol, x, t);
}

double exact_merton_wealth_sample(const MertonSolution& sol, double t, double x, double s,
                                  double brownian_increment) {
  if (!(t <= s && s <= sol.ctx.horizon_T))
    throw validation_error("exact_merton_wealth_sample: need t <= s <= T");
  double lam = sol.ctx.lambda;
  double xi = heat_invert(sol, x, t);
  return heat_solve(sol, xi + lam * lam * (s - t) + lam * brownian_increment, s);
}

OperatorResidualReport operator_residuals(const MertonSolution& sol,
                                          const std::vector<double>& t_grid,
                                          const std::vector<double>& x_grid) {
  OperatorResidualReport rep{};
  double T = sol.ctx.horizon_T;
  double lam = sol.ctx.lambda;
  double h_t = 1e-4 * std::max(1.0, T);
  double h_l = 1e-5 * std::max(std::abs(lam), 0.1);

  auto with_lambda = [&](double l) {
    MertonSolution s2 = sol;
    s2.ctx.lambda = l;
    return s2;
  };
  MertonSolution sol_p = with_lambda(lam + h_l);
  MertonSolution sol_m = with_lambda(lam - h_l);
  MertonSolution sol_p2 = with_lambda(lam + 0.5 * h_l);
  MertonSolution sol_m2 = with_lambda(lam - 0.5 * h_l);

  for (double t : t_grid) {
    if (!(t - h_t > 0.0 && t + h_t < T))
      throw validation_error(
          "operator_residuals: t grid point too close to 0 or T for the time stencil");
    double tau = T - t;
    for (double x : x_grid) {
      if (!(x > 0.0)) throw validation_error("operator_residuals: requires x > 0");
      double M = merton_value(sol, x, t);
      double Mx = merton_value_dx(sol, x, t);
      double R = risk_tolerance(sol, x, t);
      double Mxx = -Mx / R;

      auto richardson_t = [&](const MertonSolution& s2, auto&& f) {
        double d1 = (f(s2, x, t + h_t) - f(s2, x, t - h_t)) / (2.0 * h_t);
        double d2 = (f(s2, x, t + 0.5 * h_t) - f(s2, x, t - 0.5 * h_t)) / h_t;
        return (4.0 * d2 - d1) / 3.0;
      };
      double Mt = richardson_t(sol, [](const MertonSolution& s2, double xx, double tt) {
        return merton_value(s2, xx, tt);
      });
      double nonlinear = 0.5 * lam * lam * Mx * Mx / Mxx;
      double denom = std::max({std::abs(Mt), std::abs(nonlinear), 1e-14 * std::abs(M), 1e-300});
      rep.max_pde_residual = std::max(rep.max_pde_residual, std::abs(Mt - nonlinear) / denom);

      auto richardson_l = [&](auto&& f) {
        // M and R are even in lambda, so the derivative at lambda = 0 is 0
        // exactly; the stencil would only report node-permutation roundoff.
        if (lam == 0.0) return 0.0;
        double d1 = (f(sol_p) - f(sol_m)) / (2.0 * h_l);
        double d2 = (f(sol_p2) - f(sol_m2)) / h_l;
        return (4.0 * d2 - d1) / 3.0;
      };
      double M_lam = richardson_l([&](const MertonSolution& s2) {
        return merton_value(s2, x, t);
      });
      double vega_rhs = tau * lam * R * Mx;  // equals -(T-t) lam R^2 M_xx
      double vdenom = std::max({std::abs(M_lam), std::abs(vega_rhs), std::abs(M), 1e-300});
      rep.max_vega_gamma_residual =
          std::max(rep.max_vega_gamma_residual, std::abs(M_lam - vega_rhs) / vdenom);

      double R_lam = richardson_l([&](const MertonSolution& s2) {
        return risk_tolerance(s2, x, t);
      });
      double r_rhs = tau * lam * R * R * risk_tolerance_dxx(sol, x, t);
      double rdenom = std::max({std::abs(R_lam), std::abs(r_rhs), std::abs(R), 1e-300});
      rep.max_r_lambda_residual =
          std::max(rep.max_r_lambda_residual, std::abs(R_lam - r_rhs) / rdenom);

      ++rep.n_points;
    }
  }
  return rep;
}

}  // namespace slowvol
