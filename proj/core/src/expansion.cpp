#include "slowvol/expansion.hpp"

#include <cmath>

#include "slowvol/common.hpp"
#include "slowvol/dynamics.hpp"
#include "slowvol/rng.hpp"
#include "slowvol/stats.hpp"

namespace slowvol {

void validate(const SlowFactorFrozen& frozen) {
  if (!frozen.lambda_fn || !frozen.lambda_prime_fn || !frozen.g_fn || !frozen.sigma_fn)
    throw validation_error("frozen factor: all coefficient evaluators must be set");
  if (!(std::abs(frozen.rho) < 1.0))
    throw validation_error("frozen factor: |rho| must be < 1");
  if (!(frozen.horizon_T > 0.0))
    throw validation_error("frozen factor: horizon must be positive");
  double z = frozen.z;
  if (!std::isfinite(frozen.lambda_fn(z)) || !std::isfinite(frozen.lambda_prime_fn(z)) ||
      !std::isfinite(frozen.g_fn(z)) || !(frozen.sigma_fn(z) > 0.0))
    throw validation_error("frozen factor: coefficients not finite/positive at z");
}

SlowFactorFrozen freeze(const MarketModel& model, double z, double horizon_T) {
  SlowFactorFrozen f;
  f.z = z;
  f.lambda_fn = [model](double zz) { return model.lambda(zz); };
  f.lambda_prime_fn = [model](double zz) { return model.lambda_prime(zz); };
  f.g_fn = model.g_fn;
  f.sigma_fn = model.sigma_fn;
  f.rho = model.rho;
  f.horizon_T = horizon_T;
  validate(f);
  return f;
}

MertonSolution frozen_merton(const SlowFactorFrozen& frozen, const UtilitySpec& utility,
                             HRep rep, int n_gh) {
  SharpeContext ctx;
  ctx.lambda = frozen.lambda_fn(frozen.z);
  ctx.sigma = frozen.sigma_fn(frozen.z);
  ctx.horizon_T = frozen.horizon_T;
  ctx.t = 0.0;
  return make_merton_solution(utility, ctx, rep, n_gh);
}

double v0_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility, double t,
               double x) {
  return merton_value(frozen_merton(frozen, utility), x, t);
}

double v0_z_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility, double t,
                 double x) {
  MertonSolution sol = frozen_merton(frozen, utility);
  double tau = frozen.horizon_T - t;
  double lam = frozen.lambda_fn(frozen.z);
  double lamp = frozen.lambda_prime_fn(frozen.z);
  if (lamp == 0.0 || tau == 0.0) return 0.0;
  // -(T-t) lam lam' R^2 v0_xx, with v0_xx = -v0_x / R
  double R = risk_tolerance(sol, x, t);
  double Mx = merton_value_dx(sol, x, t);
  return tau * lam * lamp * R * Mx;
}

namespace {

// v0_xz = (T-t) lam lam' (R_x v0_x + R v0_xx) = (T-t) lam lam' v0_x (R_x - 1)
double v0_xz_eval(const MertonSolution& sol, const SlowFactorFrozen& frozen, double t,
                  double x) {
  double tau = frozen.horizon_T - t;
  double lam = frozen.lambda_fn(frozen.z);
  double lamp = frozen.lambda_prime_fn(frozen.z);
  if (lamp == 0.0 || tau == 0.0) return 0.0;
  double Mx = merton_value_dx(sol, x, t);
  double Rx = risk_tolerance_dx(sol, x, t);
  return tau * lam * lamp * Mx * (Rx - 1.0);
}

}  // namespace

double v1_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility, double t,
               double x) {
  if (frozen.rho == 0.0) return 0.0;
  MertonSolution sol = frozen_merton(frozen, utility);
  double tau = frozen.horizon_T - t;
  if (tau == 0.0) return 0.0;
  double lam = frozen.lambda_fn(frozen.z);
  double g = frozen.g_fn(frozen.z);
  double R = risk_tolerance(sol, x, t);
  return 0.5 * tau * frozen.rho * lam * g * R * v0_xz_eval(sol, frozen, t, x);
}

double pi0_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility, double t,
               double x) {
  MertonSolution sol = frozen_merton(frozen, utility);
  double lam = frozen.lambda_fn(frozen.z);
  if (lam == 0.0) return 0.0;
  return lam / frozen.sigma_fn(frozen.z) * risk_tolerance(sol, x, t);
}

ValueWithError vtilde_2alpha_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility,
                                  const StrategyFamily& family, double t, double x,
                                  const FeynmanKacOptions& opts) {
  validate(frozen);
  validate(family);
  if (family.pi1_is_zero) return {0.0, 0.0, false, false};
  double tau = frozen.horizon_T - t;
  if (tau == 0.0) return {0.0, 0.0, false, false};
  double lam = frozen.lambda_fn(frozen.z);

  if (const auto* p = std::get_if<PowerUtility>(&utility);
      p && family.pi1_kappa_of_pi0.has_value()) {
    double g = p->gamma;
    double kappa = *family.pi1_kappa_of_pi0;
    double theta = lam * lam * g * tau / (2.0 * (1.0 - g));
    double val = -kappa * kappa * std::pow(x, g) / (2.0 * (1.0 - g)) * lam * lam * tau *
                 std::exp(theta);
    return {val, 0.0, false, false};
  }

  // Feynman-Kac along the exact frozen-factor wealth: average of
  // int_t^T (1/2) sigma^2 pi1^2 v0_xx ds over exact paths, trapezoid in s.
  MertonSolution sol = frozen_merton(frozen, utility);
  double sigma = frozen.sigma_fn(frozen.z);
  double xi0 = heat_invert(sol, x, t);
  int n_time = opts.n_time;
  double ds = tau / n_time;
  long n_pairs = std::max(1L, opts.n_paths / 2);

  std::vector<double> pair_vals(static_cast<std::size_t>(n_pairs));
  for (long p = 0; p < n_pairs; ++p) {
    double acc[2] = {0.0, 0.0};
    double w[2] = {0.0, 0.0};
    for (int j = 0; j <= n_time; ++j) {
      double s = t + j * ds;
      if (j > 0) {
        double dw = normal_pair(opts.seed, static_cast<std::uint64_t>(p),
                                static_cast<std::uint32_t>(j), 2)
                        .z1 *
                    std::sqrt(ds);
        w[0] += dw;
        w[1] -= dw;
      }
      double trap = (j == 0 || j == n_time) ? 0.5 : 1.0;
      for (int a = 0; a < 2; ++a) {
        double xi_s = xi0 + lam * lam * (s - t) + lam * w[a];
        double xs = heat_solve(sol, xi_s, s);
        double mx = std::exp(-xi_s - 0.5 * lam * lam * (frozen.horizon_T - s));
        double r = heat_solve_dx(sol, xi_s, s);
        double v0xx = -mx / r;
        double pi1 = family.pi1_perturb(s, xs, frozen.z);
        acc[a] += trap * 0.5 * sigma * sigma * pi1 * pi1 * v0xx;
      }
    }
    pair_vals[static_cast<std::size_t>(p)] = 0.5 * (acc[0] + acc[1]) * ds;
  }
  MeanVar mv = mean_var(pair_vals);
  bool warn = opts.target_stderr > 0.0 && mv.se > opts.target_stderr;
  return {mv.mean, mv.se, true, warn};
}

ValueWithError vtilde1_quarter_eval(const SlowFactorFrozen& frozen, const UtilitySpec& utility,
                                    const StrategyFamily& family, double t, double x,
                                    const FeynmanKacOptions& opts) {
  if (std::abs(family.alpha - 0.25) > 1e-12)
    throw validation_error("vtilde1_quarter_eval: family exponent must be 1/4");
  if (!family.identical_to_pi0)
    throw validation_error("vtilde1_quarter_eval: base strategy must be the reference one");
  ValueWithError tail = vtilde_2alpha_eval(frozen, utility, family, t, x, opts);
  tail.value += v1_eval(frozen, utility, t, x);
  return tail;
}

namespace {

// Max |f| over a forward time grid and a wealth fan; used to decide whether
// a strategy component vanishes ahead of (t, x).
template <typename F>
double sample_forward_max(F&& f, double t, double T, double x) {
  double best = 0.0;
  const double mults[] = {0.5, 1.0, 2.0};
  for (int k = 0; k <= 12; ++k) {
    double u = t + (T - t) * k / 12.0;
    for (double mx : mults) best = std::max(best, std::abs(f(u, x * mx)));
  }
  return best;
}

}  // namespace

ApproxDescriptor approximation_select(const SlowFactorFrozen& frozen,
                                      const UtilitySpec& utility,
                                      const StrategyFamily& family, double t, double x) {
  validate(frozen);
  validate(family);
  const double thr = 1e-12;
  double T = frozen.horizon_T;
  double z = frozen.z;
  ApproxDescriptor d;

  bool base_is_reference = family.identical_to_pi0 ||
                           (family.pi0_scale.has_value() && *family.pi0_scale == 1.0);
  bool base_differs_ahead = false;
  if (!base_is_reference) {
    if (family.pi0_scale.has_value()) {
      base_differs_ahead = true;  // scale != 1 against a nonvanishing reference
    } else {
      MertonSolution sol = frozen_merton(frozen, utility);
      double lam = frozen.lambda_fn(z);
      double sig = frozen.sigma_fn(z);
      double diff = sample_forward_max(
          [&](double u, double xx) {
            double ref = lam / sig * risk_tolerance(sol, xx, u);
            return family.pi0_base(u, xx, z) - ref;
          },
          t, T, x);
      if (diff > thr) {
        base_differs_ahead = true;
      } else {
        // sampled agreement cannot certify identity
        d.formula = ApproxFormula::Indeterminate;
        d.case_tag = "indeterminate";
        d.region = "base-agreement-unverified";
        d.sampled_region = true;
        return d;
      }
      d.sampled_region = true;
    }
  }

  if (base_differs_ahead) {
    d.formula = ApproxFormula::Vtilde0;
    d.accuracy_exponent = std::min(family.alpha, 0.5);
    d.region = "base-differs-ahead";
    d.case_tag = "(iv)";
    return d;
  }

  // base is the reference strategy; classify by the perturbation
  bool pert_zero_flag = family.pi1_is_zero ||
                        (family.pi1_kappa_of_pi0.has_value() && *family.pi1_kappa_of_pi0 == 0.0);
  bool pert_active_ahead = false;
  if (!pert_zero_flag) {
    if (family.pi1_kappa_of_pi0.has_value()) {
      pert_active_ahead = true;
    } else {
      double mx = sample_forward_max(
          [&](double u, double xx) { return family.pi1_perturb(u, xx, z); }, t, T, x);
      d.sampled_region = true;
      if (mx > thr) {
        pert_active_ahead = true;
      } else {
        d.formula = ApproxFormula::Indeterminate;
        d.case_tag = "indeterminate";
        d.region = "perturbation-agreement-unverified";
        return d;
      }
    }
  }

  if (pert_zero_flag) {
    d.formula = ApproxFormula::V0PlusSqrtDeltaV1;
    d.accuracy_exponent = 1.0;
    d.region = "perturbation-absent";
    d.case_tag = "(i)";
    return d;
  }

  double a = family.alpha;
  if (a >= 0.5) {
    d.formula = ApproxFormula::V0PlusSqrtDeltaV1;
    d.accuracy_exponent = 1.0;
    d.case_tag = "(i)";
  } else if (a > 0.25) {
    d.formula = ApproxFormula::V0PlusSqrtDeltaV1;
    d.accuracy_exponent = 2.0 * a;
    d.case_tag = "(i)";
  } else if (std::abs(a - 0.25) <= 1e-12) {
    d.formula = ApproxFormula::V0PlusSqrtDeltaVtilde1;
    d.accuracy_exponent = 0.75;
    d.case_tag = "(ii)";
  } else {
    d.formula = ApproxFormula::V0PlusDelta2AlphaVtilde2Alpha;
    d.accuracy_exponent = std::min(3.0 * a, 0.5);
    d.case_tag = "(iii)";
  }
  d.region = pert_active_ahead ? "perturbation-ahead" : "perturbation-absent";
  return d;
}

ExpansionResult make_expansion(const SlowFactorFrozen& frozen, const UtilitySpec& utility) {
  validate(frozen);
  validate(utility);
  ExpansionResult r;
  r.v0 = [frozen, utility](double t, double x) { return v0_eval(frozen, utility, t, x); };
  r.v1 = [frozen, utility](double t, double x) { return v1_eval(frozen, utility, t, x); };
  r.pi0 = [frozen, utility](double t, double x) { return pi0_eval(frozen, utility, t, x); };
  return r;
}

}  // namespace slowvol
