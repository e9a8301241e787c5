#include <cmath>
#include <vector>

#include "doctest.h"
#include "slowvol/common.hpp"
#include "slowvol/merton.hpp"
#include "slowvol/utility.hpp"
#include "support/test_models.hpp"

using namespace slowvol;

namespace {

const SharpeContext kCtx{0.5, 1.0, 1.0, 0.0};  // lambda 0.5, sigma 1, T 1

UtilitySpec mixture() { return MixturePowers{{0.5, 0.5}, {0.25, 0.75}}; }
UtilitySpec imm_two() { return InverseMarginalMeasure{{1.0, 2.0}, {0.5, 0.5}, 2.0}; }
UtilitySpec imm_one() { return InverseMarginalMeasure{{1.0}, {1.0}, 1.0}; }

MertonSolution power_closed() {
  return make_merton_solution(PowerUtility{0.5}, kCtx, HRep::ClosedForm);
}
MertonSolution power_quad(int n = 128) {
  return make_merton_solution(PowerUtility{0.5}, kCtx, HRep::Quadrature, n);
}

}  // namespace

TEST_CASE("heat transform closed forms") {
  // Power exponent 0.5: H(x,t) = exp(2x + (lambda^2/2)*4*(T-t)).
  const auto sol = power_closed();
  CHECK(heat_solve(sol, 0.0, 0.0) == doctest::Approx(std::exp(0.5)).epsilon(1e-13));
  CHECK(heat_solve(sol, 1.2, 0.25) ==
        doctest::Approx(std::exp(2.4 + 0.5 * 0.75)).epsilon(1e-13));

  const auto q = power_quad(256);
  for (double x : {-2.0, 0.0, 1.5}) {
    CHECK(heat_solve(q, x, 0.0) == doctest::Approx(heat_solve(sol, x, 0.0)).epsilon(1e-12));
  }

  // Single exponential atom: H(x,t) = w exp(s x + lambda^2 s^2 (T-t)/2).
  const SharpeContext c2{1.0, 1.0, 2.0, 0.0};
  const auto one = make_merton_solution(imm_one(), c2);
  CHECK(heat_solve(one, 0.0, 0.0) == doctest::Approx(std::exp(1.0)).epsilon(1e-13));
}

TEST_CASE("terminal slice of H is the inverse marginal") {
  const std::vector<UtilitySpec> specs{PowerUtility{0.5}, mixture(), imm_two()};
  for (const auto& spec : specs) {
    const auto sol = make_merton_solution(spec, kCtx);
    for (double x : {-2.0, 0.0, 1.7}) {
      CHECK(heat_solve(sol, x, 1.0) ==
            doctest::Approx(inverse_marginal(spec, std::exp(-x))).epsilon(1e-10));
    }
  }
}

TEST_CASE("H is strictly increasing with the full positive range") {
  const auto sol = make_merton_solution(mixture(), kCtx);
  double prev = 0.0;
  for (double x = -30.0; x <= 30.0; x += 0.5) {
    const double h = heat_solve(sol, x, 0.3);
    CHECK(h > prev);
    prev = h;
  }
  CHECK(heat_solve(sol, -30.0, 0.3) < 1e-6);
  CHECK(heat_solve(sol, 30.0, 0.3) > 1e6);
}

TEST_CASE("spatial derivatives of H match finite differences") {
  const auto sol = make_merton_solution(mixture(), kCtx);
  for (double x : {-1.0, 0.4, 2.3}) {
    const double h = 1e-5;
    const double fd1 = (heat_solve(sol, x + h, 0.2) - heat_solve(sol, x - h, 0.2)) / (2 * h);
    CHECK(heat_solve_dx(sol, x, 0.2) == doctest::Approx(fd1).epsilon(1e-7));
    const double fd2 =
        (heat_solve_dx(sol, x + h, 0.2) - heat_solve_dx(sol, x - h, 0.2)) / (2 * h);
    CHECK(heat_solve_dxx(sol, x, 0.2) == doctest::Approx(fd2).epsilon(1e-7));
    const double fd3 =
        (heat_solve_dxx(sol, x + h, 0.2) - heat_solve_dxx(sol, x - h, 0.2)) / (2 * h);
    CHECK(heat_solve_dxxx(sol, x, 0.2) == doctest::Approx(fd3).epsilon(1e-6));
    CHECK(heat_solve_dx(sol, x, 0.2) > 0.0);
  }
}

TEST_CASE("heat inversion round-trips across representations") {
  const std::vector<MertonSolution> sols{
      power_quad(), make_merton_solution(mixture(), kCtx),
      make_merton_solution(imm_two(), kCtx)};
  for (const auto& sol : sols) {
    for (double x = -5.0; x <= 5.0; x += 0.5) {
      for (double t : {0.0, 0.6, 1.0}) {
        const double y = heat_solve(sol, x, t);
        CHECK(heat_invert(sol, y, t) == doctest::Approx(x).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("heat inversion closed forms for small targets") {
  // Power closed form: x = (ln y - lambda^2 a^2 (T-t)/2)/a, a = 2.
  const auto sol = power_closed();
  CHECK(heat_invert(sol, 1e-8, 0.0) ==
        doctest::Approx((std::log(1e-8) - 0.5) / 2.0).epsilon(1e-12));
  CHECK(heat_invert(sol, 1e-9, 0.0) < -10.0);
  CHECK(heat_invert(power_quad(), 1e-8, 0.0) ==
        doctest::Approx((std::log(1e-8) - 0.5) / 2.0).epsilon(1e-9));

  // Single exponential atom: x = ln(y/w) - lambda^2 (T-t)/2 for s = 1.
  const SharpeContext c2{1.0, 1.0, 2.0, 0.0};
  const auto one = make_merton_solution(imm_one(), c2);
  CHECK(heat_invert(one, 0.25, 0.0) ==
        doctest::Approx(std::log(0.25) - 1.0).epsilon(1e-12));
}

TEST_CASE("heat inversion reports the reachable range for extreme targets") {
  const auto sol =
      make_merton_solution(InverseMarginalMeasure{{0.5}, {1.0}, 1.0}, kCtx,
                           HRep::Quadrature);
  try {
    heat_invert(sol, 1e200, 0.0);
    FAIL("expected bracket_error");
  } catch (const bracket_error& e) {
    CHECK(e.achievable_lo == 0.0);
    CHECK(std::isfinite(e.achievable_hi));
    CHECK(e.achievable_hi > 1e100);
    CHECK(e.achievable_hi < 1e200);
  }
  try {
    heat_invert(sol, 1e-200, 0.0);
    FAIL("expected bracket_error");
  } catch (const bracket_error& e) {
    CHECK(std::isinf(e.achievable_hi));
    CHECK(e.achievable_lo > 1e-200);
    CHECK(e.achievable_lo < 1e-100);
  }
  CHECK_THROWS_AS(heat_invert(sol, 0.0, 0.0), validation_error);
  CHECK_THROWS_AS(heat_invert(sol, -1.0, 0.0), validation_error);
}

TEST_CASE("merton value matches the power closed form") {
  const double expect = 2.0 * std::exp(0.125);
  CHECK(merton_value(power_closed(), 1.0, 0.0) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(merton_value(power_quad(), 1.0, 0.0) == doctest::Approx(expect).epsilon(1e-9));
  // General (t,x): (x^gamma/gamma) exp(lambda^2 gamma (T-t) / (2(1-gamma))).
  const double v = merton_value(power_quad(), 2.5, 0.4);
  CHECK(v == doctest::Approx(2.0 * std::sqrt(2.5) * std::exp(0.125 * 0.6)).epsilon(1e-9));
}

TEST_CASE("merton value terminal and no-opportunity reductions") {
  for (const UtilitySpec& spec : {UtilitySpec(PowerUtility{0.5}), mixture(), imm_two()}) {
    const auto sol = make_merton_solution(spec, kCtx);
    CHECK(merton_value(sol, 1.4, 1.0) == doctest::Approx(u_eval(spec, 1.4)).epsilon(1e-10));
    SharpeContext flat = kCtx;
    flat.lambda = 0.0;
    const auto sol0 = make_merton_solution(spec, flat);
    for (double t : {0.0, 0.5}) {
      CHECK(merton_value(sol0, 1.4, t) == doctest::Approx(u_eval(spec, 1.4)).epsilon(1e-9));
    }
  }
}

TEST_CASE("merton value is increasing concave and decays in time") {
  const auto sol = make_merton_solution(mixture(), kCtx);
  for (double t : {0.1, 0.5, 0.9}) {
    for (double x : {0.3, 1.0, 3.0}) {
      CHECK(merton_value_dx(sol, x, t) > 0.0);
      CHECK(merton_value_dxx(sol, x, t) < 0.0);
    }
  }
  for (double x : {0.5, 2.0}) {
    CHECK(merton_value(sol, x, 0.1) > merton_value(sol, x, 0.5));
    CHECK(merton_value(sol, x, 0.5) > merton_value(sol, x, 0.9));
  }
  // R = -M_x / M_xx ties the exported derivatives together.
  const double r = risk_tolerance(sol, 1.3, 0.4);
  CHECK(r == doctest::Approx(-merton_value_dx(sol, 1.3, 0.4) /
                             merton_value_dxx(sol, 1.3, 0.4)).epsilon(1e-8));
}

TEST_CASE("quadrature node count is converged at the default") {
  const auto a = make_merton_solution(mixture(), kCtx, HRep::Quadrature, 128);
  const auto b = make_merton_solution(mixture(), kCtx, HRep::Quadrature, 256);
  const double va = merton_value(a, 1.3, 0.4);
  const double vb = merton_value(b, 1.3, 0.4);
  CHECK(std::abs(va - vb) / std::abs(vb) < 1e-8);
}

TEST_CASE("closed-form and quadrature routes agree for exponential sums") {
  const auto closed = make_merton_solution(imm_two(), kCtx, HRep::ClosedForm);
  const auto quad = make_merton_solution(imm_two(), kCtx, HRep::Quadrature, 256);
  for (double t : {0.0, 0.5}) {
    for (double x : {0.4, 1.0, 3.0}) {
      CHECK(merton_value(closed, x, t) ==
            doctest::Approx(merton_value(quad, x, t)).epsilon(1e-9));
      CHECK(risk_tolerance(closed, x, t) ==
            doctest::Approx(risk_tolerance(quad, x, t)).epsilon(1e-9));
    }
  }
}

TEST_CASE("risk tolerance by class") {
  const auto p = power_quad();
  for (double t : {0.0, 0.5, 1.0}) {
    CHECK(risk_tolerance(p, 1.7, t) == doctest::Approx(2.0 * 1.7).epsilon(1e-9));
  }
  const SharpeContext c2{1.0, 1.0, 2.0, 0.0};
  const auto one = make_merton_solution(imm_one(), c2);
  for (double t : {0.0, 1.2, 2.0}) {
    CHECK(risk_tolerance(one, 0.8, t) == doctest::Approx(0.8).epsilon(1e-9));
  }
  const auto mix = make_merton_solution(mixture(), kCtx);
  double prev = 0.0;
  for (double x : testkit::logspace(1e-2, 1e2, 41)) {
    const double r = risk_tolerance(mix, x, 0.3);
    CHECK(r > prev);
    prev = r;
  }
  CHECK(risk_tolerance(mix, 1.6, 1.0) ==
        doctest::Approx(risk_tolerance_terminal(mixture(), 1.6)).epsilon(1e-9));
}

TEST_CASE("optimal allocation is the scaled risk tolerance") {
  CHECK(merton_strategy(power_closed(), 2.0, 0.3) == doctest::Approx(2.0).epsilon(1e-12));
  SharpeContext flat = kCtx;
  flat.lambda = 0.0;
  const auto sol0 = make_merton_solution(mixture(), flat);
  CHECK(merton_strategy(sol0, 2.0, 0.3) == 0.0);
  SharpeContext halfsig = kCtx;
  halfsig.sigma = 0.5;
  const auto sol2 = make_merton_solution(PowerUtility{0.5}, halfsig);
  // lambda/sigma = 1 here, so the allocation equals R itself.
  CHECK(merton_strategy(sol2, 2.0, 0.3) ==
        doctest::Approx(risk_tolerance(sol2, 2.0, 0.3)).epsilon(1e-12));
}

TEST_CASE("linear-operator identities hold to stencil accuracy") {
  const std::vector<double> ts{0.25, 0.5, 0.75};
  const std::vector<double> xs{0.5, 1.0, 2.0};

  const auto rp = operator_residuals(power_quad(), ts, xs);
  CHECK(rp.n_points == 9);
  CHECK(rp.max_pde_residual < 1e-6);
  CHECK(rp.max_vega_gamma_residual < 1e-6);
  CHECK(rp.max_r_lambda_residual < 1e-6);

  const auto ri = operator_residuals(make_merton_solution(imm_one(), kCtx), ts, xs);
  CHECK(ri.max_pde_residual < 1e-6);
  CHECK(ri.max_vega_gamma_residual < 1e-6);
  CHECK(ri.max_r_lambda_residual < 1e-6);

  const auto rm = operator_residuals(make_merton_solution(mixture(), kCtx), ts, xs);
  CHECK(rm.max_pde_residual < 1e-4);
  CHECK(rm.max_vega_gamma_residual < 1e-4);
  CHECK(rm.max_r_lambda_residual < 1e-4);
}

TEST_CASE("no investment opportunity zeroes the sensitivity identities") {
  SharpeContext flat = kCtx;
  flat.lambda = 0.0;
  const auto sol = make_merton_solution(mixture(), flat);
  const auto rep = operator_residuals(sol, {0.3, 0.6}, {0.8, 1.6});
  CHECK(rep.max_vega_gamma_residual == 0.0);
  CHECK(rep.max_r_lambda_residual == 0.0);
}

TEST_CASE("residual grid must keep clear of the time boundary") {
  const auto sol = power_quad();
  CHECK_THROWS_AS(operator_residuals(sol, {0.0}, {1.0}), validation_error);
  CHECK_THROWS_AS(operator_residuals(sol, {1.0}, {1.0}), validation_error);
  CHECK_THROWS_AS(operator_residuals(sol, {0.5}, {-1.0}), validation_error);
}

TEST_CASE("interior risk-tolerance ratios stay within terminal envelopes") {
  // Terminal slopes for the 0.25/0.75 mixture lie in [4/3, 4]; the interior
  // R_x is a weighted average of terminal slopes, so 4 bounds it exactly.
  const auto sol = make_merton_solution(mixture(), kCtx);
  const auto xs = testkit::logspace(1e-2, 1e2, 25);

  const UtilitySpec mix = mixture();
  const auto fine = testkit::logspace(1e-6, 1e6, 2001);
  double k1_term = 0.0, k2_term = 0.0;
  for (double x : fine) {
    const double r = risk_tolerance_terminal(mix, x);
    const double rxx = risk_tolerance_terminal_dxx(mix, x);
    k1_term = std::max(k1_term, std::abs(r * rxx));
    const double h = x * 1e-4;
    const double rxxx = (risk_tolerance_terminal_dxx(mix, x + h) -
                         risk_tolerance_terminal_dxx(mix, x - h)) /
                        (2.0 * h);
    k2_term = std::max(k2_term, std::abs(r * r * rxxx));
  }

  // Interior R*R_xx picks up at most the variance of the terminal slope
  // (range 8/3), on top of the terminal sup of |R R''|.
  const double k1_bound = 1.05 * k1_term + (8.0 / 3.0) * (8.0 / 3.0) / 4.0 + 1e-9;
  // No sharp algebra at third order; allow a generous constant envelope.
  const double k2_bound = 3.0 * (k2_term + 1.0);

  for (double t : {0.2, 0.5, 0.8}) {
    for (double x : xs) {
      CHECK(std::abs(risk_tolerance_dx(sol, x, t)) <= 4.0 * (1.0 + 1e-9));
      const double r = risk_tolerance(sol, x, t);
      CHECK(std::abs(r * risk_tolerance_dxx(sol, x, t)) <= k1_bound);
      const double h = x * 1e-4;
      const double rxxx =
          (risk_tolerance_dxx(sol, x + h, t) - risk_tolerance_dxx(sol, x - h, t)) /
          (2.0 * h);
      CHECK(std::abs(r * r * rxxx) <= k2_bound);
    }
  }
}

TEST_CASE("solution construction is validated") {
  CHECK_THROWS_AS(make_merton_solution(PowerUtility{0.5}, kCtx, HRep::Auto, 1),
                  validation_error);
  CHECK_THROWS_AS(make_merton_solution(PowerUtility{0.5}, kCtx, HRep::Auto, 2000),
                  validation_error);
  CHECK_THROWS_AS(make_merton_solution(mixture(), kCtx, HRep::ClosedForm),
                  validation_error);
  SharpeContext bad = kCtx;
  bad.sigma = 0.0;
  CHECK_THROWS_AS(make_merton_solution(PowerUtility{0.5}, bad), validation_error);
  bad = kCtx;
  bad.t = 2.0;
  CHECK_THROWS_AS(make_merton_solution(PowerUtility{0.5}, bad), validation_error);
  CHECK_THROWS_AS(merton_value(power_quad(), -1.0, 0.0), validation_error);
  CHECK_THROWS_AS(heat_solve(power_quad(), 0.0, 1.5), validation_error);
}
