#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "slowvol/common.hpp"
#include "slowvol/dynamics.hpp"
#include "slowvol/riccati.hpp"
#include "slowvol/stats.hpp"
#include "support/test_models.hpp"

using namespace slowvol;
using namespace testkit;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("numeric integration matches the closed form on a bounded case") {
  GMomentSpec spec{0.1, 0.5, 1.0, 1.0};
  CHECK(tau_star_closed_form(spec) == kInf);
  RiccatiSolution sol = riccati_integrate(RiccatiSpec{spec}, 10.0);
  CHECK_FALSE(sol.truncated);
  CHECK(sol.source == RiccatiSource::Numeric);
  CHECK(sol.tau.front() == 0.0);
  CHECK(sol.A.front() == 0.0);
  double worst = 0.0;
  for (int i = 0; i <= 500; ++i) {
    double tau = 10.0 * i / 500.0;
    double closed = a_closed_form(spec, tau);
    worst = std::max(worst, std::abs(sol.a_at(tau) - closed));
  }
  CHECK(worst < 1e-8);
  // A decays monotonically from 0 toward -w and stays inside (-w, 0].
  CHECK(sol.a_at(10.0) > -spec.w);
  CHECK(sol.a_at(10.0) < sol.a_at(1.0));
  CHECK(sol.a_at(1.0) < 0.0);
}

TEST_CASE("explosion time is localized to within one base step") {
  GMomentSpec spec{0.5, 1.0, 1.0, 10.0};
  const double ts = std::log(10.0 / 8.0) / 0.5;
  CHECK(tau_star_closed_form(spec) == doctest::Approx(ts).epsilon(1e-14));

  RiccatiSolution sol = riccati_integrate(RiccatiSpec{spec}, 1.0);
  CHECK(sol.truncated);
  // The numeric pole may sit a hair past the closed-form one (polynomial
  // steps undershoot the superexponential growth), but stays within one
  // base step of it.
  CHECK(std::abs(sol.tau_star - ts) < 1e-3);
  CHECK(sol.tau.back() <= sol.tau_star);
  CHECK(sol.tau.back() > ts - 1e-3);

  // Queries past the explosion report it as a numerical failure.
  try {
    sol.a_at(0.9);
    FAIL("expected a throw");
  } catch (const numerical_error& e) {
    CHECK(std::string(e.what()).find("explosion point tau_star") != std::string::npos);
  }
  CHECK_THROWS_AS(a_closed_form(spec, ts), numerical_error);
  CHECK_THROWS_AS(a_closed_form(spec, 0.9), numerical_error);
  CHECK(std::isfinite(a_closed_form(spec, 0.25 * ts)));  // finite strictly inside
}

TEST_CASE("degenerate parameter limits") {
  // Frozen factor: nothing moves.
  GMomentSpec frozen{0.0, 0.5, 1.0, 3.0};
  CHECK(tau_star_closed_form(frozen) == kInf);
  CHECK(a_closed_form(frozen, 2.0) == 0.0);
  RiccatiSolution sol = riccati_integrate(RiccatiSpec{frozen}, 2.0);
  CHECK(sol.a_at(1.7) == 0.0);
  CHECK(sol.b_at(1.7) == 0.0);

  // Zero exponent: the moment is identically one.
  GMomentSpec zero_w{0.3, 0.5, 1.0, 0.0};
  CHECK(a_closed_form(zero_w, 5.0) == 0.0);
  RiccatiSolution sz = riccati_integrate(RiccatiSpec{zero_w}, 5.0);
  CHECK(sz.a_at(5.0) == 0.0);
  CHECK(moment_function(RiccatiSpec{zero_w}, sz, 0.0, 2.0, 5.0) == 1.0);

  // The critical exponent w = 2 / beta^2 sits exactly on a fixed point.
  GMomentSpec crit{0.3, 0.5, 1.0, 8.0};
  CHECK(tau_star_closed_form(crit) == kInf);
  CHECK(a_closed_form(crit, 3.0) == 0.0);
  RiccatiSolution sc = riccati_integrate(RiccatiSpec{crit}, 3.0);
  CHECK(std::abs(sc.a_at(3.0)) < 1e-9);

  // Slow-factor limit: the curve collapses at rate delta.
  GMomentSpec slow{1e-8, 0.5, 1.0, 1.0};
  RiccatiSolution ss = riccati_integrate(RiccatiSpec{slow}, 1.0);
  CHECK(std::abs(ss.a_at(1.0)) <= 1e-6);
}

TEST_CASE("factor exponential moments are bounded uniformly in the time scale") {
  // w chosen as the wealth-moment exponent of the benchmark market.
  const double w = kMu * kMu * kGamma * 1.0 / ((1.0 - kGamma) * (1.0 - kGamma));
  CHECK(w == doctest::Approx(0.1).epsilon(1e-12));
  for (double delta : {1.0, 0.5, 0.1, 0.01, 1e-4}) {
    GMomentSpec spec{delta, kBeta, kM, w};
    CHECK(tau_star_closed_form(spec) == kInf);
    RiccatiSolution sol = riccati_integrate(RiccatiSpec{spec}, 1.0);
    CHECK_FALSE(sol.truncated);
    for (double tau : {0.25, 0.5, 1.0}) {
      CHECK(sol.a_at(tau) <= 0.0);
      CHECK(sol.a_at(tau) >= -w);
      CHECK(sol.b_at(tau) >= 0.0);
      CHECK(sol.b_at(tau) <= delta * kM * w * tau + 1e-12);
    }
  }
}

TEST_CASE("moment function solves the backward equation") {
  GMomentSpec spec{0.5, 0.5, 1.0, 0.4};
  RiccatiSolution sol = riccati_integrate(RiccatiSpec{spec}, 2.0);
  const RiccatiSpec rs{spec};
  const double s = 1.5;
  double worst = 0.0;
  for (double t : {0.2, 0.7, 1.2}) {
    for (double z : {0.5, 1.0, 2.0}) {
      const double h = 1e-5;
      auto f = [&](double tt, double zz) { return moment_function(rs, sol, tt, zz, s); };
      double ft = (f(t + h, z) - f(t - h, z)) / (2.0 * h);
      double fz = (f(t, z + h) - f(t, z - h)) / (2.0 * h);
      double fzz = (f(t, z + h) - 2.0 * f(t, z) + f(t, z - h)) / (h * h);
      double resid = ft + spec.delta * (spec.m - z) * fz +
                     0.5 * spec.delta * spec.beta * spec.beta * z * fzz;
      worst = std::max(worst, std::abs(resid) / f(t, z));
    }
  }
  CHECK(worst < 1e-6);

  // Fixed points of the time argument.
  CHECK(moment_function(rs, sol, 0.7, 1.3, 0.7) == std::exp(spec.w * 1.3));
  CHECK_THROWS_AS(moment_function(rs, sol, 0.7, 1.3, 0.5), validation_error);
}

TEST_CASE("factor exponential moment agrees with simulation") {
  GMomentSpec spec{0.5, kBeta, kM, 0.1};
  RiccatiSolution sol = riccati_integrate(RiccatiSpec{spec}, 1.0);
  const double predicted = moment_function(RiccatiSpec{spec}, sol, 0.0, 1.0, 1.0);

  const auto model = benchmark_model(0.5);
  StrategyFn zero = [](double, double, double) { return 0.0; };
  PathConfig cfg;
  cfg.n_paths = 20000;
  cfg.n_steps = 256;
  cfg.seed = 606;
  SimResult res = simulate_paths(model, zero, {0.0, 1.0, 1.0}, 1.0, cfg);
  std::vector<double> vals(res.terminal_factor.size());
  for (std::size_t i = 0; i < vals.size(); ++i)
    vals[i] = std::exp(0.1 * res.terminal_factor[i]);
  MeanVar mv = mean_var(vals);
  CHECK(std::abs(mv.mean - predicted) < 3.5 * mv.se + 0.002 * predicted);
}

TEST_CASE("wealth second moment variant") {
  WealthSecondMomentSpec spec{0.1, kBeta, kM, kMu, kGamma, kRho};
  RiccatiSolution sol = riccati_integrate(RiccatiSpec{spec}, 1.0);
  CHECK_FALSE(sol.truncated);
  // Initial slope is the frozen-factor second-moment growth rate.
  const double expected_slope =
      (3.0 - 2.0 * kGamma) * kMu * kMu / ((1.0 - kGamma) * (1.0 - kGamma));
  CHECK(expected_slope == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(sol.dA[0] == doctest::Approx(expected_slope).epsilon(1e-12));
  CHECK(sol.a_at(0.5) > 0.0);
  CHECK(sol.a_at(1.0) > sol.a_at(0.5));
  CHECK(sol.b_at(1.0) > 0.0);

  // f = x^2 exp(A z + B): the wealth scale enters as a pure prefactor.
  const RiccatiSpec rs{spec};
  CHECK(moment_function(rs, sol, 0.0, 1.0, 0.0, 3.0) == 9.0);
  CHECK(moment_function(rs, sol, 0.0, 1.0, 1.0, 2.0) ==
        doctest::Approx(4.0 * moment_function(rs, sol, 0.0, 1.0, 1.0)).epsilon(1e-14));

  // Against simulation: E[X_T^2] under the reference strategy.
  const auto model = benchmark_model(0.1);
  StrategyFn pi = [](double, double x, double z) { return 0.5 * x * z; };
  PathConfig cfg;
  cfg.n_paths = 20000;
  cfg.n_steps = 256;
  cfg.seed = 607;
  SimResult res = simulate_paths(model, pi, {0.0, 1.0, 1.0}, 1.0, cfg);
  std::vector<double> x2(res.terminal_wealth.size());
  for (std::size_t i = 0; i < x2.size(); ++i)
    x2[i] = res.terminal_wealth[i] * res.terminal_wealth[i];
  MeanVar mv = mean_var(x2);
  const double predicted = moment_function(rs, sol, 0.0, 1.0, 1.0);
  CHECK(std::abs(mv.mean - predicted) < 3.5 * mv.se + 0.005 * predicted);
}

TEST_CASE("riccati inputs are validated") {
  CHECK_THROWS_WITH_AS(validate(RiccatiSpec{GMomentSpec{1.5, 0.5, 1.0, 1.0}}),
                       "riccati: delta must lie in [0, 1]", validation_error);
  CHECK_THROWS_AS(validate(RiccatiSpec{GMomentSpec{0.5, 0.0, 1.0, 1.0}}), validation_error);
  CHECK_THROWS_AS(validate(RiccatiSpec{GMomentSpec{0.5, 0.5, 0.0, 1.0}}), validation_error);
  CHECK_THROWS_AS(validate(RiccatiSpec{GMomentSpec{0.5, 0.5, 1.0, -0.1}}), validation_error);
  CHECK_THROWS_AS(
      validate(RiccatiSpec{WealthSecondMomentSpec{0.5, 0.5, 1.0, 0.3, 1.2, -0.5}}),
      validation_error);
  CHECK_THROWS_AS(
      validate(RiccatiSpec{WealthSecondMomentSpec{0.5, 0.5, 1.0, 0.3, 0.4, -1.0}}),
      validation_error);
  CHECK_THROWS_AS(riccati_integrate(RiccatiSpec{GMomentSpec{0.5, 0.5, 1.0, 1.0}}, 0.0),
                  validation_error);
  CHECK_THROWS_AS(a_closed_form(GMomentSpec{0.5, 0.5, 1.0, 1.0}, -1.0), validation_error);

  RiccatiSolution sol = riccati_integrate(RiccatiSpec{GMomentSpec{0.5, 0.5, 1.0, 1.0}}, 1.0);
  CHECK_THROWS_AS(sol.a_at(-0.5), validation_error);
  CHECK_THROWS_AS(sol.a_at(1.5), validation_error);  // past range, not an explosion
  CHECK_THROWS_AS(sol.b_at(2.5), validation_error);
}
