#include "slowvol/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "slowvol/common.hpp"

namespace slowvol {

namespace {

constexpr double kBlowupCap = 1e12;
const double kInf = std::numeric_limits<double>::infinity();

struct Rhs {
  // A' = qa A^2 + la A + ca;  B' = qb A + cb
  double qa, la, ca, qb, cb;
  double a(double A) const { return (qa * A + la) * A + ca; }
  double b(double A) const { return qb * A + cb; }
};

Rhs rhs_of(const RiccatiSpec& spec) {
  if (const auto* g = std::get_if<GMomentSpec>(&spec)) {
    double d = g->delta, b2 = g->beta * g->beta, w = g->w;
    return {0.5 * d * b2, d * b2 * w - d, 0.5 * d * b2 * w * w - d * w, d * g->m, d * g->m * w};
  }
  const auto& s = std::get<WealthSecondMomentSpec>(spec);
  double d = s.delta, b2 = s.beta * s.beta;
  double one_mg = 1.0 - s.gamma;
  return {0.5 * d * b2, 2.0 * std::sqrt(d) * s.rho * s.mu * s.beta / one_mg - d,
          (3.0 - 2.0 * s.gamma) * s.mu * s.mu / (one_mg * one_mg), d * s.m, 0.0};
}

}  // namespace

void validate(const RiccatiSpec& spec) {
  if (const auto* g = std::get_if<GMomentSpec>(&spec)) {
    if (!(g->delta >= 0.0 && g->delta <= 1.0))
      throw validation_error("riccati: delta must lie in [0, 1]");
    if (!(g->beta > 0.0)) throw validation_error("riccati: beta must be positive");
    if (!(g->m > 0.0)) throw validation_error("riccati: m must be positive");
    if (!(g->w >= 0.0)) throw validation_error("riccati: w must be nonnegative");
    return;
  }
  const auto& s = std::get<WealthSecondMomentSpec>(spec);
  if (!(s.delta >= 0.0 && s.delta <= 1.0))
    throw validation_error("riccati: delta must lie in [0, 1]");
  if (!(s.beta > 0.0)) throw validation_error("riccati: beta must be positive");
  if (!(s.m > 0.0)) throw validation_error("riccati: m must be positive");
  if (!(s.gamma > 0.0 && s.gamma < 1.0))
    throw validation_error("riccati: gamma must lie in (0, 1)");
  if (!(std::abs(s.rho) < 1.0)) throw validation_error("riccati: |rho| must be < 1");
}

double tau_star_closed_form(const GMomentSpec& spec) {
  double crit = 2.0 / (spec.beta * spec.beta);
  if (!(spec.w > crit) || spec.delta == 0.0) return kInf;
  return std::log(spec.w / (spec.w - crit)) / spec.delta;
}

double a_closed_form(const GMomentSpec& spec, double tau) {
  validate(RiccatiSpec{spec});
  if (!(tau >= 0.0)) throw validation_error("a_closed_form: tau must be nonnegative");
  double crit = 2.0 / (spec.beta * spec.beta);
  if (spec.w == 0.0 || spec.delta == 0.0) return 0.0;
  if (std::abs(spec.w - crit) < 1e-14 * crit) return 0.0;
  double ts = tau_star_closed_form(spec);
  if (tau >= ts)
    throw numerical_error("a_closed_form: solution explodes at tau_star = " +
                          std::to_string(ts));
  double e = std::exp(-spec.delta * tau);
  double r = spec.w / (spec.w - crit);
  return -spec.w * (1.0 - e) / (1.0 - r * e);
}

namespace {

struct State {
  double A, B;
};

State rk4_step(const Rhs& rhs, State s, double h) {
  auto f = [&](State u) { return State{rhs.a(u.A), rhs.b(u.A)}; };
  State k1 = f(s);
  State k2 = f({s.A + 0.5 * h * k1.A, s.B + 0.5 * h * k1.B});
  State k3 = f({s.A + 0.5 * h * k2.A, s.B + 0.5 * h * k2.B});
  State k4 = f({s.A + h * k3.A, s.B + h * k3.B});
  return {s.A + h / 6.0 * (k1.A + 2.0 * k2.A + 2.0 * k3.A + k4.A),
          s.B + h / 6.0 * (k1.B + 2.0 * k2.B + 2.0 * k3.B + k4.B)};
}

bool bad(const State& s) {
  return !std::isfinite(s.A) || !std::isfinite(s.B) || std::abs(s.A) > kBlowupCap;
}

}  // namespace

RiccatiSolution riccati_integrate(const RiccatiSpec& spec, double tau_max, double step) {
  validate(spec);
  if (!(tau_max > 0.0)) throw validation_error("riccati_integrate: tau_max must be positive");
  double delta = std::visit([](const auto& s) { return s.delta; }, spec);
  double h0 = step > 0.0 ? step : 1e-3 * std::min(1.0, 1.0 / std::max(delta, 1e-12));
  Rhs rhs = rhs_of(spec);

  RiccatiSolution sol;
  sol.source = RiccatiSource::Numeric;
  sol.tau_star = kInf;
  State s{0.0, 0.0};
  double tau = 0.0;
  auto push = [&](double tq, const State& st) {
    sol.tau.push_back(tq);
    sol.A.push_back(st.A);
    sol.B.push_back(st.B);
    sol.dA.push_back(rhs.a(st.A));
    sol.dB.push_back(rhs.b(st.A));
  };
  push(0.0, s);

  while (tau < tau_max) {
    double h = std::min(h0, tau_max - tau);
    bool accepted = false;
    for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
      State full = rk4_step(rhs, s, h);
      State half = rk4_step(rhs, rk4_step(rhs, s, 0.5 * h), 0.5 * h);
      if (bad(full) || bad(half)) {
        // blow-up inside this step: bisect the step size to localize it
        double lo = 0.0, hi = h;
        State at_lo = s;
        for (int it = 0; it < 80; ++it) {
          double mid = 0.5 * (lo + hi);
          State sm = rk4_step(rhs, rk4_step(rhs, s, 0.25 * (lo + hi)), 0.25 * (lo + hi));
          if (bad(sm)) {
            hi = mid;
          } else {
            lo = mid;
            at_lo = sm;
          }
        }
        if (lo > 0.0) push(tau + lo, at_lo);
        sol.tau_star = tau + hi;
        sol.truncated = true;
        return sol;
      }
      double scale = std::max(1.0, std::abs(half.A));
      double err = std::abs(full.A - half.A) / 15.0;
      if (err <= 1e-10 * scale) {
        s = half;
        tau += h;
        push(tau, s);
        accepted = true;
      } else {
        h *= 0.5;
      }
    }
    if (!accepted) {
      sol.tau_star = tau;
      sol.truncated = true;
      return sol;
    }
  }
  return sol;
}

namespace {

double hermite_at(const std::vector<double>& taus, const std::vector<double>& vals,
                  const std::vector<double>& ders, double q) {
  auto it = std::upper_bound(taus.begin(), taus.end(), q);
  std::size_t i = it == taus.begin() ? 0 : static_cast<std::size_t>(it - taus.begin()) - 1;
  if (i >= taus.size() - 1) return vals.back();
  double h = taus[i + 1] - taus[i];
  double u = (q - taus[i]) / h;
  double h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
  double h10 = u * (1.0 - u) * (1.0 - u);
  double h01 = u * u * (3.0 - 2.0 * u);
  double h11 = u * u * (u - 1.0);
  return h00 * vals[i] + h10 * h * ders[i] + h01 * vals[i + 1] + h11 * h * ders[i + 1];
}

}  // namespace

double RiccatiSolution::a_at(double tau_q) const {
  if (!(tau_q >= 0.0)) throw validation_error("riccati solution: tau must be nonnegative");
  if (tau_q > tau.back() + 1e-12) {
    if (truncated)
      throw numerical_error("riccati solution: query past the explosion point tau_star = " +
                            std::to_string(tau_star));
    throw validation_error("riccati solution: query past the integrated range");
  }
  return hermite_at(tau, A, dA, std::min(tau_q, tau.back()));
}

double RiccatiSolution::b_at(double tau_q) const {
  if (!(tau_q >= 0.0)) throw validation_error("riccati solution: tau must be nonnegative");
  if (tau_q > tau.back() + 1e-12) {
    if (truncated)
      throw numerical_error("riccati solution: query past the explosion point tau_star = " +
                            std::to_string(tau_star));
    throw validation_error("riccati solution: query past the integrated range");
  }
  return hermite_at(tau, B, dB, std::min(tau_q, tau.back()));
}

double moment_function(const RiccatiSpec& spec, const RiccatiSolution& sol, double t,
                       double z, double s, double x) {
  if (!(s >= t)) throw validation_error("moment_function: need s >= t");
  double tq = s - t;
  double A = sol.a_at(tq);
  double B = sol.b_at(tq);
  if (const auto* g = std::get_if<GMomentSpec>(&spec))
    return std::exp(g->w * z + A * z + B);
  return x * x * std::exp(A * z + B);
}

}  // namespace slowvol
