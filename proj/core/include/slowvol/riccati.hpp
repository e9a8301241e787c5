#pragma once

#include <variant>
#include <vector>

namespace slowvol {

// Exponential factor moment E[e^{w Z_s}]: psi(tau) = w + A(tau).
struct GMomentSpec {
  double delta;
  double beta;
  double m;
  double w;
};

// Second moment of wealth under the reference strategy: f = x^2 e^{A z + B}.
struct WealthSecondMomentSpec {
  double delta;
  double beta;
  double m;
  double mu;
  double gamma;
  double rho;
};

using RiccatiSpec = std::variant<GMomentSpec, WealthSecondMomentSpec>;

void validate(const RiccatiSpec& spec);

enum class RiccatiSource { ClosedForm, Numeric };

struct RiccatiSolution {
  std::vector<double> tau;  // ascending nodes starting at 0
  std::vector<double> A;
  std::vector<double> B;
  std::vector<double> dA;   // right-hand sides at the nodes, for dense output
  std::vector<double> dB;
  double tau_star = 0.0;    // +inf when finite on the whole requested range
  bool truncated = false;   // stopped before tau_max because of blow-up
  RiccatiSource source = RiccatiSource::Numeric;

  double a_at(double tau_q) const;  // cubic Hermite between nodes
  double b_at(double tau_q) const;
};

// A(tau) for the moment problem in closed form; throws numerical_error naming
// the explosion time when tau >= tau_star.
double a_closed_form(const GMomentSpec& spec, double tau);

// Explosion time of the closed form; +inf outside the exploding parameter case.
double tau_star_closed_form(const GMomentSpec& spec);

// Classic 4th-order integration with step halving; blow-up (|A| > 1e12) is
// localized by bisecting the last stable step. step <= 0 picks the default
// 1e-3 * min(1, 1/delta).
RiccatiSolution riccati_integrate(const RiccatiSpec& spec, double tau_max, double step = 0.0);

// f(t,z;s): GMoment => exp(w z + A(s-t) z + B(s-t)); wealth variant =>
// x^2 exp(A(s-t) z + B(s-t)).
double moment_function(const RiccatiSpec& spec, const RiccatiSolution& sol, double t,
                       double z, double s, double x = 1.0);

}  // namespace slowvol
