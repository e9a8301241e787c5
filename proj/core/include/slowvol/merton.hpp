#pragma once

#include <vector>

#include "slowvol/utility.hpp"

namespace slowvol {

struct SharpeContext {
  double lambda = 0.0;   // Sharpe ratio mu/sigma
  double sigma = 1.0;    // > 0
  double horizon_T = 1.0;
  double t = 0.0;        // reference time in [0, horizon_T]
};

void validate(const SharpeContext& ctx);

enum class HRep {
  Auto,        // closed form where the class admits one, else quadrature
  ClosedForm,  // power / measure-of-exponentials classes only
  Quadrature,  // Gauss-Hermite on the terminal condition
};

// Constant-coefficient optimal-investment solution in the monotone
// heat-transform representation: M_x(t, H(x,t)) = exp(-x - lambda^2(T-t)/2).
struct MertonSolution {
  UtilitySpec utility;
  SharpeContext ctx;
  HRep rep = HRep::Auto;
  int n_gh = 128;
};

MertonSolution make_merton_solution(UtilitySpec utility, SharpeContext ctx,
                                    HRep rep = HRep::Auto, int n_gh = 128);

// H(x,t) and its spatial derivative chain.
double heat_solve(const MertonSolution& sol, double x, double t);
double heat_solve_dx(const MertonSolution& sol, double x, double t);
double heat_solve_dxx(const MertonSolution& sol, double x, double t);
double heat_solve_dxxx(const MertonSolution& sol, double x, double t);

// x with H(x,t) = y to 1e-10 relative; throws bracket_error with the
// achievable range if y is numerically unreachable.
double heat_invert(const MertonSolution& sol, double y, double t);

double merton_value(const MertonSolution& sol, double x, double t);
double merton_value_dx(const MertonSolution& sol, double x, double t);
double merton_value_dxx(const MertonSolution& sol, double x, double t);

double risk_tolerance(const MertonSolution& sol, double x, double t);
double risk_tolerance_dx(const MertonSolution& sol, double x, double t);
double risk_tolerance_dxx(const MertonSolution& sol, double x, double t);

// Dollar allocation (lambda/sigma) * R(t,x).
double merton_strategy(const MertonSolution& sol, double x, double t);

// Exact wealth map along the optimal strategy with the factor frozen:
// X_s = H(H^{-1}(x,t) + lambda^2 (s-t) + lambda * w, s) for w = W_s - W_t.
double exact_merton_wealth_sample(const MertonSolution& sol, double t, double x,
                                  double s, double brownian_increment);

struct OperatorResidualReport {
  double max_pde_residual = 0.0;         // value PDE, normalized
  double max_vega_gamma_residual = 0.0;  // d/d lambda of M vs -(T-t) lambda R^2 M_xx
  double max_r_lambda_residual = 0.0;    // d/d lambda of R vs (T-t) lambda R^2 R_xx
  int n_points = 0;
};

OperatorResidualReport operator_residuals(const MertonSolution& sol,
                                          const std::vector<double>& t_grid,
                                          const std::vector<double>& x_grid);

}  // namespace slowvol
