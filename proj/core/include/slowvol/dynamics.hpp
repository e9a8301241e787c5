#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slowvol/strategy.hpp"

namespace slowvol {

struct CIRParams {
  double mu;    // drift coefficient: mu(z) = mu (constant), sigma(z) = sqrt(1/z)
  double m;     // factor mean level
  double beta;  // factor vol-of-vol
};

// Asset price coefficients mu(z), sigma(z) plus slow factor
// dZ = delta c(Z) dt + sqrt(delta) g(Z) dW^Z, corr(dW, dW^Z) = rho.
struct MarketModel {
  std::function<double(double)> mu_fn;
  std::function<double(double)> sigma_fn;
  std::function<double(double)> c_fn;
  std::function<double(double)> g_fn;
  double rho = 0.0;
  double delta = 1.0;
  std::optional<CIRParams> cir;

  double lambda(double z) const { return mu_fn(z) / sigma_fn(z); }
  double lambda_prime(double z) const;  // analytic for the CIR instance, else central FD
};

void validate(const MarketModel& model);
MarketModel cir_model(CIRParams p, double rho, double delta);

struct FellerReport {
  bool applicable = false;
  bool ok = false;
  double margin = 0.0;  // 2m - beta^2
};
FellerReport feller_check(const MarketModel& model);

enum class Scheme { EulerFullTruncation, Milstein };

struct PathConfig {
  long n_paths = 200000;
  int n_steps = 256;  // per unit time when sized by callers; absolute here
  std::uint64_t seed = 1;
  Scheme scheme = Scheme::EulerFullTruncation;
  bool antithetic = true;
  bool common_random_numbers = true;
  int threads = 1;
  bool dump_paths = false;
  std::string dump_file;
};

void validate(const PathConfig& cfg);

struct StartPoint {
  double t = 0.0;
  double x = 1.0;
  double z = 1.0;
};

struct SimDiagnostics {
  long floored_paths = 0;   // wealth absorbed at 0
  long z_truncations = 0;   // negative factor updates clamped
  double min_z = 0.0;
  double min_x = 0.0;
};

struct SimResult {
  std::vector<double> terminal_wealth;
  std::vector<double> terminal_factor;
  SimDiagnostics diag;
};

// Simulates X under `strategy` and Z under the model from `start` to T.
// Wealth hitting 0 is absorbed; NaN aborts with the offending path index.
SimResult simulate_paths(const MarketModel& model, const StrategyFn& strategy,
                         StartPoint start, double horizon_T, const PathConfig& cfg);

struct PairedPath {
  double x_a;   // terminal wealth under (model_a, strategy_a)
  double x_b;   // terminal wealth under (model_b, strategy_b)
  double w_T;   // total asset-driving Brownian increment, shared by both arms
};

struct PairedResult {
  std::vector<PairedPath> paths;
  SimDiagnostics diag_a;
  SimDiagnostics diag_b;
};

// Both arms consume identical Gaussian increments per (path, step): common
// random numbers for strategy or model (e.g. delta vs frozen-factor) pairs.
PairedResult simulate_paired(const MarketModel& model_a, const StrategyFn& strategy_a,
                             const MarketModel& model_b, const StrategyFn& strategy_b,
                             StartPoint start, double horizon_T, const PathConfig& cfg);

}  // namespace slowvol
