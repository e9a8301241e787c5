#include "slowvol/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "slowvol/common.hpp"
#include "slowvol/rng.hpp"

namespace slowvol {

double MarketModel::lambda_prime(double z) const {
  if (cir) return cir->mu / (2.0 * std::sqrt(z));
  double h = 1e-5 * std::max(std::abs(z), 1.0);
  return (lambda(z + h) - lambda(z - h)) / (2.0 * h);
}

void validate(const MarketModel& model) {
  if (!model.mu_fn || !model.sigma_fn || !model.c_fn || !model.g_fn)
    throw validation_error("market model: all coefficient evaluators must be set");
  if (!(std::abs(model.rho) < 1.0))
    throw validation_error("market model: |rho| must be < 1");
  // delta = 0 freezes the factor (used for pairing against frozen dynamics);
  // study inputs are validated to (0, 1] at the study level.
  if (!(model.delta >= 0.0 && model.delta <= 1.0))
    throw validation_error("market model: delta must lie in [0, 1]");
  if (model.cir) {
    if (!(model.cir->m > 0.0) || !(model.cir->beta > 0.0))
      throw validation_error("market model: CIR m and beta must be positive");
  }
}

MarketModel cir_model(CIRParams p, double rho, double delta) {
  MarketModel m;
  m.mu_fn = [p](double) { return p.mu; };
  // sigma(z) = sqrt(1/z); clamp keeps the evaluator finite if a truncated
  // path touches z = 0 (the strategy's factor of z vanishes there anyway)
  m.sigma_fn = [](double z) { return std::sqrt(1.0 / std::max(z, 1e-300)); };
  m.c_fn = [p](double z) { return p.m - z; };
  m.g_fn = [p](double z) { return p.beta * std::sqrt(std::max(z, 0.0)); };
  m.rho = rho;
  m.delta = delta;
  m.cir = p;
  validate(m);
  return m;
}

FellerReport feller_check(const MarketModel& model) {
  FellerReport rep;
  if (!model.cir) return rep;
  rep.applicable = true;
  rep.margin = 2.0 * model.cir->m - model.cir->beta * model.cir->beta;
  rep.ok = rep.margin >= 0.0;
  return rep;
}

void validate(const PathConfig& cfg) {
  if (cfg.n_paths <= 0) throw validation_error("path config: n_paths must be positive");
  if (cfg.n_steps <= 0) throw validation_error("path config: n_steps must be positive");
  if (cfg.threads <= 0) throw validation_error("path config: threads must be positive");
  if (cfg.antithetic && cfg.n_paths % 2 != 0)
    throw validation_error("path config: antithetic sampling needs an even n_paths");
}

namespace {

struct ArmState {
  double x;
  double z;
  bool absorbed = false;
};

struct ArmDiag {
  long floored = 0;
  long truncations = 0;
  double min_z;
  double min_x;
};

// One Euler (or Milstein-in-Z) step for a single arm. Coefficients are
// evaluated at the stored state; the stored factor is kept nonnegative by
// clamping, with each clamp counted.
inline void step_arm(const MarketModel& model, const StrategyFn& strategy, ArmState& st,
                     ArmDiag& diag, double t, double dt, double xi1, double xi_z,
                     double sqrt_dt, bool milstein, long path_index) {
  double z = st.z;
  double dz = model.delta * model.c_fn(z) * dt +
              std::sqrt(model.delta) * model.g_fn(z) * sqrt_dt * xi_z;
  if (milstein) {
    double beta = model.cir ? model.cir->beta : 0.0;
    if (model.cir) {
      dz += 0.25 * model.delta * beta * beta * dt * (xi_z * xi_z - 1.0);
    } else {
      double h = 1e-5 * std::max(std::abs(z), 1.0);
      double gp = (model.g_fn(z + h) - model.g_fn(z - h)) / (2.0 * h);
      dz += 0.5 * model.delta * model.g_fn(z) * gp * dt * (xi_z * xi_z - 1.0);
    }
  }
  double z_new = z + dz;
  if (z_new < 0.0) {
    z_new = 0.0;
    ++diag.truncations;
  }

  double x_new = st.x;
  if (!st.absorbed) {
    double pi = strategy(t, st.x, z);
    x_new = st.x + pi * model.mu_fn(z) * dt + pi * model.sigma_fn(z) * sqrt_dt * xi1;
    if (x_new <= 0.0) {
      x_new = 0.0;
      st.absorbed = true;
      ++diag.floored;
    }
  }
  if (!std::isfinite(x_new) || !std::isfinite(z_new))
    throw numerical_error("simulation produced a non-finite state at path " +
                          std::to_string(path_index));
  st.x = x_new;
  st.z = z_new;
  diag.min_z = std::min(diag.min_z, z_new);
  diag.min_x = std::min(diag.min_x, x_new);
}

struct TwoArmOut {
  double x_a, z_a, x_b, w_T;
};

// Runs one path through both arms with shared increments; arm b may be
// disabled for single-arm simulation.
template <bool TwoArms>
inline TwoArmOut run_path(const MarketModel& ma, const StrategyFn& sa, const MarketModel& mb,
                          const StrategyFn& sb, StartPoint start, double horizon_T,
                          const PathConfig& cfg, long path_index, std::uint64_t draw_index,
                          double anti_sign, ArmDiag& da, ArmDiag& db, std::FILE* dump) {
  int n = cfg.n_steps;
  double dt = (horizon_T - start.t) / n;
  double sqrt_dt = std::sqrt(dt);
  double rho = ma.rho;
  double rho_c = std::sqrt(1.0 - rho * rho);
  ArmState a{start.x, start.z};
  ArmState b{start.x, start.z};
  double w_T = 0.0;
  bool milstein = cfg.scheme == Scheme::Milstein;

  if (dump)
    std::fprintf(dump, "%ld,0,%.17g,%.17g,%.17g\n", path_index, start.t, a.x, a.z);
  for (int j = 0; j < n; ++j) {
    double t = start.t + j * dt;
    NormalPair np = normal_pair(cfg.seed, draw_index, static_cast<std::uint32_t>(j));
    double xi1 = np.z1;
    double xi2 = anti_sign * np.z2;
    double xi_z = rho * xi1 + rho_c * xi2;
    w_T += xi1 * sqrt_dt;
    step_arm(ma, sa, a, da, t, dt, xi1, xi_z, sqrt_dt, milstein, path_index);
    if constexpr (TwoArms)
      step_arm(mb, sb, b, db, t, dt, xi1, xi_z, sqrt_dt, milstein, path_index);
    if (dump)
      std::fprintf(dump, "%ld,%d,%.17g,%.17g,%.17g\n", path_index, j + 1, t + dt, a.x, a.z);
  }
  return {a.x, a.z, b.x, w_T};
}

// Deterministic chunked parallelism: fixed 4096-path chunks claimed by an
// atomic counter, outputs written into disjoint preallocated slots, partial
// diagnostics merged in chunk order afterwards.
template <typename PerPath>
void parallel_paths(long n_paths, int threads, std::vector<ArmDiag>& diag_a_chunks,
                    std::vector<ArmDiag>& diag_b_chunks, PerPath&& per_path) {
  const long chunk = 4096;
  long n_chunks = (n_paths + chunk - 1) / chunk;
  diag_a_chunks.assign(static_cast<std::size_t>(n_chunks), ArmDiag{0, 0, 1e300, 1e300});
  diag_b_chunks.assign(static_cast<std::size_t>(n_chunks), ArmDiag{0, 0, 1e300, 1e300});

  std::atomic<long> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&]() {
    try {
      for (;;) {
        long c = next.fetch_add(1);
        if (c >= n_chunks) return;
        long lo = c * chunk, hi = std::min(n_paths, lo + chunk);
        for (long i = lo; i < hi; ++i)
          per_path(i, diag_a_chunks[static_cast<std::size_t>(c)],
                   diag_b_chunks[static_cast<std::size_t>(c)]);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lk(err_mu);
      if (!err) err = std::current_exception();
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);
}

SimDiagnostics merge_diag(const std::vector<ArmDiag>& chunks) {
  SimDiagnostics d;
  d.min_z = 1e300;
  d.min_x = 1e300;
  for (const auto& c : chunks) {
    d.floored_paths += c.floored;
    d.z_truncations += c.truncations;
    d.min_z = std::min(d.min_z, c.min_z);
    d.min_x = std::min(d.min_x, c.min_x);
  }
  return d;
}

}  // namespace

SimResult simulate_paths(const MarketModel& model, const StrategyFn& strategy,
                         StartPoint start, double horizon_T, const PathConfig& cfg) {
  validate(model);
  validate(cfg);
  if (!strategy) throw validation_error("simulate_paths: strategy must be set");
  if (!(start.x > 0.0)) throw validation_error("simulate_paths: start wealth must be positive");
  if (!(horizon_T > start.t)) throw validation_error("simulate_paths: need t < T");
  if (model.cir && !feller_check(model).ok)
    throw validation_error("simulate_paths: CIR parameters violate the Feller condition");

  std::FILE* dump = nullptr;
  if (cfg.dump_paths) {
    dump = std::fopen(cfg.dump_file.c_str(), "w");
    if (!dump) throw validation_error("simulate_paths: cannot open dump file " + cfg.dump_file);
    std::fprintf(dump, "path_id,step,t,X,Z\n");
  }

  SimResult res;
  res.terminal_wealth.assign(static_cast<std::size_t>(cfg.n_paths), 0.0);
  res.terminal_factor.assign(static_cast<std::size_t>(cfg.n_paths), 0.0);
  std::vector<ArmDiag> da, db;
  int threads = dump ? 1 : cfg.threads;
  parallel_paths(cfg.n_paths, threads, da, db, [&](long i, ArmDiag& diag_a, ArmDiag&) {
    std::uint64_t draw = cfg.antithetic ? static_cast<std::uint64_t>(i / 2)
                                        : static_cast<std::uint64_t>(i);
    double sign = (cfg.antithetic && (i % 2 == 1)) ? -1.0 : 1.0;
    TwoArmOut out = run_path<false>(model, strategy, model, strategy, start, horizon_T, cfg,
                                    i, draw, sign, diag_a, diag_a, dump);
    res.terminal_wealth[static_cast<std::size_t>(i)] = out.x_a;
    res.terminal_factor[static_cast<std::size_t>(i)] = out.z_a;
  });
  if (dump) std::fclose(dump);
  res.diag = merge_diag(da);
  return res;
}

PairedResult simulate_paired(const MarketModel& model_a, const StrategyFn& strategy_a,
                             const MarketModel& model_b, const StrategyFn& strategy_b,
                             StartPoint start, double horizon_T, const PathConfig& cfg) {
  validate(model_a);
  validate(model_b);
  validate(cfg);
  if (!strategy_a || !strategy_b)
    throw validation_error("simulate_paired: both strategies must be set");
  if (!(start.x > 0.0)) throw validation_error("simulate_paired: start wealth must be positive");
  if (!(horizon_T > start.t)) throw validation_error("simulate_paired: need t < T");
  if (!cfg.common_random_numbers)
    throw validation_error("simulate_paired: common random numbers are required for pairing");

  PairedResult res;
  res.paths.assign(static_cast<std::size_t>(cfg.n_paths), PairedPath{});
  std::vector<ArmDiag> da, db;
  parallel_paths(cfg.n_paths, cfg.threads, da, db,
                 [&](long i, ArmDiag& diag_a, ArmDiag& diag_b) {
                   std::uint64_t draw = cfg.antithetic ? static_cast<std::uint64_t>(i / 2)
                                                       : static_cast<std::uint64_t>(i);
                   double sign = (cfg.antithetic && (i % 2 == 1)) ? -1.0 : 1.0;
                   TwoArmOut out =
                       run_path<true>(model_a, strategy_a, model_b, strategy_b, start,
                                      horizon_T, cfg, i, draw, sign, diag_a, diag_b, nullptr);
                   res.paths[static_cast<std::size_t>(i)] = {out.x_a, out.x_b, out.w_T};
                 });
  res.diag_a = merge_diag(da);
  res.diag_b = merge_diag(db);
  return res;
}

}  // namespace slowvol
