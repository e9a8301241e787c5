// Command-line front end: parses a flat key/value config, dispatches one
// study per process, and writes <study>.csv plus <study>.summary.json.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slowvol/common.hpp"
#include "slowvol/dynamics.hpp"
#include "slowvol/expansion.hpp"
#include "slowvol/io.hpp"
#include "slowvol/merton.hpp"
#include "slowvol/montecarlo.hpp"
#include "slowvol/riccati.hpp"
#include "slowvol/strategy.hpp"
#include "slowvol/utility.hpp"

using nlohmann::json;
using namespace slowvol;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  bool threads_set = false;
};

std::string out_path(const CommonOpts& o, const std::string& stem, const char* suffix) {
  std::filesystem::create_directories(o.out_dir);
  return (std::filesystem::path(o.out_dir) / (stem + suffix)).string();
}

void write_json(const std::string& path, const json& j) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw validation_error("cannot open output file: " + path);
  std::string text = j.dump(2);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
}

// JSON-safe double: non-finite values become null explicitly.
json jnum(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

UtilitySpec utility_from_config(const Config& c) {
  std::string cls = c.get_string("utility.class");
  UtilitySpec spec;
  if (cls == "power") {
    spec = PowerUtility{c.get_double("utility.gamma")};
  } else if (cls == "mixture_powers") {
    MixturePowers m;
    m.weight = c.get_double_list("utility.weights");
    m.exponent = c.get_double_list("utility.exponents");
    spec = m;
  } else if (cls == "power_measure") {
    PowerMeasure m;
    m.atom_y = c.get_double_list("utility.atoms");
    m.weight = c.get_double_list("utility.weights");
    spec = m;
  } else if (cls == "inverse_marginal_measure") {
    InverseMarginalMeasure m;
    m.atom_s = c.get_double_list("utility.exponents");
    m.weight = c.get_double_list("utility.weights");
    m.support_bound = c.get_double("utility.support_bound", 50.0);
    spec = m;
  } else {
    throw validation_error(
        "utility.class: expected power | mixture_powers | power_measure | "
        "inverse_marginal_measure, got '" + cls + "'");
  }
  validate(spec);
  return spec;
}

MarketModel model_from_config(const Config& c) {
  std::string kind = c.get_string("model.kind", "cir");
  MarketModel model;
  if (kind == "cir") {
    CIRParams p;
    p.mu = c.get_double("model.mu");
    p.m = c.get_double("model.m");
    p.beta = c.get_double("model.beta");
    model = cir_model(p, c.get_double("model.rho", 0.0), c.get_double("model.delta", 1.0));
  } else if (kind == "constant") {
    // Constant asset coefficients with an inert factor; the factor level is
    // carried along but does not move.
    double mu0 = c.get_double("model.mu");
    double sigma0 = c.get_double("model.sigma");
    if (!(sigma0 > 0.0)) throw validation_error("model.sigma: must be > 0");
    model.mu_fn = [mu0](double) { return mu0; };
    model.sigma_fn = [sigma0](double) { return sigma0; };
    model.c_fn = [](double) { return 0.0; };
    model.g_fn = [](double) { return 0.0; };
    model.rho = c.get_double("model.rho", 0.0);
    model.delta = c.get_double("model.delta", 1.0);
  } else {
    throw validation_error("model.kind: expected cir | constant, got '" + kind + "'");
  }
  validate(model);
  return model;
}

StartPoint start_from_config(const Config& c) {
  StartPoint s;
  s.t = c.get_double("start.t", 0.0);
  s.x = c.get_double("start.x", 1.0);
  s.z = c.get_double("start.z", 1.0);
  return s;
}

PathConfig pathconfig_from_config(const Config& c, double t0, double T, const CommonOpts& o) {
  PathConfig cfg;
  cfg.n_paths = c.get_long("mc.paths", 200000);
  if (c.has("mc.steps")) {
    cfg.n_steps = static_cast<int>(c.get_long("mc.steps"));
  } else {
    long per_unit = c.get_long("mc.steps_per_unit", 256);
    cfg.n_steps = static_cast<int>(std::max(1.0, std::ceil(per_unit * (T - t0))));
  }
  cfg.seed = o.seed_set ? o.seed : static_cast<std::uint64_t>(c.get_long("mc.seed", 1));
  std::string scheme = c.get_string("mc.scheme", "euler");
  if (scheme == "euler") {
    cfg.scheme = Scheme::EulerFullTruncation;
  } else if (scheme == "milstein") {
    cfg.scheme = Scheme::Milstein;
  } else {
    throw validation_error("mc.scheme: expected euler | milstein, got '" + scheme + "'");
  }
  cfg.antithetic = c.get_bool("mc.antithetic", true);
  cfg.common_random_numbers = c.get_bool("mc.crn", true);
  cfg.threads = o.threads_set ? o.threads : static_cast<int>(c.get_long("mc.threads", 1));
  validate(cfg);
  return cfg;
}

HRep rep_from_string(const std::string& s) {
  if (s == "auto") return HRep::Auto;
  if (s == "closed_form") return HRep::ClosedForm;
  if (s == "quadrature") return HRep::Quadrature;
  throw validation_error("merton.rep: expected auto | closed_form | quadrature, got '" + s +
                         "'");
}

int cmd_merton(const Config& c, const CommonOpts& o) {
  UtilitySpec utility = utility_from_config(c);
  SharpeContext ctx;
  ctx.lambda = c.get_double("sharpe.lambda");
  ctx.sigma = c.get_double("sharpe.sigma", 1.0);
  ctx.horizon_T = c.get_double("horizon.T", 1.0);
  ctx.t = 0.0;
  MertonSolution sol =
      make_merton_solution(utility, ctx, rep_from_string(c.get_string("merton.rep", "auto")),
                           static_cast<int>(c.get_long("merton.n_gh", 128)));

  std::vector<double> t_grid = c.get_double_list("grid.t");
  std::vector<double> x_grid = c.get_double_list("grid.x");
  std::string stem = c.get_string("study.name", "merton");

  CsvWriter csv(out_path(o, stem, ".csv"));
  csv.header({"t", "x", "M", "M_x", "M_xx", "R", "pi_star"});
  for (double t : t_grid) {
    for (double x : x_grid) {
      double m = merton_value(sol, x, t);
      double mx = merton_value_dx(sol, x, t);
      double mxx = merton_value_dxx(sol, x, t);
      double r = risk_tolerance(sol, x, t);
      double pi = merton_strategy(sol, x, t);
      csv.row(std::vector<double>{t, x, m, mx, mxx, r, pi});
    }
  }

  // Residual stencils in t need room on both sides of each grid point.
  double h_t = 1e-4 * std::max(1.0, ctx.horizon_T);
  std::vector<double> t_interior;
  for (double t : t_grid)
    if (t > 2.0 * h_t && t < ctx.horizon_T - 2.0 * h_t) t_interior.push_back(t);

  json residuals = nullptr;
  if (!t_interior.empty()) {
    OperatorResidualReport rep = operator_residuals(sol, t_interior, x_grid);
    residuals = json{{"max_pde_residual", jnum(rep.max_pde_residual)},
                     {"max_vega_gamma_residual", jnum(rep.max_vega_gamma_residual)},
                     {"max_r_lambda_residual", jnum(rep.max_r_lambda_residual)},
                     {"n_points", rep.n_points}};
  }
  json summary = {{"command", "merton"},
                  {"utility_class", class_name(utility)},
                  {"lambda", jnum(ctx.lambda)},
                  {"sigma", jnum(ctx.sigma)},
                  {"horizon_T", jnum(ctx.horizon_T)},
                  {"n_rows", t_grid.size() * x_grid.size()},
                  {"residuals", residuals}};
  write_json(out_path(o, stem, ".summary.json"), summary);
  return 0;
}

int cmd_expand(const Config& c, const CommonOpts& o) {
  UtilitySpec utility = utility_from_config(c);
  MarketModel model = model_from_config(c);
  double T = c.get_double("horizon.T", 1.0);
  double delta = c.get_double("study.delta", model.delta);
  if (!(delta >= 0.0 && delta <= 1.0))
    throw validation_error("study.delta: must lie in [0, 1]");

  std::vector<double> t_grid = c.get_double_list("grid.t");
  std::vector<double> x_grid = c.get_double_list("grid.x");
  std::vector<double> z_grid =
      c.has("grid.z") ? c.get_double_list("grid.z")
                      : std::vector<double>{c.get_double("start.z", 1.0)};
  std::string stem = c.get_string("study.name", "expand");

  CsvWriter csv(out_path(o, stem, ".csv"));
  csv.header({"t", "x", "z", "v0", "v1", "pi0", "v0_plus_sqrtdelta_v1"});
  double sq = std::sqrt(delta);
  for (double z : z_grid) {
    SlowFactorFrozen frozen = freeze(model, z, T);
    for (double t : t_grid) {
      for (double x : x_grid) {
        double v0 = v0_eval(frozen, utility, t, x);
        double v1 = v1_eval(frozen, utility, t, x);
        double pi0 = pi0_eval(frozen, utility, t, x);
        csv.row(std::vector<double>{t, x, z, v0, v1, pi0, v0 + sq * v1});
      }
    }
  }

  json summary = {{"command", "expand"},
                  {"utility_class", class_name(utility)},
                  {"delta", jnum(delta)},
                  {"horizon_T", jnum(T)},
                  {"n_rows", t_grid.size() * x_grid.size() * z_grid.size()}};
  write_json(out_path(o, stem, ".summary.json"), summary);
  return 0;
}

int cmd_converge(const Config& c, const CommonOpts& o) {
  UtilitySpec utility = utility_from_config(c);
  MarketModel model = model_from_config(c);
  StartPoint start = start_from_config(c);
  double T = c.get_double("horizon.T", 1.0);
  PathConfig cfg = pathconfig_from_config(c, start.t, T, o);
  std::vector<double> deltas = c.get_double_list("study.deltas");

  std::string comp_name = c.get_string("study.comparator", "v0_plus_sqrtdelta_v1");
  Comparator comp;
  if (comp_name == "v0_plus_sqrtdelta_v1") {
    comp = Comparator::V0PlusSqrtDeltaV1;
  } else if (comp_name == "v0_only") {
    comp = Comparator::V0Only;
  } else {
    throw validation_error(
        "study.comparator: expected v0_plus_sqrtdelta_v1 | v0_only, got '" + comp_name + "'");
  }

  ConvergenceStudy study = convergence_study(model, utility, start, T, deltas, cfg, comp);

  std::string stem = c.get_string("study.name", "converge");
  CsvWriter csv(out_path(o, stem, ".csv"));
  csv.header({"delta", "estimate", "stderr", "comparator", "error", "scaled_difference"});
  for (const ConvergenceRow& row : study.rows) {
    double scaled = (row.estimate - row.comparator) / std::sqrt(row.delta);
    csv.row(std::vector<double>{row.delta, row.estimate, row.stderr_est, row.comparator,
                                row.error, scaled});
  }

  double rate_target = c.get_double("study.rate_target", 1.0);
  double rate_tol = c.get_double("study.rate_tol", 0.3);
  bool rate_pass = std::abs(study.fitted_rate - rate_target) <= rate_tol;

  json summary = {{"command", "converge"},
                  {"comparator", comp_name},
                  {"fitted_rate", jnum(study.fitted_rate)},
                  {"rate_se", jnum(study.rate_se)},
                  {"rate_ci", {jnum(study.rate_ci_lo), jnum(study.rate_ci_hi)}},
                  {"rate_target", jnum(rate_target)},
                  {"rate_tol", jnum(rate_tol)},
                  {"rate_pass", rate_pass},
                  {"budget_ok", study.budget_ok},
                  {"inconclusive", study.inconclusive},
                  {"degrade_delta", jnum(study.degrade_delta)},
                  {"error_affine_fit", {{"a", jnum(study.affine_a)}, {"b", jnum(study.affine_b)}}},
                  {"n_paths", cfg.n_paths},
                  {"n_steps", cfg.n_steps},
                  {"seed", cfg.seed}};
  write_json(out_path(o, stem, ".summary.json"), summary);

  if (study.inconclusive || !study.budget_ok || !rate_pass) return 3;
  return 0;
}

const char* formula_name(ApproxFormula f) {
  switch (f) {
    case ApproxFormula::V0PlusSqrtDeltaV1: return "v0_plus_sqrtdelta_v1";
    case ApproxFormula::V0PlusSqrtDeltaVtilde1: return "v0_plus_sqrtdelta_vtilde1";
    case ApproxFormula::V0PlusDelta2AlphaVtilde2Alpha: return "v0_plus_delta2alpha_vtilde2alpha";
    case ApproxFormula::Vtilde0: return "vtilde0";
    case ApproxFormula::Indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

int cmd_optimality(const Config& c, const CommonOpts& o) {
  UtilitySpec utility = utility_from_config(c);
  MarketModel model = model_from_config(c);
  StartPoint start = start_from_config(c);
  double T = c.get_double("horizon.T", 1.0);
  PathConfig cfg = pathconfig_from_config(c, start.t, T, o);
  std::vector<double> deltas = c.get_double_list("study.deltas");

  StrategyFn reference = merton_reference_strategy(model, utility, T);
  StrategyFamily family;
  family.alpha = c.get_double("family.alpha", 0.5);
  std::string kind = c.get_string("family.kind");
  if (kind == "identical") {
    double kappa = c.get_double("family.kappa", 1.0);
    family.pi0_base = reference;
    family.identical_to_pi0 = true;
    if (kappa == 0.0) {
      family.pi1_is_zero = true;
    } else {
      family.pi1_perturb = [reference, kappa](double t, double x, double z) {
        return kappa * reference(t, x, z);
      };
      family.pi1_kappa_of_pi0 = kappa;
    }
  } else if (kind == "zero_perturbation") {
    family.pi0_base = reference;
    family.identical_to_pi0 = true;
    family.pi1_is_zero = true;
  } else if (kind == "scaled_base") {
    double scale = c.get_double("family.scale");
    family.pi0_base = [reference, scale](double t, double x, double z) {
      return scale * reference(t, x, z);
    };
    family.pi0_scale = scale;
    family.pi1_is_zero = true;
  } else {
    throw validation_error(
        "family.kind: expected identical | zero_perturbation | scaled_base, got '" + kind +
        "'");
  }
  validate(family);

  OptimalityReport rep = optimality_compare(model, utility, family, start, T, deltas, cfg);
  SlowFactorFrozen frozen = freeze(model, start.z, T);
  ApproxDescriptor approx = approximation_select(frozen, utility, family, start.t, start.x);

  std::string stem = c.get_string("study.name", "optimality");
  CsvWriter csv(out_path(o, stem, ".csv"));
  csv.header({"delta", "estimate", "stderr", "comparator", "error", "scaled_difference"});
  for (const OptimalityRow& row : rep.per_delta_table) {
    double sq = std::sqrt(row.delta);
    double gap = row.scaled_diff * sq;  // unscaled paired difference
    csv.row(std::vector<double>{row.delta, gap, row.stderr_est * sq, 0.0, std::abs(gap),
                                row.scaled_diff});
  }

  json summary = {{"command", "optimality"},
                  {"case_tag", rep.case_tag},
                  {"indeterminate", rep.indeterminate},
                  {"ell_hat", jnum(rep.ell_hat)},
                  {"ell_stderr", jnum(rep.ell_stderr)},
                  {"ell_richardson", jnum(rep.ell_richardson)},
                  {"exponent_fit", jnum(rep.exponent_fit)},
                  {"exponent_ci", {jnum(rep.exponent_ci_lo), jnum(rep.exponent_ci_hi)}},
                  {"gap_smallest_delta", jnum(rep.gap_smallest_delta)},
                  {"gap_stderr", jnum(rep.gap_stderr)},
                  {"approximation",
                   {{"formula", formula_name(approx.formula)},
                    {"accuracy_exponent", jnum(approx.accuracy_exponent)},
                    {"region", approx.region},
                    {"case_tag", approx.case_tag},
                    {"sampled_region", approx.sampled_region}}},
                  {"n_paths", cfg.n_paths},
                  {"n_steps", cfg.n_steps},
                  {"seed", cfg.seed}};
  if (rep.case_tag == "(iv)") {
    summary["frozen_gap"] = jnum(rep.frozen_gap);
    summary["frozen_gap_stderr"] = jnum(rep.frozen_gap_stderr);
  }
  if (rep.case_tag == "(iii)") {
    summary["note"] =
        "scaled differences grow as delta shrinks; the exponent fit reports the "
        "divergence trend, ell_hat is the smallest-delta value and not a limit";
  }
  write_json(out_path(o, stem, ".summary.json"), summary);

  return rep.indeterminate ? 3 : 0;
}

int cmd_riccati(const Config& c, const CommonOpts& o) {
  std::string variant = c.get_string("riccati.variant", "g_moment");
  RiccatiSpec spec;
  if (variant == "g_moment") {
    GMomentSpec g;
    g.delta = c.get_double("riccati.delta");
    g.beta = c.get_double("riccati.beta");
    g.m = c.get_double("riccati.m");
    g.w = c.get_double("riccati.w");
    spec = g;
  } else if (variant == "wealth_second_moment") {
    WealthSecondMomentSpec w;
    w.delta = c.get_double("riccati.delta");
    w.beta = c.get_double("riccati.beta");
    w.m = c.get_double("riccati.m");
    w.mu = c.get_double("riccati.mu");
    w.gamma = c.get_double("riccati.gamma");
    w.rho = c.get_double("riccati.rho");
    spec = w;
  } else {
    throw validation_error(
        "riccati.variant: expected g_moment | wealth_second_moment, got '" + variant + "'");
  }
  validate(spec);

  double tau_max = c.get_double("riccati.tau_max", 10.0);
  double step = c.get_double("riccati.step", 0.0);
  long n_out = c.get_long("riccati.n_out", 201);
  if (n_out < 2) throw validation_error("riccati.n_out: need at least 2 output points");

  RiccatiSolution sol = riccati_integrate(spec, tau_max, step);
  double tau_hi = sol.tau.back();
  const GMomentSpec* g = std::get_if<GMomentSpec>(&spec);
  double tau_star_closed =
      g ? tau_star_closed_form(*g) : std::numeric_limits<double>::infinity();

  std::string stem = c.get_string("study.name", "riccati");
  CsvWriter csv(out_path(o, stem, ".csv"));
  csv.header({"tau", "A_closed", "A_numeric", "B"});
  double max_rel_diff = 0.0;
  for (long i = 0; i < n_out; ++i) {
    double tau = tau_hi * static_cast<double>(i) / static_cast<double>(n_out - 1);
    double a_num = sol.a_at(tau);
    double a_cl = std::numeric_limits<double>::quiet_NaN();
    if (g && tau < tau_star_closed) {
      a_cl = a_closed_form(*g, tau);
      max_rel_diff =
          std::max(max_rel_diff, std::abs(a_num - a_cl) / std::max(1.0, std::abs(a_cl)));
    }
    csv.row(std::vector<double>{tau, a_cl, a_num, sol.b_at(tau)});
  }

  json summary = {{"command", "riccati"},
                  {"variant", variant},
                  {"tau_star_closed", jnum(tau_star_closed)},
                  {"tau_star_numeric", sol.truncated ? jnum(sol.tau_star) : json(nullptr)},
                  {"truncated", sol.truncated},
                  {"tau_range", {0.0, jnum(tau_hi)}},
                  {"max_rel_diff_closed_vs_numeric", g ? jnum(max_rel_diff) : json(nullptr)}};
  write_json(out_path(o, stem, ".summary.json"), summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asymptotic-optimal portfolio studies under a slowly varying factor"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::vector<CLI::Option*> seed_opts, thread_opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "study config file")->required();
    sub->add_option("--out", opts.out_dir, "output directory (default .)");
    seed_opts.push_back(sub->add_option("--seed", opts.seed, "override mc.seed"));
    thread_opts.push_back(sub->add_option("--threads", opts.threads, "override mc.threads"));
  };
  CLI::App* sub_merton = app.add_subcommand("merton", "value/strategy table over a (t,x) grid");
  CLI::App* sub_expand = app.add_subcommand("expand", "correction terms over a (t,x,z) grid");
  CLI::App* sub_converge = app.add_subcommand("converge", "rate study against the expansion");
  CLI::App* sub_optimality =
      app.add_subcommand("optimality", "paired comparison of a perturbed strategy family");
  CLI::App* sub_riccati = app.add_subcommand("riccati", "moment ODE curves and explosion time");
  for (CLI::App* sub :
       {sub_merton, sub_expand, sub_converge, sub_optimality, sub_riccati})
    add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  for (CLI::Option* opt : seed_opts) opts.seed_set |= opt->count() > 0;
  for (CLI::Option* opt : thread_opts) opts.threads_set |= opt->count() > 0;

  try {
    Config cfg = Config::parse_file(opts.config_path);
    if (app.got_subcommand(sub_merton)) return cmd_merton(cfg, opts);
    if (app.got_subcommand(sub_expand)) return cmd_expand(cfg, opts);
    if (app.got_subcommand(sub_converge)) return cmd_converge(cfg, opts);
    if (app.got_subcommand(sub_optimality)) return cmd_optimality(cfg, opts);
    if (app.got_subcommand(sub_riccati)) return cmd_riccati(cfg, opts);
  } catch (const validation_error& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 2;
  } catch (const inconclusive_error& e) {
    std::fprintf(stderr, "inconclusive: %s\n", e.what());
    return 3;
  } catch (const numerical_error& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 2;  // no subcommand matched (require_subcommand should prevent this)
}
