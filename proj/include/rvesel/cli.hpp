#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

#include "rvesel/report.hpp"

namespace rvesel {

// Exit codes: 0 ok, 1 check failure, 2 config error, 3 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeFailure = 3;

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// The oracle suite behind `verify`: closed forms, the enumeration battery,
/// and the exactly-solvable PDE cases. Deterministic, CI-diffable output.
inline std::vector<CheckResult> run_verification() {
  std::vector<CheckResult> checks;
  const auto add = [&](const std::string& name, bool pass, const std::string& detail) {
    checks.push_back({name, pass, detail});
  };

  {
    bool ok = (laminate_effective_first_order(1.0, 1.0) - Eigen::Matrix2d::Identity()).norm() <
              1e-14;
    const Eigen::Matrix2d a = laminate_effective_first_order(1.0, 0.25);
    ok = ok && std::abs(a(0, 0) - 0.625) < 1e-14 && std::abs(a(1, 1) - 0.4) < 1e-14;
    double worst = 0.0;
    for (int i = 1; i <= 12; ++i)
      for (int j = 1; j <= 12; ++j) {
        const double v1 = 0.25 * i, v2 = 0.25 * j;
        const Eigen::Matrix2d m = laminate_effective_first_order(v1, v2);
        worst = std::max(worst, std::abs(m(0, 0) * m(1, 1) - v1 * v2) / (v1 * v2));
      }
    ok = ok && worst < 1e-12;
    add("laminate first-order closed form", ok, "duality max rel err " + svg::num(worst));
  }
  {
    double worst = 0.0;
    for (double lambda = 0.05; lambda <= 1.0; lambda += 0.05) {
      const Eigen::Matrix2d m = laminate_effective_second_order(lambda, mu_star(lambda));
      worst = std::max(worst, std::abs(m(0, 0) - m(1, 1)) / m(0, 0));
    }
    add("laminate second-order isotropy at mu_star", worst <= 1e-12,
        "max rel anisotropy " + svg::num(worst));
  }
  {
    bool ok = true;
    for (double lambda = 0.02; lambda <= 0.9; lambda += 0.02) {
      const auto [lo, hi] = sigma_window(lambda);
      ok = ok && lo < hi;
    }
    add("sigma window nonempty for lambda in (0, 0.9]", ok, "");
  }
  {
    DiscreteRV one;
    one.values = {{0.0, 1.0}};
    one.probs = {{0.5, 0.5}};
    one.f = {0.0, 1.0};
    one.g = {0.0, 1.0};
    const CovBounds b1 = cov_bounds_bruteforce(one);
    DiscreteRV two;
    two.values = {{0.0, 1.0}, {0.0, 1.0}};
    two.probs = {{0.5, 0.5}, {0.5, 0.5}};
    two.f = {0.0, 1.0, 1.0, 2.0};
    two.g = two.f;
    const CovBounds b2 = cov_bounds_bruteforce(two);
    DiscreteRV flat = one;
    flat.f = {1.0, 1.0};
    const CovBounds b3 = cov_bounds_bruteforce(flat);
    const bool ok = std::abs(b1.cov - 0.25) < 1e-14 && std::abs(b1.lower - 0.125) < 1e-14 &&
                    std::abs(b1.upper - 0.25) < 1e-14 && std::abs(b2.cov - 0.5) < 1e-14 &&
                    std::abs(b2.lower - 0.25) < 1e-14 && std::abs(b2.upper - 0.5) < 1e-14 &&
                    b3.cov == 0.0 && b3.lower == 0.0 && b1.holds && b2.holds && b3.holds;
    add("covariance bounds worked examples", ok, "");
  }
  {
    CounterRng rng({987654321, 0}, 0);
    int held = 0;
    const int total = 1000;
    for (int k = 0; k < total; ++k)
      if (cov_bounds_bruteforce(random_monotone_table(rng)).holds) ++held;
    add("covariance bounds randomized battery", held == total,
        std::to_string(held) + "/" + std::to_string(total) + " tables hold");
  }
  {
    double worst = 0.0;
    for (auto [cells, m] : {std::pair{4, 1}, {4, 8}, {8, 3}}) {
      const ScalarField field = generate_layered({Axis::X, 1.0, 0.5}, {cells, m}, {0, 0});
      CellSolver solver(field.geometry);
      const CorrectorSolution cx = solver.corrector(field, Axis::X, {1e-12, 40});
      const CorrectorSolution cy = solver.corrector(field, Axis::Y, {1e-12, 40});
      const Eigen::Matrix2d a = cell_formula(field, cx, cy);
      worst = std::max({worst, std::abs(a(0, 0) - 2.0 / 3.0), std::abs(a(1, 1) - 0.75),
                        std::abs(a(0, 1))});
    }
    add("layered media solved exactly", worst <= 1e-9, "max abs err " + svg::num(worst));
  }
  {
    const ScalarField field = generate_layered({Axis::X, 1.0, 0.5}, {4, 4}, {0, 0});
    CellSolver solver(field.geometry);
    const CorrectorSolution sol = solver.corrector(field, Axis::X, {1e-11, 40});
    const EdgeCoefficients ec = edge_coefficients(field);
    double worst = 0.0;
    for (std::size_t k = 0; k < ec.x.size(); ++k)
      worst = std::max(worst, std::abs(ec.x[k] * (1.0 + sol.grad.x[k]) - 2.0 / 3.0));
    add("explicit layered corrector flux", worst <= 1e-8,
        "max flux deviation " + svg::num(worst));
  }
  {
    const GridGeometry geom{4, 8};
    const int n = geom.pixels_per_side();
    ScalarField field(geom);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        field.at(i, j) = 1.0 + 0.3 * std::cos(2.0 * M_PI * (i + 0.5) / n);
    CellSolver solver(geom);
    const AuxSolution sol = solver.aux_poisson(field, Axis::X);
    const EdgeCoefficients ec = edge_coefficients(field);
    double mean_ax = 0.0;
    for (double v : ec.x) mean_ax += v;
    mean_ax /= static_cast<double>(ec.x.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < ec.x.size(); ++k)
      worst = std::max(worst, std::abs(sol.grad.x[k] + (ec.x[k] - mean_ax)));
    add("single-mode auxiliary solve identity", worst <= 1e-10,
        "max abs err " + svg::num(worst));
  }
  {
    const double lambda = 0.25, tau = 0.25;
    const double mu = mu_star(lambda);
    const int m = 64;
    const GridGeometry geom{2, m};
    const auto tile = render_micro_tile(m, lambda, mu, tau);
    ScalarField field(geom);
    for (int ty = 0; ty < 2; ++ty)
      for (int tx = 0; tx < 2; ++tx)
        for (int py = 0; py < m; ++py)
          for (int px = 0; px < m; ++px)
            field.at(tx * m + px, ty * m + py) = tile[static_cast<std::size_t>(py) * m + px];
    CellSolver solver(geom);
    const CorrectorSolution cx = solver.corrector(field, Axis::X, {1e-11, 40});
    const CorrectorSolution cy = solver.corrector(field, Axis::Y, {1e-11, 40});
    const Eigen::Matrix2d a = cell_formula(field, cx, cy);
    const Eigen::Matrix2d closed = laminate_effective_second_order(lambda, mu);
    const double rel = std::max(std::abs(a(0, 0) - closed(0, 0)) / closed(0, 0),
                                std::abs(a(1, 1) - closed(1, 1)) / closed(1, 1));
    add("second-order laminate tile vs PDE", rel <= 0.02,
        "max rel err " + svg::num(rel) + " (tol 0.02)");
  }
  return checks;
}

inline int cmd_verify(std::ostream& out) {
  const auto checks = run_verification();
  bool all = true;
  out << "oracle verification\n-------------------\n";
  for (const auto& c : checks) {
    all = all && c.pass;
    out << (c.pass ? "[ ok ] " : "[FAIL] ") << c.name;
    if (!c.detail.empty()) out << " -- " << c.detail;
    out << '\n';
  }
  out << (all ? "all checks passed\n" : "CHECK FAILURES PRESENT\n");
  return all ? kExitOk : kExitCheckFailure;
}

namespace detail {

inline std::vector<double> a11_column(std::span<const RveSample> samples) {
  std::vector<double> xs;
  for (const RveSample& s : samples)
    if (s.a_rve) xs.push_back((*s.a_rve)(0, 0));
  return xs;
}

inline std::vector<double> favg_column(std::span<const RveSample> samples) {
  std::vector<double> xs;
  for (const RveSample& s : samples)
    if (s.a_rve)
      if (const auto v = component_of(s.F, FLabel::Avg)) xs.push_back(*v);
  return xs;
}

}  // namespace detail

/// run <config>: calibrate, run the plain and selected ensembles, compare,
/// and write the result bundle (samples.csv, summary.json, plots/).
inline int cmd_run(const RunConfig& cfg, std::ostream& log) {
  const std::filesystem::path out_dir(cfg.output.dir);
  std::filesystem::create_directories(out_dir);

  nlohmann::ordered_json summary;
  summary["config"] = plan_to_json(cfg.plan);

  std::optional<SelectionSpec> spec;
  if (cfg.plan.selection) {
    spec = calibrate(cfg.plan);
    summary["calibration"] = selection_to_json(*spec);
  }

  const RunResult plain = run_plain(cfg.plan);
  log << "plain ensemble: " << plain.stats.n_samples << " samples, Var a11 "
      << plain.stats.var_a(0, 0) << ", rho2 " << plain.stats.rho2(0, 0) << "\n";

  std::optional<RunResult> selected;
  std::optional<CompareReport> rep;
  if (spec) {
    selected = run_selected(cfg.plan, *spec);
    log << "selected ensemble: " << selected->stats.n_samples << " accepted of "
        << selected->stats.n_candidates << " candidates (rate "
        << selected->stats.acceptance_rate << ")\n";
    rep = compare(plain.stats, selected->stats, spec->delta);
    log << "vrf(1,1) = " << rep->vrf(0, 0) << " +- " << rep->vrf_se(0, 0)
        << " vs bound " << rep->predicted_bound(0, 0) << "\n";
  }

  summary["plain"] = stats_to_json(plain.stats);
  if (selected) summary["selected"] = stats_to_json(selected->stats);
  if (rep) summary["compare"] = compare_to_json(*rep);

  if (cfg.diagnostics.gaussianity) {
    try {
      summary["diagnostics"]["gaussianity_plain"] = gaussianity_to_json(
          gaussianity_diagnostics(plain.samples));
    } catch (const std::invalid_argument& err) {
      summary["diagnostics"]["gaussianity_plain"] = std::string("skipped: ") + err.what();
    }
  }
  if (!cfg.diagnostics.tail_s.empty() && selected && spec) {
    try {
      summary["diagnostics"]["tails"] =
          tail_to_json(tail_comparison(plain.samples, selected->samples, cfg.diagnostics.tail_s,
                                       spec->delta, plain.stats.rho2(0, 0)));
    } catch (const std::invalid_argument& err) {
      summary["diagnostics"]["tails"] = std::string("skipped: ") + err.what();
    }
  }

  if (cfg.output.csv)
    write_samples_csv(out_dir / "samples.csv", plain.samples,
                      selected ? std::span<const RveSample>(selected->samples)
                               : std::span<const RveSample>());
  write_json_file(out_dir / "summary.json", summary);

  if (cfg.output.plots) {
    std::filesystem::create_directories(out_dir / "plots");
    const std::vector<double> a_plain = detail::a11_column(plain.samples);
    if (selected) {
      const std::vector<double> a_sel = detail::a11_column(selected->samples);
      svg::write_histogram((out_dir / "plots" / "hist_a11.svg").string(), a_plain, a_sel,
                           "plain", "selected", "a_rve(1,1), plain vs selected");
    }
    const std::vector<double> f_plain = detail::favg_column(plain.samples);
    if (!f_plain.empty() && spec) {
      Eigen::Index avg_pos = 0;
      for (std::size_t k = 0; k < spec->labels.size(); ++k)
        if (spec->labels[k] == FLabel::Avg) avg_pos = static_cast<Eigen::Index>(k);
      const double mean = spec->calib_mean[avg_pos];
      const double sd = std::sqrt(spec->calib_cov(avg_pos, avg_pos));
      svg::write_scatter((out_dir / "plots" / "scatter_favg_a11.svg").string(), f_plain,
                         a_plain, mean - spec->delta * sd, mean + spec->delta * sd, "F_avg",
                         "a_rve(1,1)", "joint law with acceptance band");
    }
  }

  log << "bundle written to " << out_dir.string() << "\n";
  if (cfg.assert_checks && rep && !rep->pass) return kExitCheckFailure;
  return kExitOk;
}

/// scaling <config>: log-log variance decay across box sizes.
inline int cmd_scaling(const RunConfig& cfg, std::ostream& log) {
  const std::filesystem::path out_dir(cfg.output.dir);
  std::filesystem::create_directories(out_dir);
  const ScalingResult res = variance_scaling_study(
      cfg.plan.generator, cfg.scaling.pixels_per_cell, cfg.scaling.cells_list,
      cfg.scaling.n_per_size, cfg.plan.master_seed, cfg.plan.workers, cfg.scaling.quantity,
      cfg.plan.solve);

  nlohmann::ordered_json j;
  j["config"] = plan_to_json(cfg.plan);
  j["quantity"] = cfg.scaling.quantity == ScalingQuantity::EffectiveA11 ? "a11" : "f_avg";
  auto points = nlohmann::ordered_json::array();
  for (const auto& p : res.points)
    points.push_back({{"L", p.cells}, {"variance", estimate_to_json(p.variance)}});
  j["points"] = points;
  j["degenerate"] = res.degenerate;
  if (!res.degenerate) j["slope"] = res.slope;
  write_json_file(out_dir / "scaling.json", j);

  if (res.degenerate) {
    log << "variance is degenerate (zero); no slope\n";
    return cfg.assert_checks ? kExitCheckFailure : kExitOk;
  }
  log << "log-log slope of Var vs L: " << res.slope << "\n";
  if (cfg.output.plots) {
    std::filesystem::create_directories(out_dir / "plots");
    std::vector<double> sizes, variances;
    for (const auto& p : res.points) {
      sizes.push_back(p.cells);
      variances.push_back(p.variance.value);
    }
    svg::write_loglog((out_dir / "plots" / "variance_scaling.svg").string(), sizes, variances,
                      res.slope, "variance decay");
  }
  const bool in_window = res.slope >= -2.4 && res.slope <= -1.6;
  log << (in_window ? "slope within [-2.4, -1.6]\n" : "slope OUTSIDE [-2.4, -1.6]\n");
  if (cfg.assert_checks && !in_window) return kExitCheckFailure;
  return kExitOk;
}

/// counterexample <config>: endpoint probes, bisection to the vanishing
/// covariance, fresh-seed confirmation, and the vrf check at kappa*.
inline int cmd_counterexample(const RunConfig& cfg, std::ostream& log) {
  if (!std::holds_alternative<CounterexampleSpec>(cfg.plan.generator.variant))
    throw ConfigError("counterexample: the config must use the counterexample generator");
  const std::filesystem::path out_dir(cfg.output.dir);
  std::filesystem::create_directories(out_dir);

  const KappaSearchResult search =
      find_zero_covariance_kappa(cfg.plan, cfg.search.tol_cov, cfg.search.n_per_probe);
  log << "bisection: kappa* = " << search.kappa_star << " (cov at endpoints "
      << search.at_zero.cov.value << " / " << search.at_one.cov.value << ")\n";

  const ScalarCovProbe confirm =
      probe_trace_covariance(cfg.plan, search.kappa_star, cfg.search.n_confirm,
                             kConfirmIndexBase);
  log << "confirmation (" << confirm.n << " fresh samples): rho = " << confirm.rho.value
      << " +- " << confirm.rho.se << "\n";

  // Selection at kappa*: does conditioning on F_avg still reduce anything?
  ExperimentPlan vrf_plan = cfg.plan;
  auto ce = std::get<CounterexampleSpec>(vrf_plan.generator.variant);
  ce.kappa = search.kappa_star;
  vrf_plan.generator.variant = ce;
  vrf_plan.generator.analytic_mean_f_avg.reset();
  vrf_plan.n_plain = cfg.search.n_vrf;
  vrf_plan.n_selected = cfg.search.n_vrf;
  if (!vrf_plan.selection) vrf_plan.selection = SelectionPlan{{FLabel::Avg}, 0.5};
  const SelectionSpec spec = calibrate(vrf_plan);
  const RunResult plain = run_plain(vrf_plan);
  RunResult selected = run_selected(vrf_plan, spec);
  const CompareReport rep = compare(plain.stats, selected.stats, spec.delta);
  log << "vrf(1,1) at kappa*: " << rep.vrf(0, 0) << " +- " << rep.vrf_se(0, 0) << "\n";

  nlohmann::ordered_json j;
  j["config"] = plan_to_json(cfg.plan);
  j["kappa_star"] = search.kappa_star;
  j["met_tolerance"] = search.met_tolerance;
  j["probe_kappa0"] = probe_to_json(search.at_zero);
  j["probe_kappa1"] = probe_to_json(search.at_one);
  auto trace = nlohmann::ordered_json::array();
  for (const auto& p : search.probes) trace.push_back(probe_to_json(p));
  j["bisection_trace"] = trace;
  j["confirmation"] = probe_to_json(confirm);
  j["vrf_at_kappa_star"] = compare_to_json(rep);
  j["selected_stats"] = stats_to_json(selected.stats);
  j["plain_stats"] = stats_to_json(plain.stats);
  write_json_file(out_dir / "counterexample.json", j);

  bool ok = true;
  const auto check = [&](const char* name, bool pass) {
    log << (pass ? "[ ok ] " : "[FAIL] ") << name << "\n";
    ok = ok && pass;
  };
  check("cov at kappa=0 positive, CI excludes 0",
        search.at_zero.cov.value > 0 && search.at_zero.cov.ci_excludes_zero());
  check("cov at kappa=1 negative, CI excludes 0",
        search.at_one.cov.value < 0 && search.at_one.cov.ci_excludes_zero());
  check("|rho| <= 0.1 at confirmation", std::abs(confirm.rho.value) <= 0.1);
  check("vrf(1,1) within [0.85, 1.15]",
        rep.vrf(0, 0) >= 0.85 && rep.vrf(0, 0) <= 1.15);
  check("Var F_avg and Var a_rve nondegenerate at kappa*",
        confirm.var_favg.ci_excludes_zero() && confirm.var_a11.ci_excludes_zero());
  if (cfg.assert_checks && !ok) return kExitCheckFailure;
  return kExitOk;
}

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
};

inline RunConfig load_config(const std::string& path, const CliOverrides& overrides) {
  RunConfig cfg = parse_config_file(path);
  if (overrides.seed) cfg.plan.master_seed = *overrides.seed;
  if (overrides.workers)
    cfg.plan.workers = *overrides.workers;
  else if (const char* env = std::getenv("RVE_SELECT_WORKERS"))
    cfg.plan.workers = std::max(1, std::atoi(env));
  if (overrides.out) cfg.output.dir = *overrides.out;
  return cfg;
}

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"stochastic-homogenization workbench: RVE selection experiments"};
  app.require_subcommand(1);

  CliOverrides overrides;
  std::string config_path;

  std::optional<std::uint64_t> seed_opt;
  std::optional<int> workers_opt;
  std::optional<std::string> out_opt;
  app.add_option("--seed", seed_opt, "override the master seed");
  app.add_option("--workers", workers_opt,
                 "worker threads (fallback: RVE_SELECT_WORKERS, then the config)");
  app.add_option("--out", out_opt, "output directory (overrides the config)");

  auto* run = app.add_subcommand("run", "calibrate, sample, select, compare; write the bundle");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  auto* verify = app.add_subcommand("verify", "run the oracle suite");
  auto* scaling = app.add_subcommand("scaling", "variance decay across box sizes L");
  scaling->add_option("config", config_path, "experiment config (JSON)")->required();
  auto* counter = app.add_subcommand("counterexample",
                                     "search the vanishing-covariance interpolation weight");
  counter->add_option("config", config_path, "experiment config (JSON)")->required();
  for (auto* sub : {run, verify, scaling, counter}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  overrides.seed = seed_opt;
  overrides.workers = workers_opt;
  overrides.out = out_opt;

  try {
    if (verify->parsed()) return cmd_verify(std::cout);
    const RunConfig cfg = load_config(config_path, overrides);
    if (run->parsed()) return cmd_run(cfg, std::cout);
    if (scaling->parsed()) return cmd_scaling(cfg, std::cout);
    if (counter->parsed()) return cmd_counterexample(cfg, std::cout);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntimeFailure;
  }
  return kExitConfigError;
}

}  // namespace rvesel
