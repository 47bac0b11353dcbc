#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "rvesel/experiment.hpp"

namespace rvesel {

/// Effective tensor of horizontal stripes with values v1/v2 in equal
/// proportions: arithmetic mean along the layers, harmonic mean across.
inline Eigen::Matrix2d laminate_effective_first_order(double v1, double v2) {
  if (v1 <= 0.0 || v2 <= 0.0)
    throw std::invalid_argument("laminate_effective_first_order: values must be positive");
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a(0, 0) = 0.5 * (v1 + v2);
  a(1, 1) = 2.0 * v1 * v2 / (v1 + v2);
  return a;
}

/// Effective tensor of the two-scale laminate: vertical stripes alternating
/// mu with the horizontal 1/lambda sub-laminate (fine-scale limit).
inline Eigen::Matrix2d laminate_effective_second_order(double lambda, double mu) {
  if (lambda <= 0.0 || mu <= 0.0)
    throw std::invalid_argument("laminate_effective_second_order: inputs must be positive");
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a(0, 0) = 2.0 * mu * (1.0 + lambda) / (2.0 * mu + 1.0 + lambda);
  a(1, 1) = lambda / (1.0 + lambda) + 0.5 * mu;
  return a;
}

/// Finite product-space random vector with tabulated monotone functions f, g.
/// Variable v takes values[v][d] with probability probs[v][d]; tables are
/// mixed-radix with variable 0 fastest.
struct DiscreteRV {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> probs;
  std::vector<double> f, g;

  std::size_t table_size() const {
    std::size_t t = 1;
    for (const auto& v : values) t *= v.size();
    return t;
  }

  void validate() const {
    if (values.empty()) throw std::invalid_argument("DiscreteRV: need at least one variable");
    if (values.size() != probs.size())
      throw std::invalid_argument("DiscreteRV: values/probs shape mismatch");
    for (std::size_t v = 0; v < values.size(); ++v) {
      if (values[v].empty() || values[v].size() != probs[v].size())
        throw std::invalid_argument("DiscreteRV: variable " + std::to_string(v) +
                                    " has inconsistent tables");
      if (!std::is_sorted(values[v].begin(), values[v].end()))
        throw std::invalid_argument("DiscreteRV: values must be sorted ascending");
      double total = 0.0;
      for (double p : probs[v]) {
        if (p < 0.0) throw std::invalid_argument("DiscreteRV: negative probability");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("DiscreteRV: probabilities of variable " +
                                    std::to_string(v) + " do not sum to 1");
    }
    const std::size_t t = table_size();
    if (t > 1'000'000)
      throw std::invalid_argument("DiscreteRV: product space too large for enumeration");
    if (f.size() != t || g.size() != t)
      throw std::invalid_argument("DiscreteRV: f/g table size mismatch");
  }
};

struct CovBounds {
  double cov = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool holds = false;
};

namespace detail {

// Direction of a table in one variable: +1 nondecreasing, -1 nonincreasing,
// 0 constant; throws when some slice is not monotone or slices disagree.
inline int monotone_direction(const DiscreteRV& rv, const std::vector<double>& table,
                              std::size_t var, const char* name) {
  const std::size_t t = rv.table_size();
  std::size_t stride = 1;
  for (std::size_t v = 0; v < var; ++v) stride *= rv.values[v].size();
  const std::size_t width = rv.values[var].size();
  bool saw_up = false, saw_down = false;
  for (std::size_t base = 0; base < t; ++base) {
    const std::size_t digit = (base / stride) % width;
    if (digit + 1 == width) continue;
    const double lo = table[base];
    const double hi = table[base + stride];
    if (hi > lo) saw_up = true;
    if (hi < lo) saw_down = true;
  }
  if (saw_up && saw_down)
    throw std::invalid_argument(std::string("cov_bounds_bruteforce: ") + name +
                                " is not monotone in variable " + std::to_string(var));
  return saw_up ? 1 : (saw_down ? -1 : 0);
}

}  // namespace detail

/// Exhaustive check of the covariance bounds for monotone functions of
/// independent variables: (1/2) sum_n E[sqrt(h_n)]^2 <= Cov[f, g] <=
/// (1/2) sum_n E[H_n], with h_n = |df||dg| and H_n = (df^2 + dg^2)/2 under an
/// independent resample of coordinate n.
inline CovBounds cov_bounds_bruteforce(const DiscreteRV& rv) {
  rv.validate();
  const std::size_t t = rv.table_size();
  const std::size_t nvar = rv.values.size();

  for (std::size_t v = 0; v < nvar; ++v) {
    const int df = detail::monotone_direction(rv, rv.f, v, "f");
    const int dg = detail::monotone_direction(rv, rv.g, v, "g");
    if (df * dg < 0)
      throw std::invalid_argument(
          "cov_bounds_bruteforce: f and g are monotone in opposite directions in variable " +
          std::to_string(v));
  }

  std::vector<double> outcome_prob(t, 1.0);
  {
    std::size_t stride = 1;
    for (std::size_t v = 0; v < nvar; ++v) {
      const std::size_t width = rv.values[v].size();
      for (std::size_t k = 0; k < t; ++k)
        outcome_prob[k] *= rv.probs[v][(k / stride) % width];
      stride *= width;
    }
  }

  double ef = 0.0, eg = 0.0, efg = 0.0;
  for (std::size_t k = 0; k < t; ++k) {
    ef += outcome_prob[k] * rv.f[k];
    eg += outcome_prob[k] * rv.g[k];
    efg += outcome_prob[k] * rv.f[k] * rv.g[k];
  }

  CovBounds out;
  out.cov = efg - ef * eg;

  std::size_t stride = 1;
  for (std::size_t v = 0; v < nvar; ++v) {
    const std::size_t width = rv.values[v].size();
    double e_sqrt_h = 0.0;
    double e_H = 0.0;
    for (std::size_t k = 0; k < t; ++k) {
      const std::size_t digit = (k / stride) % width;
      const std::size_t base = k - digit * stride;
      for (std::size_t y = 0; y < width; ++y) {
        const double py = rv.probs[v][y];
        if (py == 0.0) continue;
        const std::size_t ky = base + y * stride;
        const double df = rv.f[k] - rv.f[ky];
        const double dg = rv.g[k] - rv.g[ky];
        const double w = outcome_prob[k] * py;
        e_sqrt_h += w * std::sqrt(std::abs(df) * std::abs(dg));
        e_H += w * 0.5 * (df * df + dg * dg);
      }
    }
    out.lower += 0.5 * e_sqrt_h * e_sqrt_h;
    out.upper += 0.5 * e_H;
    stride *= width;
  }

  out.holds = out.lower <= out.cov + 1e-12 && out.cov <= out.upper + 1e-12;
  return out;
}

/// Raw random table pushed to its coordinatewise-nondecreasing envelope by
/// running maxima along every axis.
inline std::vector<double> monotonize_table(std::vector<double> table,
                                            const std::vector<std::size_t>& widths) {
  std::size_t stride = 1;
  for (std::size_t v = 0; v < widths.size(); ++v) {
    const std::size_t width = widths[v];
    for (std::size_t k = 0; k < table.size(); ++k) {
      const std::size_t digit = (k / stride) % width;
      if (digit > 0 && table[k - stride] > table[k]) table[k] = table[k - stride];
    }
    stride *= width;
  }
  return table;
}

/// Random instance for the covariance-bound battery: up to 3 variables with
/// up to 3 values each, f and g independent monotone envelopes.
inline DiscreteRV random_monotone_table(CounterRng& rng) {
  DiscreteRV rv;
  const std::size_t nvar = 1 + rng.uniform_index(3);
  std::vector<std::size_t> widths;
  std::size_t total = 1;
  for (std::size_t v = 0; v < nvar; ++v) {
    const std::size_t width = 2 + rng.uniform_index(2);
    widths.push_back(width);
    total *= width;

    std::vector<double> vals;
    for (std::size_t d = 0; d < width; ++d) vals.push_back(rng.uniform(-1.0, 1.0));
    std::sort(vals.begin(), vals.end());
    rv.values.push_back(vals);

    std::vector<double> probs;
    double sum = 0.0;
    for (std::size_t d = 0; d < width; ++d) {
      probs.push_back(0.1 + rng.uniform());
      sum += probs.back();
    }
    double acc = 0.0;
    for (std::size_t d = 0; d + 1 < width; ++d) {
      probs[d] /= sum;
      acc += probs[d];
    }
    probs[width - 1] = 1.0 - acc;  // exact normalization
    rv.probs.push_back(probs);
  }

  for (auto* table : {&rv.f, &rv.g}) {
    table->resize(total);
    for (double& v : *table) v = rng.uniform(-2.0, 2.0);
    *table = monotonize_table(*table, widths);
  }
  return rv;
}

/// One Monte Carlo probe of the rotation-averaged covariance
/// Cov[a_11 + a_22, F_avg] for the interpolated microstructure field.
struct ScalarCovProbe {
  double kappa = 0.0;
  int n = 0;
  Estimate cov;       // Cov[tr a, F_avg]
  Estimate rho;       // correlation of tr a and F_avg
  Estimate var_trace;
  Estimate var_favg;
  Estimate var_a11;
};

inline ScalarCovProbe probe_trace_covariance(const ExperimentPlan& base, double kappa, int n,
                                             std::uint64_t index_base) {
  if (!std::holds_alternative<CounterexampleSpec>(base.generator.variant))
    throw std::invalid_argument("probe_trace_covariance: plan must use the counterexample field");
  ExperimentPlan plan = base;
  auto spec = std::get<CounterexampleSpec>(plan.generator.variant);
  spec.kappa = kappa;
  plan.generator.variant = spec;
  plan.generator.analytic_mean_f_avg.reset();

  std::vector<double> trace(static_cast<std::size_t>(n));
  std::vector<double> favg(static_cast<std::size_t>(n));
  std::vector<double> a11(static_cast<std::size_t>(n));
  detail::parallel_for_samples(n, plan.workers, plan.geometry, [&](CellSolver& solver,
                                                                   int item) {
    const SampleSeed seed{plan.master_seed, index_base + static_cast<std::uint64_t>(item)};
    const ScalarField field = generate(plan.generator, plan.geometry, seed);
    const EdgeCoefficients edges = edge_coefficients(field);
    const CorrectorSolution cx = solver.corrector(field, edges, Axis::X, plan.solve);
    const CorrectorSolution cy = solver.corrector(field, edges, Axis::Y, plan.solve);
    const Eigen::Matrix2d a = cell_formula(field, cx, cy);
    trace[static_cast<std::size_t>(item)] = a(0, 0) + a(1, 1);
    a11[static_cast<std::size_t>(item)] = a(0, 0);
    favg[static_cast<std::size_t>(item)] = f_avg(field);
  });

  ScalarCovProbe probe;
  probe.kappa = kappa;
  probe.n = n;
  probe.cov = jackknife(n, [&](int skip) { return covariance_excluding(trace, favg, skip); });
  probe.rho = jackknife(n, [&](int skip) {
    const double c = covariance_excluding(trace, favg, skip);
    const double vt = variance_excluding(trace, skip);
    const double vf = variance_excluding(favg, skip);
    return vt > 0.0 && vf > 0.0 ? c / std::sqrt(vt * vf) : 0.0;
  });
  probe.var_trace = jackknife(n, [&](int skip) { return variance_excluding(trace, skip); });
  probe.var_favg = jackknife(n, [&](int skip) { return variance_excluding(favg, skip); });
  probe.var_a11 = jackknife(n, [&](int skip) { return variance_excluding(a11, skip); });
  return probe;
}

struct KappaSearchResult {
  double kappa_star = 0.0;
  ScalarCovProbe at_star;
  ScalarCovProbe at_zero;
  ScalarCovProbe at_one;
  std::vector<ScalarCovProbe> probes;  // bisection trace
  bool met_tolerance = false;
};

/// Bisection in the interpolation weight kappa for the sign change of the
/// rotation-averaged covariance. All probes share one common-random-number
/// sample range; run an independent confirmation probe at kappa_star before
/// trusting the result.
inline KappaSearchResult find_zero_covariance_kappa(const ExperimentPlan& base, double tol_cov,
                                                    int n_per_probe, int max_probes = 12) {
  KappaSearchResult out;
  out.at_zero = probe_trace_covariance(base, 0.0, n_per_probe, kProbeIndexBase);
  out.at_one = probe_trace_covariance(base, 1.0, n_per_probe, kProbeIndexBase);

  const bool zero_positive = out.at_zero.cov.value > 0.0 && out.at_zero.cov.ci_excludes_zero();
  const bool one_negative = out.at_one.cov.value < 0.0 && out.at_one.cov.ci_excludes_zero();
  if (!zero_positive || !one_negative) {
    std::ostringstream msg;
    msg << "find_zero_covariance_kappa: endpoint covariances do not bracket zero "
        << "(kappa=0: " << out.at_zero.cov.value << " +- " << out.at_zero.cov.ci_halfwidth()
        << ", kappa=1: " << out.at_one.cov.value << " +- " << out.at_one.cov.ci_halfwidth()
        << "); adjust sigma or lambda of the microstructure";
    throw std::runtime_error(msg.str());
  }

  double lo = 0.0, hi = 1.0;
  ScalarCovProbe best;
  bool have_best = false;
  for (int it = 0; it < max_probes; ++it) {
    const double mid = 0.5 * (lo + hi);
    const ScalarCovProbe probe =
        probe_trace_covariance(base, mid, n_per_probe, kProbeIndexBase);
    out.probes.push_back(probe);
    if (!have_best || std::abs(probe.cov.value) < std::abs(best.cov.value)) {
      best = probe;
      have_best = true;
    }
    if (std::abs(probe.cov.value) <= tol_cov + probe.cov.ci_halfwidth()) {
      out.kappa_star = mid;
      out.at_star = probe;
      out.met_tolerance = true;
      return out;
    }
    if (probe.cov.value > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  out.kappa_star = best.kappa;
  out.at_star = best;
  out.met_tolerance = false;
  return out;
}

struct IsotropyReport {
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();     // Cov[a_ij, F_avg]
  Eigen::Matrix2d cov_se = Eigen::Matrix2d::Zero();
  Estimate diag_difference;                          // cov_11 - cov_22
  bool offdiag_ok = false;
  bool diag_ok = false;
};

/// With orientation randomization the covariance of a_rve with the field
/// average must be a multiple of the identity: off-diagonal entries and the
/// diagonal difference are checked against 3 standard errors.
inline IsotropyReport isotropy_check(std::span<const RveSample> samples) {
  std::array<std::vector<double>, 4> a;
  std::vector<double> favg;
  for (const RveSample& s : samples) {
    if (!s.a_rve) continue;
    std::size_t avg_pos = s.F.labels.size();
    for (std::size_t k = 0; k < s.F.labels.size(); ++k)
      if (s.F.labels[k] == FLabel::Avg) avg_pos = k;
    if (avg_pos == s.F.labels.size())
      throw std::invalid_argument("isotropy_check: samples carry no F_avg component");
    favg.push_back(s.F.components[static_cast<Eigen::Index>(avg_pos)]);
    for (int e = 0; e < 4; ++e)
      a[static_cast<std::size_t>(e)].push_back((*s.a_rve)(e / 2, e % 2));
  }
  const int n = static_cast<int>(favg.size());
  if (n < 1000) throw std::invalid_argument("isotropy_check: need at least 1000 solved samples");

  IsotropyReport rep;
  for (int e = 0; e < 4; ++e) {
    const Estimate est = jackknife(n, [&](int skip) {
      return covariance_excluding(a[static_cast<std::size_t>(e)], favg, skip);
    });
    rep.cov(e / 2, e % 2) = est.value;
    rep.cov_se(e / 2, e % 2) = est.se;
  }
  rep.diag_difference = jackknife(n, [&](int skip) {
    return covariance_excluding(a[0], favg, skip) - covariance_excluding(a[3], favg, skip);
  });
  rep.offdiag_ok = std::abs(rep.cov(0, 1)) <= 3.0 * rep.cov_se(0, 1) &&
                   std::abs(rep.cov(1, 0)) <= 3.0 * rep.cov_se(1, 0);
  rep.diag_ok = std::abs(rep.diag_difference.value) <= 3.0 * rep.diag_difference.se;
  return rep;
}

}  // namespace rvesel
