#include <catch2/catch_amalgamated.hpp>

#include "rvesel/experiment.hpp"
#include "rvesel/oracles.hpp"

using namespace rvesel;

namespace {

ExperimentPlan checkerboard_plan(double value_lo, int cells, int m, int n_plain,
                                 int n_selected, double delta = 0.5) {
  ExperimentPlan plan;
  plan.generator = {CheckerboardSpec{value_lo, 1.0, 0.5}, {}};
  plan.geometry = {cells, m};
  plan.selection = SelectionPlan{{FLabel::Avg}, delta};
  plan.n_calibration = 500;
  plan.n_plain = n_plain;
  plan.n_selected = n_selected;
  plan.master_seed = 555;
  return plan;
}

std::vector<RveSample> synthetic_gaussian_samples(int n, double rho, std::uint64_t seed,
                                                  bool conditioned = false,
                                                  double delta = 0.0) {
  // Bivariate Gaussian test double: F standard normal, a = rho F + noise.
  std::vector<RveSample> out;
  CounterRng rng({seed, 0}, 0);
  std::uint64_t index = 0;
  while (out.size() < static_cast<std::size_t>(n)) {
    const double F = rng.normal();
    const double a = rho * F + std::sqrt(1.0 - rho * rho) * rng.normal();
    if (conditioned && std::abs(F) > delta) continue;
    RveSample s;
    s.seed = {seed, index++};
    s.F.labels = {FLabel::Avg};
    s.F.components = Eigen::VectorXd::Constant(1, F);
    s.accepted = true;
    Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
    m(0, 0) = a;
    s.a_rve = m;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("calibrate: checkerboard mean and variance match the tile law") {
  ExperimentPlan plan = checkerboard_plan(0.5, 8, 1, 10, 10);
  plan.n_calibration = 2000;
  const SelectionSpec spec = calibrate(plan);
  REQUIRE(spec.labels == std::vector<FLabel>{FLabel::Avg});

  // Var F_avg = tile variance / L^2 = 0.0625 / 64.
  const double true_var = 0.0625 / 64.0;
  const double var_se = true_var * std::sqrt(2.0 / (plan.n_calibration - 1.0));
  CHECK(std::abs(spec.calib_mean[0] - 0.75) <
        4.0 * std::sqrt(true_var / plan.n_calibration));
  CHECK(std::abs(spec.calib_cov(0, 0) - true_var) < 4.0 * var_se);
}

TEST_CASE("calibrate: analytic mean overrides the empirical one") {
  ExperimentPlan plan = checkerboard_plan(0.5, 4, 1, 10, 10);
  plan.generator.analytic_mean_f_avg = 0.75;
  const SelectionSpec spec = calibrate(plan);
  CHECK(spec.calib_mean[0] == 0.75);
}

TEST_CASE("calibrate: constant generator fails as singular, naming the component") {
  ExperimentPlan plan = checkerboard_plan(0.5, 4, 1, 10, 10);
  plan.generator = {CheckerboardSpec{0.5, 1.0, 1.0}, {}};
  plan.n_calibration = 50;
  try {
    calibrate(plan);
    FAIL("expected singular calibration failure");
  } catch (const std::runtime_error& err) {
    CHECK(std::string(err.what()).find("avg") != std::string::npos);
  }
}

TEST_CASE("calibrate: identical output across runs and worker counts") {
  ExperimentPlan plan = checkerboard_plan(0.2, 6, 2, 10, 10);
  plan.n_calibration = 300;
  const SelectionSpec a = calibrate(plan);
  plan.workers = 3;
  const SelectionSpec b = calibrate(plan);
  REQUIRE(a.calib_mean == b.calib_mean);
  REQUIRE(a.calib_cov == b.calib_cov);
}

TEST_CASE("run_plain: constant generator gives zero variance and c Id mean") {
  ExperimentPlan plan = checkerboard_plan(0.5, 4, 2, 30, 30);
  plan.generator = {CheckerboardSpec{0.5, 0.7, 1.0}, {}};
  plan.selection.reset();
  const RunResult res = run_plain(plan);
  CHECK(res.stats.var_a(0, 0) == 0.0);
  CHECK(res.stats.mean_a(0, 0) == Catch::Approx(0.7).margin(1e-12));
  CHECK(res.stats.mean_a(1, 1) == Catch::Approx(0.7).margin(1e-12));
  CHECK(std::abs(res.stats.mean_a(0, 1)) < 1e-12);
  CHECK(res.stats.rho2_defined(0, 0) == 0.0);
}

TEST_CASE("run_plain: variance CI excludes zero and mean is sensible") {
  ExperimentPlan plan = checkerboard_plan(0.5, 8, 1, 300, 300);
  plan.selection.reset();
  const RunResult res = run_plain(plan);
  CHECK(res.stats.n_samples == 300);
  CHECK(res.stats.var_a(0, 0) > 0.0);
  CHECK(res.stats.var_a(0, 0) > 1.96 * res.stats.var_a_se(0, 0));
  // Effective value sits between the harmonic and arithmetic tile means.
  CHECK(res.stats.mean_a(0, 0) > 2.0 / 3.0 - 0.05);
  CHECK(res.stats.mean_a(0, 0) < 0.75 + 0.05);
}

TEST_CASE("run_plain: doubling the samples roughly halves the squared CI") {
  ExperimentPlan plan = checkerboard_plan(0.5, 4, 2, 250, 250);
  plan.selection.reset();
  const RunResult small = run_plain(plan);
  plan.n_plain = 500;
  const RunResult large = run_plain(plan);
  const double ratio = (large.stats.var_a_se(0, 0) * large.stats.var_a_se(0, 0)) /
                       (small.stats.var_a_se(0, 0) * small.stats.var_a_se(0, 0));
  CHECK(ratio > 0.3);
  CHECK(ratio < 0.7);
}

TEST_CASE("run_plain: bitwise identical for 1 and 3 workers") {
  ExperimentPlan plan = checkerboard_plan(0.2, 4, 2, 60, 60);
  plan.selection.reset();
  const RunResult one = run_plain(plan);
  plan.workers = 3;
  const RunResult three = run_plain(plan);
  REQUIRE(one.samples.size() == three.samples.size());
  for (std::size_t k = 0; k < one.samples.size(); ++k) {
    REQUIRE((*one.samples[k].a_rve)(0, 0) == (*three.samples[k].a_rve)(0, 0));
    REQUIRE((*one.samples[k].a_rve)(1, 1) == (*three.samples[k].a_rve)(1, 1));
    REQUIRE(one.samples[k].F.components == three.samples[k].F.components);
  }
}

TEST_CASE("run_selected: a vacuous criterion on the shared range reproduces run_plain") {
  ExperimentPlan plan = checkerboard_plan(0.5, 4, 2, 40, 40, 1e6);
  plan.shared_sample_range = true;
  const SelectionSpec spec = calibrate(plan);
  const RunResult plain = run_plain(plan);
  const RunResult sel = run_selected(plan, spec);
  REQUIRE(sel.samples.size() == 40);
  for (std::size_t k = 0; k < sel.samples.size(); ++k) {
    REQUIRE(sel.samples[k].seed == plain.samples[k].seed);
    REQUIRE(sel.samples[k].accepted);
    REQUIRE((*sel.samples[k].a_rve)(0, 0) == (*plain.samples[k].a_rve)(0, 0));
    REQUIRE((*sel.samples[k].a_rve)(0, 1) == (*plain.samples[k].a_rve)(0, 1));
    REQUIRE((*sel.samples[k].a_rve)(1, 1) == (*plain.samples[k].a_rve)(1, 1));
  }
  CHECK(sel.stats.acceptance_rate == 1.0);
}

TEST_CASE("run_selected: solves exactly n_selected samples (budget accounting)") {
  ExperimentPlan plan = checkerboard_plan(0.5, 8, 1, 50, 50, 0.5);
  const SelectionSpec spec = calibrate(plan);
  const RunResult sel = run_selected(plan, spec);
  int solved = 0, accepted = 0;
  for (const RveSample& s : sel.samples) {
    solved += s.a_rve.has_value();
    accepted += s.accepted;
    REQUIRE(s.a_rve.has_value() == s.accepted);
  }
  CHECK(solved == 50);
  CHECK(accepted == 50);
  CHECK(sel.samples.back().accepted);  // the list ends at the last needed candidate
  CHECK(sel.stats.acceptance_rate > 0.2);
  CHECK(sel.stats.acceptance_rate < 0.7);
}

TEST_CASE("run_selected: acceptance rate tracks the Gaussian prediction") {
  // Fine tile lattice so the discrete F_avg law is close to Gaussian.
  ExperimentPlan plan = checkerboard_plan(0.5, 64, 1, 10, 10, 0.5);
  plan.n_calibration = 3000;
  const SelectionSpec spec = calibrate(plan);
  const std::vector<double> deltas{0.5};
  const auto points = acceptance_probability_study(plan, spec, deltas, 4000);
  const double expected = gaussian_acceptance(0.5);
  CHECK(std::abs(points[0].rate.value - expected) < 4.0 * points[0].rate.se + 0.012);
}

TEST_CASE("compare: perfectly explaining statistic drives the vrf to zero") {
  const double delta = 0.05;
  const auto plain = synthetic_gaussian_samples(3000, 1.0, 10);
  const auto sel = synthetic_gaussian_samples(3000, 1.0, 11, true, delta);
  const GridGeometry geom{8, 1};
  EnsembleStats ps = compute_stats(plain, {FLabel::Avg}, geom, 1.0, 3000);
  EnsembleStats ss = compute_stats(sel, {FLabel::Avg}, geom, 0.05, 60000);
  CHECK(ps.rho2(0, 0) == Catch::Approx(1.0).margin(1e-9));
  const CompareReport rep = compare(ps, ss, delta);
  CHECK(rep.vrf(0, 0) < 0.02);
  CHECK(rep.vrf_within_bound(0, 0) == 1.0);
  CHECK(ss.vrf.has_value());
}

TEST_CASE("compare: uncorrelated statistic leaves the variance unchanged") {
  const double delta = 0.5;
  const auto plain = synthetic_gaussian_samples(4000, 0.0, 20);
  const auto sel = synthetic_gaussian_samples(4000, 0.0, 21, true, delta);
  const GridGeometry geom{8, 1};
  EnsembleStats ps = compute_stats(plain, {FLabel::Avg}, geom, 1.0, 4000);
  EnsembleStats ss = compute_stats(sel, {FLabel::Avg}, geom, 0.38, 10000);
  const CompareReport rep = compare(ps, ss, delta);
  CHECK(rep.predicted_bound(0, 0) > 0.99);
  CHECK(rep.vrf(0, 0) > 0.85);
  CHECK(rep.vrf(0, 0) < 1.15);
  CHECK(rep.mean_shift_within_3se(0, 0) == 1.0);
}

TEST_CASE("monotone-field positive association: plain checkerboard has positive Cov[a11, F_avg]") {
  ExperimentPlan plan = checkerboard_plan(0.2, 4, 2, 300, 300);
  const RunResult res = run_plain(plan);
  const double cov = res.stats.cov_aF[0][0];
  const double se = res.stats.cov_aF_se[0][0];
  CHECK(cov > 0.0);
  CHECK(cov > 1.96 * se);
  CHECK(res.stats.rho2(0, 0) > 0.0);
}

TEST_CASE("variance scaling: iid averages decay like L^-2, constants are degenerate") {
  const GeneratorSpec gen{CheckerboardSpec{0.5, 1.0, 0.5}, {}};
  const ScalingResult res =
      variance_scaling_study(gen, 1, {4, 8, 16}, 400, 2027, 1, ScalingQuantity::FAvg);
  REQUIRE_FALSE(res.degenerate);
  CHECK(res.slope > -2.2);
  CHECK(res.slope < -1.8);

  const GeneratorSpec constant{CheckerboardSpec{0.5, 1.0, 1.0}, {}};
  const ScalingResult degen =
      variance_scaling_study(constant, 1, {4, 8, 16}, 50, 2027, 1, ScalingQuantity::FAvg);
  CHECK(degen.degenerate);

  CHECK_THROWS_AS(
      variance_scaling_study(gen, 1, {4, 8}, 50, 2027, 1, ScalingQuantity::FAvg),
      std::invalid_argument);
}

TEST_CASE("gaussianity diagnostics: synthetic Gaussians and degenerate inputs") {
  const auto samples = synthetic_gaussian_samples(2000, 0.5, 33);
  const GaussianityReport rep = gaussianity_diagnostics(samples);
  REQUIRE(rep.entries.size() == 2);
  for (const auto& e : rep.entries) {
    REQUIRE_FALSE(e.degenerate);
    CHECK(std::abs(e.skewness) <= 4.0 * std::sqrt(6.0 / 2000.0));
  }
  CHECK(rep.correlation(0, 1) == Catch::Approx(0.5).margin(0.06));

  auto degenerate = samples;
  for (auto& s : degenerate) (*s.a_rve)(0, 0) = 1.0;
  const GaussianityReport rep2 = gaussianity_diagnostics(degenerate);
  CHECK(rep2.entries[0].degenerate);

  CHECK_THROWS_AS(gaussianity_diagnostics(std::vector<RveSample>(10)), std::invalid_argument);
}

TEST_CASE("gaussianity diagnostics: skewness of a11 shrinks with the box size") {
  std::vector<double> abs_skew;
  for (int cells : {4, 8, 16}) {
    ExperimentPlan plan = checkerboard_plan(0.2, cells, 2, 300, 300);
    plan.selection.reset();
    const RunResult res = run_plain(plan);
    const GaussianityReport rep = gaussianity_diagnostics(res.samples);
    abs_skew.push_back(std::abs(rep.entries[0].skewness));
  }
  int inversions = 0;
  for (std::size_t k = 1; k < abs_skew.size(); ++k)
    if (abs_skew[k] > abs_skew[k - 1]) ++inversions;
  CHECK(inversions <= 1);
}

TEST_CASE("tail comparison: degenerate threshold and the Gaussian test double") {
  const double delta = 0.5, rho = 0.8;
  const auto plain = synthetic_gaussian_samples(20000, rho, 44);
  const auto sel = synthetic_gaussian_samples(20000, rho, 45, true, delta);
  const GridGeometry geom{8, 1};
  EnsembleStats ps = compute_stats(plain, {FLabel::Avg}, geom, 1.0, 20000);
  const double rho2 = ps.rho2(0, 0);
  const std::vector<double> s_list{0.0, 1.0, 2.0};
  const TailReport rep = tail_comparison(plain, sel, s_list, delta, rho2);

  CHECK(rep.points[0].p_plain.value == 1.0);
  CHECK(rep.points[0].p_selected.value == 1.0);

  // Quadrature oracle for the exact Gaussian-model tail of the conditioned
  // ensemble: a | F averages the residual Gaussian over the accepted band.
  const auto conditioned_tail = [&](double threshold) {
    const int panels = 400;
    const double sd_res = std::sqrt(1.0 - rho * rho);
    double tail = 0.0, weight = 0.0;
    for (int k = 0; k <= panels; ++k) {
      const double f = -delta + 2.0 * delta * k / panels;
      const double w = (k == 0 || k == panels) ? 0.5 : 1.0;
      const double phi = std::exp(-0.5 * f * f);
      const double p = (1.0 - normal_cdf((threshold - rho * f) / sd_res)) +
                       (1.0 - normal_cdf((threshold + rho * f) / sd_res));
      tail += w * phi * p;
      weight += w * phi;
    }
    return tail / weight;
  };
  for (std::size_t k = 1; k < rep.points.size(); ++k) {
    const TailPoint& p = rep.points[k];
    const double oracle = conditioned_tail(p.s * rep.sd_plain);
    CHECK(std::abs(p.p_selected.value - oracle) <= 3.0 * p.p_selected.se + 1e-3);
    CHECK(p.p_selected.value <= p.p_plain.value + 2.0 * p.p_plain.se);
    // The reduced-variance Gaussian reference is an upper envelope here.
    CHECK(p.p_selected.value <= p.gaussian_reduced + 3.0 * p.p_selected.se);
  }
  CHECK_THROWS_AS(tail_comparison(plain, std::vector<RveSample>(10), s_list, delta, rho2),
                  std::invalid_argument);
}

TEST_CASE("counterexample probes: plain board correlates positively, micro board negatively") {
  // Coarse, fast version of the endpoint probes (the acceptance suite runs
  // the full-resolution search).
  ExperimentPlan plan;
  CounterexampleSpec ce;
  plan.generator = {ce, {}};
  plan.geometry = {4, 16};
  plan.master_seed = 99;
  const ScalarCovProbe zero = probe_trace_covariance(plan, 0.0, 220, kProbeIndexBase);
  CHECK(zero.cov.value > 0.0);
  CHECK(zero.cov.ci_excludes_zero());
  const ScalarCovProbe one = probe_trace_covariance(plan, 1.0, 220, kProbeIndexBase);
  CHECK(one.cov.value < 0.0);
  CHECK(one.cov.ci_excludes_zero());
}

TEST_CASE("experiment plan validation") {
  ExperimentPlan plan = checkerboard_plan(0.5, 4, 2, 10, 10);
  plan.n_plain = 0;
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
  plan.n_plain = 10;
  plan.selection->delta = 0.0;
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
}
