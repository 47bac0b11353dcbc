#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "rvesel/estimators.hpp"
#include "rvesel/fieldgen.hpp"
#include "rvesel/stats.hpp"

namespace rvesel {

// Disjoint sample_index ranges keep the calibration, plain, selected, and
// search ensembles independent of each other.
inline constexpr std::uint64_t kCalibrationIndexBase = 0;
inline constexpr std::uint64_t kPlainIndexBase = std::uint64_t{1} << 40;
inline constexpr std::uint64_t kSelectedIndexBase = std::uint64_t{1} << 41;
inline constexpr std::uint64_t kProbeIndexBase = std::uint64_t{1} << 42;
inline constexpr std::uint64_t kConfirmIndexBase = std::uint64_t{1} << 43;

struct SelectionPlan {
  std::vector<FLabel> labels{FLabel::Avg};
  double delta = 0.5;
};

struct ExperimentPlan {
  GeneratorSpec generator;
  GridGeometry geometry;
  std::optional<SelectionPlan> selection = SelectionPlan{};
  int n_calibration = 2000;
  int n_plain = 400;
  int n_selected = 400;
  std::uint64_t master_seed = 0;
  int workers = 1;
  // When set, selected candidates reuse the plain index range; with a vacuous
  // criterion the two ensembles then coincide bitwise.
  bool shared_sample_range = false;
  SolveOptions solve;

  void validate() const {
    geometry.validate();
    if (n_calibration < 1 || n_plain < 1 || n_selected < 1)
      throw std::invalid_argument("ExperimentPlan: sample counts must be >= 1");
    if (workers < 1) throw std::invalid_argument("ExperimentPlan: workers must be >= 1");
    if (selection) {
      if (selection->delta <= 0.0)
        throw std::invalid_argument("ExperimentPlan: selection delta must be > 0");
      if (selection->labels.empty())
        throw std::invalid_argument("ExperimentPlan: selection needs at least one quantity");
      for (std::size_t a = 0; a < selection->labels.size(); ++a)
        for (std::size_t b = a + 1; b < selection->labels.size(); ++b)
          if (selection->labels[a] == selection->labels[b])
            throw std::invalid_argument("ExperimentPlan: duplicate selection quantity " +
                                        to_string(selection->labels[a]));
    }
  }

  std::vector<FLabel> labels() const {
    return selection ? selection->labels : std::vector<FLabel>{FLabel::Avg};
  }
};

struct RveSample {
  SampleSeed seed;
  FVector F;
  bool accepted = false;
  std::optional<Eigen::Matrix2d> a_rve;
  int solver_iters = 0;
};

namespace detail {

/// Column store with cached moment sums of deviations from the grand mean,
/// so that delete-1 jackknife replicates cost O(columns^2) instead of a full
/// pass. Centering first avoids the cancellation that would turn a constant
/// column into spurious 1e-17 variance.
struct MomentCache {
  std::vector<std::vector<double>> cols;
  Eigen::VectorXd grand_mean;
  Eigen::VectorXd dev_sum1;  // sums of deviations (zero up to roundoff)
  Eigen::MatrixXd dev_sum2;  // sums of deviation outer products
  int n = 0;

  void build() {
    const auto c = static_cast<Eigen::Index>(cols.size());
    n = cols.empty() ? 0 : static_cast<int>(cols[0].size());
    grand_mean = Eigen::VectorXd::Zero(c);
    for (Eigen::Index a = 0; a < c; ++a) {
      for (double v : cols[static_cast<std::size_t>(a)]) grand_mean[a] += v;
      grand_mean[a] /= static_cast<double>(n);
    }
    dev_sum1 = Eigen::VectorXd::Zero(c);
    dev_sum2 = Eigen::MatrixXd::Zero(c, c);
    for (int i = 0; i < n; ++i) {
      for (Eigen::Index a = 0; a < c; ++a) {
        const double da =
            cols[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] - grand_mean[a];
        dev_sum1[a] += da;
        for (Eigen::Index b = a; b < c; ++b)
          dev_sum2(a, b) += da * (cols[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)] -
                                  grand_mean[b]);
      }
    }
    for (Eigen::Index a = 0; a < c; ++a)
      for (Eigen::Index b = 0; b < a; ++b) dev_sum2(a, b) = dev_sum2(b, a);
  }

  Eigen::VectorXd deviation(int i) const {
    const auto c = static_cast<Eigen::Index>(cols.size());
    Eigen::VectorXd d(c);
    for (Eigen::Index a = 0; a < c; ++a)
      d[a] = cols[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] - grand_mean[a];
    return d;
  }

  Eigen::VectorXd mean_excluding(int skip) const {
    Eigen::VectorXd s = dev_sum1;
    int m = n;
    if (skip >= 0) {
      s -= deviation(skip);
      --m;
    }
    return grand_mean + s / static_cast<double>(m);
  }

  /// Unbiased covariance with one sample optionally removed.
  Eigen::MatrixXd cov_excluding(int skip) const {
    Eigen::VectorXd s1 = dev_sum1;
    Eigen::MatrixXd s2 = dev_sum2;
    int m = n;
    if (skip >= 0) {
      const Eigen::VectorXd d = deviation(skip);
      s1 -= d;
      s2 -= d * d.transpose();
      --m;
    }
    return (s2 - s1 * s1.transpose() / static_cast<double>(m)) / static_cast<double>(m - 1);
  }
};

/// Runs fn(workspace, item) for item in [0, total) on `workers` threads, one
/// CellSolver workspace per thread. Results must be written into
/// index-addressed slots by the caller; on error the exception belonging to
/// the smallest item index is rethrown.
template <typename Fn>
void parallel_for_samples(int total, int workers, const GridGeometry& geom, Fn&& fn) {
  if (total <= 0) return;
  workers = std::max(1, std::min(workers, total));
  if (workers == 1) {
    CellSolver solver(geom);
    for (int item = 0; item < total; ++item) fn(solver, item);
    return;
  }
  std::atomic<int> next{0};
  std::mutex error_mutex;
  int first_error_item = -1;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      CellSolver solver(geom);
      for (;;) {
        const int item = next.fetch_add(1);
        if (item >= total) return;
        try {
          fn(solver, item);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (first_error_item < 0 || item < first_error_item) {
            first_error_item = item;
            first_error = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

inline FVector statistics_of(const ScalarField& field, const EdgeCoefficients& edges,
                             const std::vector<FLabel>& labels, CellSolver& solver) {
  FVector F;
  F.labels = labels;
  F.components.resize(static_cast<Eigen::Index>(labels.size()));
  std::optional<Eigen::Matrix2d> two_point;
  if (needs_two_point(labels)) {
    const AuxSolution vx = solver.aux_poisson(edges, Axis::X);
    const AuxSolution vy = solver.aux_poisson(edges, Axis::Y);
    two_point = f_two_point(field, vx, vy);
  }
  for (std::size_t k = 0; k < labels.size(); ++k) {
    double v = 0.0;
    switch (labels[k]) {
      case FLabel::Avg: v = f_avg(field); break;
      case FLabel::TwoPoint11: v = (*two_point)(0, 0); break;
      case FLabel::TwoPoint12: v = (*two_point)(0, 1); break;
      case FLabel::TwoPoint21: v = (*two_point)(1, 0); break;
      case FLabel::TwoPoint22: v = (*two_point)(1, 1); break;
    }
    F.components[static_cast<Eigen::Index>(k)] = v;
  }
  return F;
}

/// Per-ensemble summary statistics. All confidence numbers are standard
/// errors; delete-1 jackknife for variance-derived quantities.
struct EnsembleStats {
  GridGeometry geometry;
  std::vector<FLabel> labels;
  int n_samples = 0;
  long long n_candidates = 0;
  double acceptance_rate = 1.0;

  Eigen::Matrix2d mean_a = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d mean_a_se = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d var_a = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d var_a_se = Eigen::Matrix2d::Zero();
  Eigen::VectorXd mean_F;
  Eigen::MatrixXd cov_F;
  std::array<Eigen::VectorXd, 4> cov_aF;     // entries in row-major order
  std::array<Eigen::VectorXd, 4> cov_aF_se;
  Eigen::Matrix2d rho2 = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d rho2_se = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d rho2_defined = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d kappa = Eigen::Matrix2d::Zero();   // cond of Var(a_ij, F)
  Eigen::Matrix2d r_var = Eigen::Matrix2d::Zero();   // L^-d / Var a_ij
  std::optional<Eigen::Matrix2d> vrf;                // filled by compare()
  std::optional<Eigen::Matrix2d> vrf_se;

  // Raw columns kept for downstream jackknives (not serialized).
  std::array<std::vector<double>, 4> a_cols;
  std::vector<std::vector<double>> f_cols;
};

inline EnsembleStats compute_stats(std::span<const RveSample> samples,
                                   const std::vector<FLabel>& labels, const GridGeometry& geom,
                                   double acceptance_rate, long long n_candidates) {
  EnsembleStats st;
  st.geometry = geom;
  st.labels = labels;
  st.acceptance_rate = acceptance_rate;
  st.n_candidates = n_candidates;

  const auto nf = static_cast<Eigen::Index>(labels.size());
  detail::MomentCache cache;
  cache.cols.resize(4 + labels.size());
  for (const RveSample& s : samples) {
    if (!s.a_rve) continue;
    const Eigen::Matrix2d& a = *s.a_rve;
    cache.cols[0].push_back(a(0, 0));
    cache.cols[1].push_back(a(0, 1));
    cache.cols[2].push_back(a(1, 0));
    cache.cols[3].push_back(a(1, 1));
    for (Eigen::Index k = 0; k < nf; ++k)
      cache.cols[4 + static_cast<std::size_t>(k)].push_back(s.F.components[k]);
  }
  cache.build();
  st.n_samples = cache.n;
  if (cache.n < 2) throw std::invalid_argument("compute_stats: need at least 2 solved samples");

  const Eigen::VectorXd mean = cache.mean_excluding(-1);
  const Eigen::MatrixXd cov = cache.cov_excluding(-1);
  st.mean_F = mean.segment(4, nf);
  st.cov_F = cov.block(4, 4, nf, nf);

  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(cache.n));
  for (int e = 0; e < 4; ++e) {
    const int r = e / 2, c = e % 2;
    st.mean_a(r, c) = mean[e];
    st.var_a(r, c) = cov(e, e);
    st.mean_a_se(r, c) = std::sqrt(std::max(cov(e, e), 0.0)) * inv_sqrt_n;
    st.cov_aF[static_cast<std::size_t>(e)] = cov.block(e, 4, 1, nf).transpose();
    st.r_var(r, c) = cov(e, e) > 0.0
                         ? std::pow(static_cast<double>(geom.cells), -2.0) / cov(e, e)
                         : std::numeric_limits<double>::infinity();

    const Estimate var_est = jackknife(cache.n, [&](int skip) {
      return cache.cov_excluding(skip)(e, e);
    });
    st.var_a_se(r, c) = var_est.se;

    st.cov_aF_se[static_cast<std::size_t>(e)] = Eigen::VectorXd::Zero(nf);
    for (Eigen::Index k = 0; k < nf; ++k) {
      const Estimate cov_est = jackknife(cache.n, [&](int skip) {
        return cache.cov_excluding(skip)(e, 4 + k);
      });
      st.cov_aF_se[static_cast<std::size_t>(e)][k] = cov_est.se;
    }

    // kappa_ij: condition number of Var((a_ij, F)).
    Eigen::MatrixXd joint(1 + nf, 1 + nf);
    joint(0, 0) = cov(e, e);
    joint.block(0, 1, 1, nf) = cov.block(e, 4, 1, nf);
    joint.block(1, 0, nf, 1) = cov.block(4, e, nf, 1);
    joint.block(1, 1, nf, nf) = st.cov_F;
    st.kappa(r, c) = condition_number_spd(joint);

    const bool defined = cov(e, e) > 0.0 && condition_number_spd(st.cov_F) <= 1e12;
    st.rho2_defined(r, c) = defined ? 1.0 : 0.0;
    if (defined) {
      const auto rho2_from = [&](const Eigen::MatrixXd& full) {
        return rho_squared(full.block(e, 4, 1, nf).transpose(), full.block(4, 4, nf, nf),
                           full(e, e));
      };
      const double rho2_full = rho2_from(cov);
      st.rho2(r, c) = rho2_full;
      const Estimate rho2_est = jackknife(cache.n, [&](int skip) {
        if (skip < 0) return rho2_full;
        try {
          return rho2_from(cache.cov_excluding(skip));
        } catch (const std::invalid_argument&) {
          return rho2_full;  // degenerate leave-one-out replicate
        }
      });
      st.rho2_se(r, c) = rho2_est.se;
    }
  }

  for (int e = 0; e < 4; ++e) st.a_cols[static_cast<std::size_t>(e)] = cache.cols[e];
  st.f_cols.assign(cache.cols.begin() + 4, cache.cols.end());
  return st;
}

/// Calibration pass: estimates E[F] and Var F on a dedicated sample range,
/// never reused for evaluation. The analytic mean overrides the empirical one
/// when the generator supplies it.
inline SelectionSpec calibrate(const ExperimentPlan& plan) {
  plan.validate();
  if (!plan.selection) throw std::invalid_argument("calibrate: plan has no selection skeleton");
  const std::vector<FLabel> labels = plan.selection->labels;
  const auto nf = static_cast<Eigen::Index>(labels.size());

  std::vector<Eigen::VectorXd> values(static_cast<std::size_t>(plan.n_calibration));
  detail::parallel_for_samples(plan.n_calibration, plan.workers, plan.geometry,
                               [&](CellSolver& solver, int item) {
                                 const SampleSeed seed{plan.master_seed,
                                                       kCalibrationIndexBase +
                                                           static_cast<std::uint64_t>(item)};
                                 const ScalarField field =
                                     generate(plan.generator, plan.geometry, seed);
                                 const EdgeCoefficients edges = edge_coefficients(field);
                                 values[static_cast<std::size_t>(item)] =
                                     statistics_of(field, edges, labels, solver).components;
                               });

  detail::MomentCache cache;
  cache.cols.resize(labels.size());
  for (const auto& v : values)
    for (Eigen::Index k = 0; k < nf; ++k)
      cache.cols[static_cast<std::size_t>(k)].push_back(v[k]);
  cache.build();

  SelectionSpec spec;
  spec.labels = labels;
  spec.delta = plan.selection->delta;
  spec.calib_mean = cache.mean_excluding(-1);
  spec.calib_cov = cache.cov_excluding(-1);

  if (plan.generator.analytic_mean_f_avg) {
    for (Eigen::Index k = 0; k < nf; ++k)
      if (labels[static_cast<std::size_t>(k)] == FLabel::Avg)
        spec.calib_mean[k] = *plan.generator.analytic_mean_f_avg;
  }

  for (Eigen::Index k = 0; k < nf; ++k) {
    if (spec.calib_cov(k, k) <= 0.0)
      throw std::runtime_error("calibrate: statistic " +
                               to_string(labels[static_cast<std::size_t>(k)]) +
                               " has zero variance (singular calibration)");
  }
  if (condition_number_spd(spec.calib_cov) > 1e12)
    throw std::runtime_error("calibrate: calibration covariance is near-singular");
  return spec;
}

struct RunResult {
  std::vector<RveSample> samples;
  EnsembleStats stats;
};

namespace detail {

inline RveSample solve_one_sample(const ExperimentPlan& plan, CellSolver& solver,
                                  std::uint64_t sample_index,
                                  const std::vector<FLabel>& labels) {
  const SampleSeed seed{plan.master_seed, sample_index};
  try {
    const ScalarField field = generate(plan.generator, plan.geometry, seed);
    const EdgeCoefficients edges = edge_coefficients(field);
    RveSample out;
    out.seed = seed;
    out.F = statistics_of(field, edges, labels, solver);
    const CorrectorSolution cx = solver.corrector(field, edges, Axis::X, plan.solve);
    const CorrectorSolution cy = solver.corrector(field, edges, Axis::Y, plan.solve);
    out.a_rve = cell_formula(field, cx, cy);
    out.solver_iters = cx.iterations + cy.iterations;
    out.accepted = true;
    return out;
  } catch (const SolverError& err) {
    std::ostringstream msg;
    msg << err.what() << " [master_seed=" << seed.master_seed
        << " sample_index=" << seed.sample_index << "]";
    throw SolverError(msg.str(), err.residual_history);
  }
}

}  // namespace detail

inline RunResult run_plain(const ExperimentPlan& plan) {
  plan.validate();
  const std::vector<FLabel> labels = plan.labels();
  RunResult out;
  out.samples.resize(static_cast<std::size_t>(plan.n_plain));
  detail::parallel_for_samples(
      plan.n_plain, plan.workers, plan.geometry, [&](CellSolver& solver, int item) {
        out.samples[static_cast<std::size_t>(item)] = detail::solve_one_sample(
            plan, solver, kPlainIndexBase + static_cast<std::uint64_t>(item), labels);
      });
  out.stats = compute_stats(out.samples, labels, plan.geometry, 1.0, plan.n_plain);
  return out;
}

/// Draws candidates, screens them by the calibrated criterion, and solves the
/// corrector problem only for accepted ones (exactly n_selected solves). The
/// returned list contains every candidate up to the last accepted one.
inline RunResult run_selected(const ExperimentPlan& plan, const SelectionSpec& spec) {
  plan.validate();
  spec.validate();
  if (!plan.selection) throw std::invalid_argument("run_selected: plan has no selection");
  const std::vector<FLabel> labels = spec.labels;
  const std::uint64_t base = plan.shared_sample_range ? kPlainIndexBase : kSelectedIndexBase;

  constexpr int kBlock = 256;
  constexpr long long kCandidateCap = 1'000'000;

  std::vector<RveSample> candidates;
  long long accepted_count = 0;
  long long cutoff = -1;  // index (within the range) of the last needed candidate

  while (cutoff < 0) {
    const long long block_start = static_cast<long long>(candidates.size());
    if (block_start >= kCandidateCap) {
      const double rate =
          static_cast<double>(accepted_count) / static_cast<double>(block_start);
      if (rate < 1e-4) {
        std::ostringstream msg;
        msg << "run_selected: acceptance rate " << rate << " after " << block_start
            << " candidates; criterion delta=" << spec.delta << " appears unreachable";
        throw std::runtime_error(msg.str());
      }
    }
    candidates.resize(static_cast<std::size_t>(block_start + kBlock));
    detail::parallel_for_samples(
        kBlock, plan.workers, plan.geometry, [&](CellSolver& solver, int item) {
          const std::uint64_t idx =
              base + static_cast<std::uint64_t>(block_start + item);
          const SampleSeed seed{plan.master_seed, idx};
          const ScalarField field = generate(plan.generator, plan.geometry, seed);
          const EdgeCoefficients edges = edge_coefficients(field);
          RveSample s;
          s.seed = seed;
          s.F = statistics_of(field, edges, labels, solver);
          s.accepted = accept(s.F, spec);
          candidates[static_cast<std::size_t>(block_start + item)] = std::move(s);
        });
    for (long long k = block_start; k < block_start + kBlock && cutoff < 0; ++k) {
      if (candidates[static_cast<std::size_t>(k)].accepted) {
        ++accepted_count;
        if (accepted_count == plan.n_selected) cutoff = k;
      }
    }
  }
  candidates.resize(static_cast<std::size_t>(cutoff + 1));

  std::vector<std::size_t> accepted_slots;
  accepted_slots.reserve(static_cast<std::size_t>(plan.n_selected));
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (candidates[k].accepted) accepted_slots.push_back(k);

  detail::parallel_for_samples(
      static_cast<int>(accepted_slots.size()), plan.workers, plan.geometry,
      [&](CellSolver& solver, int item) {
        RveSample& s = candidates[accepted_slots[static_cast<std::size_t>(item)]];
        RveSample solved =
            detail::solve_one_sample(plan, solver, s.seed.sample_index, labels);
        s.a_rve = solved.a_rve;
        s.solver_iters = solved.solver_iters;
      });

  RunResult out;
  out.samples = std::move(candidates);
  const double rate = static_cast<double>(plan.n_selected) /
                      static_cast<double>(cutoff + 1);
  out.stats = compute_stats(out.samples, labels, plan.geometry, rate, cutoff + 1);
  return out;
}

/// Side-by-side report of plain vs selected fluctuations against the
/// conditional-sampling prediction 1 - (1 - delta^2) * rho^2.
struct CompareReport {
  double delta = 0.0;
  Eigen::Matrix2d vrf = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d vrf_se = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d predicted_bound = Eigen::Matrix2d::Ones();
  Eigen::Matrix2d mean_shift = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d mean_shift_se = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d entry_defined = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d vrf_within_bound = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d mean_shift_within_3se = Eigen::Matrix2d::Zero();
  bool pass = true;
};

inline CompareReport compare(const EnsembleStats& plain, EnsembleStats& selected,
                             double delta) {
  if (plain.geometry != selected.geometry || plain.labels != selected.labels)
    throw std::invalid_argument("compare: ensembles use different geometry or statistics");
  CompareReport rep;
  rep.delta = delta;
  Eigen::Matrix2d vrf_val = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d vrf_se = Eigen::Matrix2d::Zero();

  for (int e = 0; e < 4; ++e) {
    const int r = e / 2, c = e % 2;
    const std::vector<double>& xp = plain.a_cols[static_cast<std::size_t>(e)];
    const std::vector<double>& xs = selected.a_cols[static_cast<std::size_t>(e)];
    // rho^2 always comes from the plain ensemble: selection distorts the law.
    rep.predicted_bound(r, c) =
        1.0 - (1.0 - delta * delta) * plain.rho2(r, c) * plain.rho2_defined(r, c);

    rep.mean_shift(r, c) = std::abs(selected.mean_a(r, c) - plain.mean_a(r, c));
    rep.mean_shift_se(r, c) = std::hypot(plain.mean_a_se(r, c), selected.mean_a_se(r, c));
    rep.mean_shift_within_3se(r, c) =
        rep.mean_shift(r, c) <= 3.0 * rep.mean_shift_se(r, c) ? 1.0 : 0.0;

    if (plain.var_a(r, c) <= 0.0) {
      rep.entry_defined(r, c) = 0.0;
      rep.vrf_within_bound(r, c) = 1.0;
      continue;
    }
    rep.entry_defined(r, c) = 1.0;
    const Estimate est = jackknife_two_sample(
        static_cast<int>(xp.size()), static_cast<int>(xs.size()), [&](int skip_p, int skip_s) {
          const double vp = variance_excluding(xp, skip_p);
          const double vs = variance_excluding(xs, skip_s);
          return vs / vp;
        });
    vrf_val(r, c) = est.value;
    vrf_se(r, c) = est.se;
    rep.vrf_within_bound(r, c) =
        est.value <= rep.predicted_bound(r, c) + 3.0 * est.se ? 1.0 : 0.0;
  }

  rep.vrf = vrf_val;
  rep.vrf_se = vrf_se;
  selected.vrf = vrf_val;
  selected.vrf_se = vrf_se;
  rep.pass = true;
  for (int e = 0; e < 4; ++e) {
    const int r = e / 2, c = e % 2;
    if (rep.vrf_within_bound(r, c) == 0.0 || rep.mean_shift_within_3se(r, c) == 0.0)
      rep.pass = false;
  }
  return rep;
}

enum class ScalingQuantity { EffectiveA11, FAvg };

struct ScalingPoint {
  int cells = 0;
  Estimate variance;
};

struct ScalingResult {
  std::vector<ScalingPoint> points;
  double slope = 0.0;
  bool degenerate = false;
};

/// Least-squares slope of log Var vs log L across box sizes.
inline ScalingResult variance_scaling_study(const GeneratorSpec& generator, int pixels_per_cell,
                                            const std::vector<int>& cells_list, int n_per_size,
                                            std::uint64_t master_seed, int workers,
                                            ScalingQuantity quantity,
                                            SolveOptions solve = {}) {
  if (cells_list.size() < 3)
    throw std::invalid_argument("variance_scaling_study: need at least 3 box sizes");
  ScalingResult out;
  for (int cells : cells_list) {
    const GridGeometry geom{cells, pixels_per_cell};
    std::vector<double> values(static_cast<std::size_t>(n_per_size));
    if (quantity == ScalingQuantity::FAvg) {
      detail::parallel_for_samples(n_per_size, workers, geom, [&](CellSolver&, int item) {
        const SampleSeed seed{master_seed, kPlainIndexBase + static_cast<std::uint64_t>(item)};
        values[static_cast<std::size_t>(item)] = f_avg(generate(generator, geom, seed));
      });
    } else {
      ExperimentPlan plan;
      plan.generator = generator;
      plan.geometry = geom;
      plan.selection.reset();
      plan.n_plain = n_per_size;
      plan.master_seed = master_seed;
      plan.workers = workers;
      plan.solve = solve;
      const RunResult run = run_plain(plan);
      for (int k = 0; k < n_per_size; ++k)
        values[static_cast<std::size_t>(k)] =
            (*run.samples[static_cast<std::size_t>(k)].a_rve)(0, 0);
    }
    ScalingPoint p;
    p.cells = cells;
    p.variance = jackknife(n_per_size,
                           [&](int skip) { return variance_excluding(values, skip); });
    out.points.push_back(p);
  }

  std::vector<double> log_l, log_var;
  for (const auto& p : out.points) {
    if (p.variance.value <= 0.0) {
      out.degenerate = true;
      out.slope = std::numeric_limits<double>::quiet_NaN();
      return out;
    }
    log_l.push_back(std::log(static_cast<double>(p.cells)));
    log_var.push_back(std::log(p.variance.value));
  }
  out.slope = fit_slope(log_l, log_var);
  return out;
}

struct GaussianityReport {
  struct Entry {
    std::string name;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    bool degenerate = false;
  };
  std::vector<Entry> entries;
  std::vector<std::string> names;
  Eigen::MatrixXd correlation;
};

/// Shape diagnostics of the joint law of (a_11, F).
inline GaussianityReport gaussianity_diagnostics(std::span<const RveSample> samples) {
  std::vector<std::vector<double>> cols;
  std::vector<std::string> names;
  int n_solved = 0;
  for (const RveSample& s : samples)
    if (s.a_rve) ++n_solved;
  if (n_solved < 200)
    throw std::invalid_argument("gaussianity_diagnostics: need at least 200 solved samples");

  const RveSample* first = nullptr;
  for (const RveSample& s : samples)
    if (s.a_rve) {
      first = &s;
      break;
    }
  names.push_back("a_11");
  for (FLabel l : first->F.labels) names.push_back("F_" + to_string(l));
  cols.resize(names.size());
  for (const RveSample& s : samples) {
    if (!s.a_rve) continue;
    cols[0].push_back((*s.a_rve)(0, 0));
    for (Eigen::Index k = 0; k < s.F.components.size(); ++k)
      cols[static_cast<std::size_t>(k) + 1].push_back(s.F.components[k]);
  }

  GaussianityReport rep;
  rep.names = names;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    GaussianityReport::Entry e;
    e.name = names[c];
    if (variance_of(cols[c]) <= 0.0) {
      e.degenerate = true;
    } else {
      e.skewness = skewness_of(cols[c]);
      e.excess_kurtosis = excess_kurtosis_of(cols[c]);
    }
    rep.entries.push_back(e);
  }
  const auto c = static_cast<Eigen::Index>(cols.size());
  rep.correlation = Eigen::MatrixXd::Identity(c, c);
  for (Eigen::Index a = 0; a < c; ++a)
    for (Eigen::Index b = a + 1; b < c; ++b) {
      const double va = variance_of(cols[static_cast<std::size_t>(a)]);
      const double vb = variance_of(cols[static_cast<std::size_t>(b)]);
      const double r = (va > 0.0 && vb > 0.0)
                           ? covariance_of(cols[static_cast<std::size_t>(a)],
                                           cols[static_cast<std::size_t>(b)]) /
                                 std::sqrt(va * vb)
                           : 0.0;
      rep.correlation(a, b) = r;
      rep.correlation(b, a) = r;
    }
  return rep;
}

struct TailPoint {
  double s = 0.0;
  Estimate p_plain;
  Estimate p_selected;
  double gaussian_plain = 0.0;    // 2(1 - Phi(s))
  double gaussian_reduced = 0.0;  // Gaussian tail at the reduced variance
  double selected_vs_reduced = 0.0;
};

struct TailReport {
  std::vector<TailPoint> points;
  double sd_plain = 0.0;
  double sd_reduced = 0.0;
};

/// Empirical outlier probabilities of a_11 on the plain scale, against the
/// Gaussian tail with variance (1 - (1 - delta^2) rho^2) Var_plain.
inline TailReport tail_comparison(std::span<const RveSample> plain,
                                  std::span<const RveSample> selected,
                                  std::span<const double> s_list, double delta,
                                  double rho2_plain) {
  const auto collect = [](std::span<const RveSample> samples) {
    std::vector<double> xs;
    for (const RveSample& s : samples)
      if (s.a_rve) xs.push_back((*s.a_rve)(0, 0));
    return xs;
  };
  const std::vector<double> xp = collect(plain);
  const std::vector<double> xs = collect(selected);
  if (xp.size() < 1000 || xs.size() < 1000)
    throw std::invalid_argument("tail_comparison: need at least 1000 samples per ensemble");

  TailReport rep;
  const double var_plain = variance_of(xp);
  rep.sd_plain = std::sqrt(var_plain);
  rep.sd_reduced = std::sqrt(std::max(1e-300, (1.0 - (1.0 - delta * delta) * rho2_plain)) *
                             var_plain);
  const double mean_plain = mean_of(xp);
  const double mean_sel = mean_of(xs);

  const auto tail_fraction = [](std::span<const double> data, double center, double threshold) {
    std::size_t count = 0;
    for (double v : data)
      if (std::abs(v - center) >= threshold) ++count;
    Estimate e;
    e.value = static_cast<double>(count) / static_cast<double>(data.size());
    e.se = std::sqrt(std::max(e.value * (1.0 - e.value), 1e-300) /
                     static_cast<double>(data.size()));
    return e;
  };

  for (double s : s_list) {
    TailPoint p;
    p.s = s;
    const double threshold = s * rep.sd_plain;
    p.p_plain = tail_fraction(xp, mean_plain, threshold);
    p.p_selected = tail_fraction(xs, mean_sel, threshold);
    p.gaussian_plain = 2.0 * (1.0 - normal_cdf(s));
    p.gaussian_reduced =
        2.0 * (1.0 - normal_cdf(threshold / std::max(rep.sd_reduced, 1e-300)));
    p.selected_vs_reduced =
        p.gaussian_reduced > 0.0 ? p.p_selected.value / p.gaussian_reduced : 0.0;
    rep.points.push_back(p);
  }
  return rep;
}

struct AcceptanceRatePoint {
  double delta = 0.0;
  Estimate rate;
  double gaussian_prediction = 0.0;
};

/// Empirical acceptance probability of the criterion for several thresholds,
/// from F evaluations only (no corrector solves).
inline std::vector<AcceptanceRatePoint> acceptance_probability_study(
    const ExperimentPlan& plan, const SelectionSpec& spec, std::span<const double> deltas,
    int n_candidates) {
  plan.validate();
  const std::vector<FLabel> labels = spec.labels;
  std::vector<Eigen::VectorXd> values(static_cast<std::size_t>(n_candidates));
  detail::parallel_for_samples(
      n_candidates, plan.workers, plan.geometry, [&](CellSolver& solver, int item) {
        const SampleSeed seed{plan.master_seed,
                              kSelectedIndexBase + static_cast<std::uint64_t>(item)};
        const ScalarField field = generate(plan.generator, plan.geometry, seed);
        const EdgeCoefficients edges = edge_coefficients(field);
        values[static_cast<std::size_t>(item)] =
            statistics_of(field, edges, labels, solver).components;
      });

  std::vector<AcceptanceRatePoint> out;
  for (double delta : deltas) {
    SelectionSpec probe = spec;
    probe.delta = delta;
    long long accepted = 0;
    for (const auto& v : values) {
      FVector F{labels, v};
      if (accept(F, probe)) ++accepted;
    }
    AcceptanceRatePoint p;
    p.delta = delta;
    p.rate.value = static_cast<double>(accepted) / static_cast<double>(n_candidates);
    const double g = gaussian_acceptance(delta);
    p.gaussian_prediction = g;
    p.rate.se = std::sqrt(g * (1.0 - g) / static_cast<double>(n_candidates));
    out.push_back(p);
  }
  return out;
}

}  // namespace rvesel
