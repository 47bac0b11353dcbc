#pragma once

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rvesel/grid.hpp"

namespace rvesel {

/// Quantities living on the grid edges: `x[j*n+i]` sits on the x-normal edge
/// between pixels (i, j) and (i+1, j); `y` analogously in the y direction.
struct EdgeField {
  int n = 0;
  std::vector<double> x, y;

  explicit EdgeField(int n_ = 0)
      : n(n_),
        x(static_cast<std::size_t>(n_) * n_, 0.0),
        y(static_cast<std::size_t>(n_) * n_, 0.0) {}

  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * n + i; }
};

using EdgeCoefficients = EdgeField;

/// Harmonic mean of the two pixels adjacent to each edge.
inline EdgeCoefficients edge_coefficients(const ScalarField& field) {
  const int n = field.n();
  EdgeCoefficients edges(n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double c = field.at(i, j);
      const double right = field.at(i + 1 == n ? 0 : i + 1, j);
      const double up = field.at(i, j + 1 == n ? 0 : j + 1);
      edges.x[edges.idx(i, j)] = 2.0 * c * right / (c + right);
      edges.y[edges.idx(i, j)] = 2.0 * c * up / (c + up);
    }
  return edges;
}

struct SolveOptions {
  double tol = 1e-9;         // relative residual target
  int max_iter_per_n = 20;   // iteration cap is max_iter_per_n * n
};

struct CorrectorSolution {
  Axis direction = Axis::X;
  EdgeField grad;  // discrete gradient of the corrector
  double residual_rel = 0.0;
  int iterations = 0;
  std::vector<double> residual_history;  // preconditioner-norm residual per iteration
};

struct AuxSolution {
  Axis direction = Axis::X;
  EdgeField grad;
  double residual_rel = 0.0;
};

/// Thrown when conjugate gradients fails to reach the tolerance.
struct SolverError : std::runtime_error {
  SolverError(std::string msg, std::vector<double> history)
      : std::runtime_error(std::move(msg)), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
};

namespace detail {

// FFTW's planner is not thread-safe; executions on distinct plans are.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(double* p) const { fftw_free(p); }
  void operator()(fftw_complex* p) const { fftw_free(p); }
};

}  // namespace detail

/// Direct solver for the 5-point periodic Laplacian, diagonalized by the
/// real-to-complex FFT. One instance owns its buffers and plans: reuse it
/// across solves on the same grid, but not across threads.
class PoissonFft {
 public:
  explicit PoissonFft(const GridGeometry& geom)
      : n_(geom.pixels_per_side()), h_(geom.spacing()) {
    const std::size_t real_count = static_cast<std::size_t>(n_) * n_;
    const std::size_t spec_count = static_cast<std::size_t>(n_) * (n_ / 2 + 1);
    real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * real_count)));
    spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * spec_count)));
    if (!real_ || !spec_) throw std::bad_alloc();
    {
      std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
      fwd_ = fftw_plan_dft_r2c_2d(n_, n_, real_.get(), spec_.get(), FFTW_ESTIMATE);
      bwd_ = fftw_plan_dft_c2r_2d(n_, n_, spec_.get(), real_.get(), FFTW_ESTIMATE);
    }
    if (!fwd_ || !bwd_) throw std::runtime_error("PoissonFft: planning failed");

    // Symbol of D^T D (the negative discrete Laplacian) per mode.
    symbol_.resize(spec_count);
    const double scale = 4.0 / (h_ * h_);
    const double pi = 3.14159265358979323846264338327950288;
    for (int kj = 0; kj < n_; ++kj) {
      const double sj = std::sin(pi * kj / n_);
      for (int ki = 0; ki <= n_ / 2; ++ki) {
        const double si = std::sin(pi * ki / n_);
        symbol_[static_cast<std::size_t>(kj) * (n_ / 2 + 1) + ki] = scale * (si * si + sj * sj);
      }
    }
  }

  ~PoissonFft() {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    if (fwd_) fftw_destroy_plan(fwd_);
    if (bwd_) fftw_destroy_plan(bwd_);
  }

  PoissonFft(const PoissonFft&) = delete;
  PoissonFft& operator=(const PoissonFft&) = delete;

  int n() const { return n_; }

  /// Solves coeff * (D^T D) u = rhs with the zero mode pinned to zero.
  void solve(std::span<const double> rhs, std::span<double> out, double coeff = 1.0) const {
    const std::size_t count = static_cast<std::size_t>(n_) * n_;
    if (rhs.size() != count || out.size() != count)
      throw std::invalid_argument("PoissonFft::solve: size mismatch");
    std::copy(rhs.begin(), rhs.end(), real_.get());
    fftw_execute(fwd_);
    const std::size_t spec_count = static_cast<std::size_t>(n_) * (n_ / 2 + 1);
    const double norm = 1.0 / (static_cast<double>(n_) * n_);
    spec_.get()[0][0] = 0.0;
    spec_.get()[0][1] = 0.0;
    for (std::size_t k = 1; k < spec_count; ++k) {
      const double s = symbol_[k];
      const double inv = s > 0.0 ? norm / (coeff * s) : 0.0;
      spec_.get()[k][0] *= inv;
      spec_.get()[k][1] *= inv;
    }
    fftw_execute(bwd_);
    std::copy(real_.get(), real_.get() + count, out.begin());
  }

 private:
  int n_;
  double h_;
  std::unique_ptr<double, detail::FftwDeleter> real_;
  std::unique_ptr<fftw_complex, detail::FftwDeleter> spec_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
  std::vector<double> symbol_;
};

/// y = D^T (edges * D u): the discrete divergence-form operator. Exposed for
/// tests of operator symmetry; the corrector solver uses it as the CG matrix.
inline void apply_div_a_grad(const EdgeCoefficients& edges, std::span<const double> u,
                             std::span<double> out, double h) {
  const int n = edges.n;
  const double inv_h2 = 1.0 / (h * h);
  for (int j = 0; j < n; ++j) {
    const int jm = j == 0 ? n - 1 : j - 1;
    const int jp = j + 1 == n ? 0 : j + 1;
    for (int i = 0; i < n; ++i) {
      const int im = i == 0 ? n - 1 : i - 1;
      const int ip = i + 1 == n ? 0 : i + 1;
      const std::size_t c = edges.idx(i, j);
      const double uc = u[c];
      out[c] = inv_h2 * (edges.x[edges.idx(im, j)] * (uc - u[edges.idx(im, j)]) -
                         edges.x[c] * (u[edges.idx(ip, j)] - uc) +
                         edges.y[edges.idx(i, jm)] * (uc - u[edges.idx(i, jm)]) -
                         edges.y[c] * (u[edges.idx(i, jp)] - uc));
    }
  }
}

/// -D^T(a_edge e_dir): right-hand side shared by the corrector equation and
/// the constant-coefficient auxiliary problem.
inline std::vector<double> divergence_of_coefficient_column(const EdgeCoefficients& edges,
                                                            Axis dir, double h) {
  const int n = edges.n;
  std::vector<double> rhs(static_cast<std::size_t>(n) * n);
  const double inv_h = 1.0 / h;
  for (int j = 0; j < n; ++j) {
    const int jm = j == 0 ? n - 1 : j - 1;
    for (int i = 0; i < n; ++i) {
      const int im = i == 0 ? n - 1 : i - 1;
      const std::size_t c = edges.idx(i, j);
      rhs[c] = dir == Axis::X ? inv_h * (edges.x[c] - edges.x[edges.idx(im, j)])
                              : inv_h * (edges.y[c] - edges.y[edges.idx(i, jm)]);
    }
  }
  return rhs;
}

inline EdgeField discrete_gradient(std::span<const double> u, int n, double h) {
  EdgeField grad(n);
  const double inv_h = 1.0 / h;
  for (int j = 0; j < n; ++j) {
    const int jp = j + 1 == n ? 0 : j + 1;
    for (int i = 0; i < n; ++i) {
      const int ip = i + 1 == n ? 0 : i + 1;
      const std::size_t c = grad.idx(i, j);
      grad.x[c] = inv_h * (u[grad.idx(ip, j)] - u[c]);
      grad.y[c] = inv_h * (u[grad.idx(i, jp)] - u[c]);
    }
  }
  return grad;
}

/// Workspace for the periodic cell problems on one grid size. Owns the FFT
/// plans and scratch arrays; one instance per worker thread.
class CellSolver {
 public:
  explicit CellSolver(const GridGeometry& geom)
      : geom_(geom), fft_(geom), size_(static_cast<std::size_t>(geom.pixels_per_side()) *
                                       geom.pixels_per_side()) {
    for (auto* v : {&u_, &r_, &z_, &p_, &q_}) v->assign(size_, 0.0);
  }

  const GridGeometry& geometry() const { return geom_; }

  /// Conjugate gradients on D^T a D u = -D^T(a e_dir), preconditioned by the
  /// FFT-diagonalized mean(a) Laplacian; the zero-mean gauge fixes u.
  CorrectorSolution corrector(const ScalarField& field, Axis dir, SolveOptions opts = {}) {
    check_geometry(field);
    return corrector(field, edge_coefficients(field), dir, opts);
  }

  CorrectorSolution corrector(const ScalarField& field, const EdgeCoefficients& edges, Axis dir,
                              SolveOptions opts = {}) {
    check_geometry(field);
    if (opts.tol <= 0.0) throw std::invalid_argument("corrector: tol must be > 0");
    const int n = geom_.pixels_per_side();
    const double h = geom_.spacing();
    const double mean_a = field.mean();
    const int max_iter = opts.max_iter_per_n * n;

    std::vector<double> b = divergence_of_coefficient_column(edges, dir, h);
    const double b_norm = norm2(b);

    CorrectorSolution sol;
    sol.direction = dir;
    std::fill(u_.begin(), u_.end(), 0.0);

    if (b_norm > 0.0) {
      r_ = b;
      fft_.solve(r_, std::span<double>(z_), mean_a);
      p_ = z_;
      double rho = dot(r_, z_);
      double rel = 1.0;
      sol.residual_history.push_back(std::sqrt(std::max(rho, 0.0)));
      int iter = 0;
      while (rel > opts.tol) {
        if (iter >= max_iter)
          throw SolverError("corrector: no convergence within " + std::to_string(max_iter) +
                                " iterations (residual " + std::to_string(rel) + ")",
                            sol.residual_history);
        apply_div_a_grad(edges, p_, std::span<double>(q_), h);
        const double alpha = rho / dot(p_, q_);
        for (std::size_t k = 0; k < size_; ++k) {
          u_[k] += alpha * p_[k];
          r_[k] -= alpha * q_[k];
        }
        fft_.solve(r_, std::span<double>(z_), mean_a);
        const double rho_next = dot(r_, z_);
        sol.residual_history.push_back(std::sqrt(std::max(rho_next, 0.0)));
        const double beta = rho_next / rho;
        rho = rho_next;
        for (std::size_t k = 0; k < size_; ++k) p_[k] = z_[k] + beta * p_[k];
        rel = norm2(r_) / b_norm;
        ++iter;
      }
      sol.iterations = iter;
      sol.residual_rel = rel;
      // Zero-mean gauge (iterates stay mean-free up to roundoff).
      double mean_u = 0.0;
      for (double v : u_) mean_u += v;
      mean_u /= static_cast<double>(size_);
      for (double& v : u_) v -= mean_u;
    }

    sol.grad = discrete_gradient(u_, n, h);
    return sol;
  }

  /// Exact FFT solve of D^T D v = -D^T(a e_dir); gradient of the solution.
  AuxSolution aux_poisson(const ScalarField& field, Axis dir) {
    check_geometry(field);
    return aux_poisson(edge_coefficients(field), dir);
  }

  AuxSolution aux_poisson(const EdgeCoefficients& edges, Axis dir) {
    const int n = geom_.pixels_per_side();
    const double h = geom_.spacing();
    std::vector<double> b = divergence_of_coefficient_column(edges, dir, h);
    fft_.solve(b, std::span<double>(u_));
    AuxSolution sol;
    sol.direction = dir;
    const double b_norm = norm2(b);
    if (b_norm > 0.0) {
      apply_laplacian(u_, q_, h);
      double err = 0.0;
      for (std::size_t k = 0; k < size_; ++k) {
        const double d = q_[k] - b[k];
        err += d * d;
      }
      sol.residual_rel = std::sqrt(err) / b_norm;
    }
    sol.grad = discrete_gradient(u_, n, h);
    return sol;
  }

 private:
  void check_geometry(const ScalarField& field) const {
    if (field.geometry != geom_)
      throw std::invalid_argument("CellSolver: field geometry does not match workspace");
  }

  void apply_laplacian(const std::vector<double>& u, std::vector<double>& out, double h) const {
    const int n = geom_.pixels_per_side();
    const double inv_h2 = 1.0 / (h * h);
    for (int j = 0; j < n; ++j) {
      const int jm = j == 0 ? n - 1 : j - 1;
      const int jp = j + 1 == n ? 0 : j + 1;
      for (int i = 0; i < n; ++i) {
        const int im = i == 0 ? n - 1 : i - 1;
        const int ip = i + 1 == n ? 0 : i + 1;
        const std::size_t c = static_cast<std::size_t>(j) * n + i;
        out[c] = inv_h2 * (4.0 * u[c] - u[static_cast<std::size_t>(j) * n + im] -
                           u[static_cast<std::size_t>(j) * n + ip] -
                           u[static_cast<std::size_t>(jm) * n + i] -
                           u[static_cast<std::size_t>(jp) * n + i]);
      }
    }
  }

  static double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
  }

  static double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

  GridGeometry geom_;
  PoissonFft fft_;
  std::size_t size_;
  std::vector<double> u_, r_, z_, p_, q_;
};

inline CorrectorSolution solve_corrector(const ScalarField& field, Axis dir,
                                         SolveOptions opts = {}) {
  CellSolver solver(field.geometry);
  return solver.corrector(field, dir, opts);
}

inline AuxSolution solve_aux_poisson(const ScalarField& field, Axis dir) {
  CellSolver solver(field.geometry);
  return solver.aux_poisson(field, dir);
}

}  // namespace rvesel
