#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rvesel/pde.hpp"

namespace rvesel {

/// Components of the selection statistic vector.
enum class FLabel { Avg, TwoPoint11, TwoPoint12, TwoPoint21, TwoPoint22 };

inline std::string to_string(FLabel label) {
  switch (label) {
    case FLabel::Avg: return "avg";
    case FLabel::TwoPoint11: return "two_point_11";
    case FLabel::TwoPoint12: return "two_point_12";
    case FLabel::TwoPoint21: return "two_point_21";
    case FLabel::TwoPoint22: return "two_point_22";
  }
  return "?";
}

inline bool needs_two_point(const std::vector<FLabel>& labels) {
  for (FLabel l : labels)
    if (l != FLabel::Avg) return true;
  return false;
}

struct FVector {
  std::vector<FLabel> labels;
  Eigen::VectorXd components;
};

/// Calibrated selection criterion: accept when the componentwise-standardized
/// deviation vector has Euclidean norm at most delta.
struct SelectionSpec {
  std::vector<FLabel> labels;
  double delta = 0.5;
  Eigen::VectorXd calib_mean;
  Eigen::MatrixXd calib_cov;

  void validate() const {
    if (delta <= 0.0) throw std::invalid_argument("SelectionSpec: delta must be > 0");
    if (labels.empty()) throw std::invalid_argument("SelectionSpec: need at least one label");
    for (std::size_t a = 0; a < labels.size(); ++a)
      for (std::size_t b = a + 1; b < labels.size(); ++b)
        if (labels[a] == labels[b])
          throw std::invalid_argument("SelectionSpec: duplicate label " + to_string(labels[a]));
    const auto n = static_cast<Eigen::Index>(labels.size());
    if (calib_mean.size() != n || calib_cov.rows() != n || calib_cov.cols() != n)
      throw std::invalid_argument("SelectionSpec: calibration shape mismatch");
  }
};

/// Energy form of the cell formula: a_kl = avg of a_edge (e_k + D phi_k) . (e_l + D phi_l).
/// Symmetric by construction and quadratically accurate in the solver residual.
inline Eigen::Matrix2d cell_formula(const ScalarField& field, const CorrectorSolution& cx,
                                    const CorrectorSolution& cy) {
  if (cx.direction != Axis::X || cy.direction != Axis::Y)
    throw std::invalid_argument("cell_formula: pass the X corrector first, then Y");
  const int n = field.n();
  if (cx.grad.n != n || cy.grad.n != n)
    throw std::invalid_argument("cell_formula: corrector geometry does not match field");
  const EdgeCoefficients edges = edge_coefficients(field);
  const std::size_t count = static_cast<std::size_t>(n) * n;

  double s11 = 0.0, s22 = 0.0, s12 = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const double gx1 = 1.0 + cx.grad.x[k];
    const double gy1 = cx.grad.y[k];
    const double gx2 = cy.grad.x[k];
    const double gy2 = 1.0 + cy.grad.y[k];
    s11 += edges.x[k] * gx1 * gx1 + edges.y[k] * gy1 * gy1;
    s22 += edges.x[k] * gx2 * gx2 + edges.y[k] * gy2 * gy2;
    s12 += edges.x[k] * gx1 * gx2 + edges.y[k] * gy1 * gy2;
  }
  const double inv = 1.0 / static_cast<double>(count);
  Eigen::Matrix2d a;
  a << s11 * inv, s12 * inv, s12 * inv, s22 * inv;
  return a;
}

inline double f_avg(const ScalarField& field) { return field.mean(); }

/// Second-order small-contrast statistic: entry (i, j) is
/// -avg(a_edge * (D v_i) . e_j) for the auxiliary solutions v_i.
inline Eigen::Matrix2d f_two_point(const ScalarField& field, const AuxSolution& vx,
                                   const AuxSolution& vy) {
  if (vx.direction != Axis::X || vy.direction != Axis::Y)
    throw std::invalid_argument("f_two_point: pass the X solution first, then Y");
  const int n = field.n();
  if (vx.grad.n != n || vy.grad.n != n)
    throw std::invalid_argument("f_two_point: solution geometry does not match field");
  const EdgeCoefficients edges = edge_coefficients(field);
  const std::size_t count = static_cast<std::size_t>(n) * n;

  double t11 = 0.0, t12 = 0.0, t21 = 0.0, t22 = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    t11 += edges.x[k] * vx.grad.x[k];
    t12 += edges.y[k] * vx.grad.y[k];
    t21 += edges.x[k] * vy.grad.x[k];
    t22 += edges.y[k] * vy.grad.y[k];
  }
  const double inv = -1.0 / static_cast<double>(count);
  Eigen::Matrix2d f;
  f << t11 * inv, t12 * inv, t21 * inv, t22 * inv;
  return f;
}

inline bool accept(const FVector& sample, const SelectionSpec& spec) {
  spec.validate();
  if (sample.labels != spec.labels)
    throw std::invalid_argument("accept: sample labels do not match the selection spec");
  double norm2 = 0.0;
  for (Eigen::Index k = 0; k < sample.components.size(); ++k) {
    const double var = spec.calib_cov(k, k);
    if (var <= 0.0)
      throw std::invalid_argument("accept: calibrated variance of " +
                                  to_string(spec.labels[static_cast<std::size_t>(k)]) +
                                  " is not positive");
    const double z = (sample.components[k] - spec.calib_mean[k]) / std::sqrt(var);
    norm2 += z * z;
  }
  return std::sqrt(norm2) <= spec.delta;
}

inline double condition_number_spd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

/// Fraction of Var a_ij explained by F: cov' (Var F)^-1 cov / Var a_ij,
/// clamped to [0, 1 + 1e-9].
inline double rho_squared(const Eigen::VectorXd& cov_aF, const Eigen::MatrixXd& var_F,
                          double var_a) {
  if (var_a <= 0.0) throw std::invalid_argument("rho_squared: var_a must be > 0");
  if (var_F.rows() != cov_aF.size() || var_F.cols() != cov_aF.size())
    throw std::invalid_argument("rho_squared: shape mismatch");
  if (condition_number_spd(var_F) > 1e12)
    throw std::invalid_argument("rho_squared: var_F is singular or near-singular");
  const Eigen::VectorXd w = var_F.ldlt().solve(cov_aF);
  double rho2 = cov_aF.dot(w) / var_a;
  if (rho2 < 0.0) rho2 = 0.0;
  if (rho2 > 1.0 + 1e-9) rho2 = 1.0 + 1e-9;
  return rho2;
}

}  // namespace rvesel
