#pragma once

// Unitarily invariant matrix norms R(Theta) = f(sigma(Theta)) obtained by
// lifting a symmetric gauge f to singular values, plus the rank-r subspace
// decomposition around a reference matrix used by the geometry bounds.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "gds/gauge.hpp"

namespace gds {

using Mat = Eigen::MatrixXd;

/// Thin SVD, Theta = U * diag(sigma) * V^T with sigma descending.
struct Svd {
  Mat U;
  Vec sigma;
  Mat V;
};

inline Svd svd(const Mat& a) {
  Eigen::JacobiSVD<Mat> s(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {s.matrixU(), s.singularValues(), s.matrixV()};
}

inline Vec singular_values(const Mat& a) {
  return Eigen::JacobiSVD<Mat>(a).singularValues();
}

/// Frobenius inner product <<A, B>> = tr(A^T B).
inline double inner(const Mat& a, const Mat& b) { return (a.array() * b.array()).sum(); }

struct SubspaceDecomposition {
  Mat U;      // d x r
  Mat V;      // p x r
  int rank = 0;
  Vec sigma;  // singular values of the reference, zeroed past `rank`
  Vec theta;  // polar vector (subgradient of f at sigma), descending
  Vec w;      // (theta_1..theta_r, 0, ...)
  Vec z;      // (theta_{r+1}..theta_d, 0, ...)
  Rho rho;

  /// Projection onto M1 = {col in span U, row in span V}.
  Mat P1(const Mat& a) const { return U * (U.transpose() * a * V) * V.transpose(); }

  /// Projection onto M2 = {col in span(U)^perp, row in span(V)^perp}.
  Mat P2(const Mat& a) const {
    const Mat left = a - U * (U.transpose() * a);
    return left - (left * V) * V.transpose();
  }

  /// Projection onto the orthogonal complement of M1 + M2.
  Mat Pperp(const Mat& a) const { return a - P1(a) - P2(a); }

  /// Gamma = U diag(theta_1..theta_r) V^T.
  Mat gamma() const { return U * theta.head(rank).asDiagonal() * V.transpose(); }

  /// Subspace spectral OWL seminorm |P1 a|_w + |P2 a|_z.
  double seminorm(const Mat& a) const {
    return owl_eval(singular_values(P1(a)), w) + owl_eval(singular_values(P2(a)), z);
  }
};

class SpectralNorm {
 public:
  SpectralNorm(Gauge gauge, int rows, int cols) : gauge_(std::move(gauge)), rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("SpectralNorm: shape must be positive");
    if (gauge_.dim() != std::min(rows, cols))
      throw std::invalid_argument("SpectralNorm: gauge dimension must equal min(rows, cols)");
  }

  const Gauge& gauge() const noexcept { return gauge_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  bool supports_prox() const noexcept { return gauge_.supports_prox(); }

  double eval(const Mat& a) const {
    check_shape(a, "SpectralNorm::eval");
    return gauge_.eval(singular_values(a));
  }

  double dual_eval(const Mat& a) const {
    check_shape(a, "SpectralNorm::dual_eval");
    return gauge_.dual_eval(singular_values(a));
  }

  Mat prox(const Mat& a, double t) const {
    check_shape(a, "SpectralNorm::prox");
    const Svd s = svd(a);
    return s.U * gauge_.prox(s.sigma, t).asDiagonal() * s.V.transpose();
  }

  /// Projection onto {Z : R*(Z) <= radius}.
  Mat project_dual_ball(const Mat& a, double radius) const {
    check_shape(a, "SpectralNorm::project_dual_ball");
    const Svd s = svd(a);
    return s.U * gauge_.project_dual_ball(s.sigma, radius).asDiagonal() * s.V.transpose();
  }

  /// Singular values at or below rank_tol count as zero. A negative rank_tol
  /// selects max(rows, cols) * eps * sigma_1.
  SubspaceDecomposition decompose(const Mat& reference, double rank_tol = -1.0) const {
    check_shape(reference, "SpectralNorm::decompose");
    Eigen::JacobiSVD<Mat> s(reference, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec sv = s.singularValues();
    if (sv.size() == 0 || !(sv(0) > 0.0)) throw std::invalid_argument("SpectralNorm::decompose: reference is zero");
    if (rank_tol < 0.0) rank_tol = std::max(rows_, cols_) * std::numeric_limits<double>::epsilon() * sv(0);

    SubspaceDecomposition out;
    const Eigen::Index d = sv.size();
    out.rank = static_cast<int>((sv.array() > rank_tol).count());
    out.U = s.matrixU().leftCols(out.rank);
    out.V = s.matrixV().leftCols(out.rank);
    out.sigma = Vec::Zero(d);
    out.sigma.head(out.rank) = sv.head(out.rank);
    out.theta = gauge_.polar(out.sigma);
    out.w = Vec::Zero(d);
    out.w.head(out.rank) = out.theta.head(out.rank);
    out.z = Vec::Zero(d);
    out.z.head(d - out.rank) = out.theta.tail(d - out.rank);
    out.rho = gds::rho(out.theta);
    return out;
  }

 private:
  void check_shape(const Mat& a, const char* what) const {
    if (a.rows() != rows_ || a.cols() != cols_)
      throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows_) + "x" +
                                  std::to_string(cols_) + " matrix, got " + std::to_string(a.rows()) + "x" +
                                  std::to_string(a.cols()));
  }

  Gauge gauge_;
  int rows_;
  int cols_;
};

}  // namespace gds
