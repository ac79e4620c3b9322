#pragma once

// Sub-Gaussian measurement ensembles y_i = <<Theta, X_i>> + omega_i and the
// forward / adjoint maps of the measurement operator.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gds/random.hpp"
#include "gds/spectral.hpp"

namespace gds {

enum class EnsembleKind { Gaussian, Rademacher, SparseSign };

struct Ensemble {
  EnsembleKind kind = EnsembleKind::Gaussian;
  int rows = 1;
  int cols = 1;
  int sparsity = 1;    // SparseSign only: entries are nonzero w.p. 1/sparsity
  double kappa = 1.0;  // sub-Gaussian norm proxy; reported, not enforced

  std::string name() const {
    switch (kind) {
      case EnsembleKind::Gaussian: return "gaussian";
      case EnsembleKind::Rademacher: return "rademacher";
      case EnsembleKind::SparseSign: return "sparse_sign";
    }
    return "unknown";
  }

  Eigen::Index vec_size() const { return static_cast<Eigen::Index>(rows) * cols; }

  void validate() const {
    if (rows < 1 || cols < 1) throw std::invalid_argument("Ensemble: shape must be positive");
    if (kind == EnsembleKind::SparseSign && sparsity < 1)
      throw std::invalid_argument("Ensemble: sparse-sign sparsity must be >= 1");
  }
};

enum class NoiseKind { None, Gaussian, Rademacher };

struct Noise {
  NoiseKind kind = NoiseKind::None;
  double tau = 0.0;

  std::string name() const {
    switch (kind) {
      case NoiseKind::None: return "none";
      case NoiseKind::Gaussian: return "gaussian";
      case NoiseKind::Rademacher: return "rademacher";
    }
    return "unknown";
  }
};

/// vec(X_i) for measurement i, drawn from its own stream so that designs of
/// different sizes share prefixes.
inline Vec sample_row(const Ensemble& e, std::uint64_t seed, Eigen::Index i) {
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(i));
  const Eigen::Index m = e.vec_size();
  Vec row(m);
  switch (e.kind) {
    case EnsembleKind::Gaussian: {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index j = 0; j < m; ++j) row(j) = normal(rng);
      break;
    }
    case EnsembleKind::Rademacher: {
      std::bernoulli_distribution coin(0.5);
      for (Eigen::Index j = 0; j < m; ++j) row(j) = coin(rng) ? 1.0 : -1.0;
      break;
    }
    case EnsembleKind::SparseSign: {
      const double s = e.sparsity;
      const double mag = std::sqrt(s);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (Eigen::Index j = 0; j < m; ++j) {
        const double u = unif(rng);
        row(j) = u < 0.5 / s ? mag : (u < 1.0 / s ? -mag : 0.0);
      }
      break;
    }
  }
  return row;
}

inline Vec vec(const Mat& a) { return Eigen::Map<const Vec>(a.data(), a.size()); }

inline Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

/// Dense measurement design; row i of `operator_matrix()` is vec(X_i).
class Design {
 public:
  Design(Ensemble ensemble, Mat a) : ensemble_(ensemble), a_(std::move(a)) {
    ensemble_.validate();
    if (a_.cols() != ensemble_.vec_size()) throw std::invalid_argument("Design: operator width mismatch");
  }

  static Design sample(const Ensemble& e, Eigen::Index n, std::uint64_t seed) {
    e.validate();
    if (n < 1) throw std::invalid_argument("Design::sample: n must be >= 1");
    Mat a(n, e.vec_size());
    for (Eigen::Index i = 0; i < n; ++i) a.row(i) = sample_row(e, seed, i).transpose();
    return Design(e, std::move(a));
  }

  const Ensemble& ensemble() const noexcept { return ensemble_; }
  Eigen::Index size() const noexcept { return a_.rows(); }
  int rows() const noexcept { return ensemble_.rows; }
  int cols() const noexcept { return ensemble_.cols; }
  const Mat& operator_matrix() const noexcept { return a_; }

  Mat matrix(Eigen::Index i) const { return unvec(a_.row(i).transpose(), rows(), cols()); }

  /// forward_i = <<X_i, theta>>.
  Vec forward(const Mat& theta) const {
    check_shape(theta);
    return a_ * vec(theta);
  }

  /// sum_i u_i X_i.
  Mat adjoint(const Vec& u) const {
    if (u.size() != size()) throw std::invalid_argument("Design::adjoint: length mismatch");
    return unvec(a_.transpose() * u, rows(), cols());
  }

  /// A^T A acting on vec(Theta).
  Mat gram() const { return a_.transpose() * a_; }

 private:
  void check_shape(const Mat& theta) const {
    if (theta.rows() != rows() || theta.cols() != cols())
      throw std::invalid_argument("Design: matrix shape mismatch");
  }

  Ensemble ensemble_;
  Mat a_;
};

/// Design regenerated from (ensemble, n, seed) on every use; never stores the
/// n x dp operator. Identical to Design::sample with the same arguments.
class ImplicitDesign {
 public:
  ImplicitDesign(Ensemble ensemble, Eigen::Index n, std::uint64_t seed) : ensemble_(ensemble), n_(n), seed_(seed) {
    ensemble_.validate();
    if (n < 1) throw std::invalid_argument("ImplicitDesign: n must be >= 1");
  }

  const Ensemble& ensemble() const noexcept { return ensemble_; }
  Eigen::Index size() const noexcept { return n_; }
  int rows() const noexcept { return ensemble_.rows; }
  int cols() const noexcept { return ensemble_.cols; }
  std::uint64_t seed() const noexcept { return seed_; }

  Mat matrix(Eigen::Index i) const { return unvec(sample_row(ensemble_, seed_, i), rows(), cols()); }

  Vec forward(const Mat& theta) const {
    const Vec t = vec(theta);
    Vec out(n_);
    for (Eigen::Index i = 0; i < n_; ++i) out(i) = sample_row(ensemble_, seed_, i).dot(t);
    return out;
  }

  Mat adjoint(const Vec& u) const {
    if (u.size() != n_) throw std::invalid_argument("ImplicitDesign::adjoint: length mismatch");
    Vec acc = Vec::Zero(ensemble_.vec_size());
    for (Eigen::Index i = 0; i < n_; ++i) acc += u(i) * sample_row(ensemble_, seed_, i);
    return unvec(acc, rows(), cols());
  }

  Mat gram() const {
    const Eigen::Index m = ensemble_.vec_size();
    Mat g = Mat::Zero(m, m);
    for (Eigen::Index i = 0; i < n_; ++i) {
      const Vec row = sample_row(ensemble_, seed_, i);
      g.selfadjointView<Eigen::Lower>().rankUpdate(row);
    }
    return g.selfadjointView<Eigen::Lower>();
  }

  Design materialize() const { return Design::sample(ensemble_, n_, seed_); }

 private:
  Ensemble ensemble_;
  Eigen::Index n_;
  std::uint64_t seed_;
};

inline Vec sample_noise(const Noise& noise, Eigen::Index n, std::uint64_t seed) {
  Vec omega = Vec::Zero(n);
  if (noise.kind == NoiseKind::None || noise.tau == 0.0) return omega;
  Rng rng = make_rng(seed, 0x6e6f697365ULL);
  if (noise.kind == NoiseKind::Gaussian) {
    std::normal_distribution<double> normal(0.0, noise.tau);
    for (Eigen::Index i = 0; i < n; ++i) omega(i) = normal(rng);
  } else {
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index i = 0; i < n; ++i) omega(i) = coin(rng) ? noise.tau : -noise.tau;
  }
  return omega;
}

/// y = forward(theta) + omega with omega drawn from `noise` under `seed`.
template <class DesignT>
Vec observe(const DesignT& design, const Mat& theta, const Noise& noise, std::uint64_t seed) {
  if (theta.rows() != design.rows() || theta.cols() != design.cols())
    throw std::invalid_argument("observe: ground-truth shape mismatch");
  return design.forward(theta) + sample_noise(noise, design.size(), seed);
}

struct PowerIterationResult {
  double estimate = 0.0;
  int iterations = 0;
  std::vector<double> history;
};

/// Power iteration for |A^T A|_op (= |A|_op^2). Stops once successive
/// estimates agree to `rel_tol` or after `max_iter` steps.
template <class DesignT>
PowerIterationResult operator_norm_estimate(const DesignT& design, double rel_tol = 1e-3, int max_iter = 200) {
  Rng rng = make_rng(0x706f776572ULL);
  Mat x = gaussian_matrix(design.rows(), design.cols(), rng);
  x /= x.norm();
  PowerIterationResult out;
  for (int it = 0; it < max_iter; ++it) {
    Mat y = design.adjoint(design.forward(x));
    const double est = y.norm();
    out.history.push_back(est);
    out.iterations = it + 1;
    const double prev = out.estimate;
    out.estimate = est;
    if (est == 0.0) break;
    x = y / est;
    if (it > 0 && std::abs(est - prev) <= rel_tol * est) break;
  }
  return out;
}

/// Measurements generated from a ground truth. Matrices X_i are regenerated
/// from (ensemble, n, seed); only y is stored.
struct MeasurementSet {
  Ensemble ensemble;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
  Noise noise;
  std::uint64_t noise_seed = 0;
  Vec y;

  ImplicitDesign implicit_design() const { return {ensemble, n, seed}; }
  Design design() const { return Design::sample(ensemble, n, seed); }
};

inline MeasurementSet generate_measurements(const Ensemble& e, Eigen::Index n, const Mat& theta, const Noise& noise,
                                            std::uint64_t seed, std::uint64_t noise_seed) {
  MeasurementSet m{e, n, seed, noise, noise_seed, {}};
  m.y = observe(m.design(), theta, noise, noise_seed);
  return m;
}

}  // namespace gds
