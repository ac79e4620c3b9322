#pragma once

// Geometric measures behind the recovery error bound
//
//   |Theta_hat - Theta*|_F <= 2 Psi_R(Theta*) lambda / alpha
//
// closed-form upper bounds for the restricted compatibility constant and the
// Gaussian widths of the error cone and the unit ball, Monte-Carlo estimates
// of both widths, and the derived predictions for alpha and lambda.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gds/measurements.hpp"
#include "gds/parallel.hpp"
#include "gds/random.hpp"
#include "gds/spectral.hpp"

namespace gds {

struct McEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  int samples = 0;
};

namespace detail {

struct MeanStats {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStats mean_stats(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= std::max(n - 1.0, 1.0);
  return {mean, std::sqrt(var / n)};
}

/// Minimizer of a convex function on [lo, hi] by golden-section search.
template <class F>
double golden_section(F&& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d, d = c, fd = fc;
      c = b - inv_phi * (b - a), fc = f(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + inv_phi * (b - a), fd = f(d);
    }
  }
  const double mid = 0.5 * (a + b);
  // The bracket ends are candidates too when the minimum sits on the boundary.
  double best = mid, fbest = f(mid);
  for (double t : {lo, hi}) {
    const double ft = f(t);
    if (ft < fbest) best = t, fbest = ft;
  }
  return best;
}

}  // namespace detail

/// Upper bound on Psi_R(Theta*) for a rank-r reference:
///   2 phi(r) + max(eta2, eta1 (1 + rho) sqrt(r)).
/// Empty when rho is infinite and eta1 > 0 (the bound is vacuous).
inline std::optional<double> psi_bound(const GaugeConstants& c, int r, Rho rho) {
  if (r < 1) throw std::invalid_argument("psi_bound: rank must be >= 1");
  if (rho.infinite && c.eta1 > 0.0) return std::nullopt;
  const double second = c.eta1 > 0.0 ? std::max(c.eta2, c.eta1 * (1.0 + rho.value) * std::sqrt(r)) : c.eta2;
  return 2.0 * c.phi(r) + second;
}

/// Upper bound on the Gaussian width of the error cone intersected with the
/// unit sphere: min(sqrt(dp), sqrt((2 rho^2 + 1)(d + p - r) r)).
inline double width_cone_bound(int d, int p, int r, Rho rho) {
  if (d > p) std::swap(d, p);
  if (r < 1 || r > d) throw std::invalid_argument("width_cone_bound: need 1 <= r <= min(d, p)");
  const double full = std::sqrt(static_cast<double>(d) * p);
  if (rho.infinite) return full;
  return std::min(full, std::sqrt((2.0 * rho.value * rho.value + 1.0) * (d + p - r) * r));
}

/// Statistical-dimension estimate of the cone width. Per sample G the value
///   min_{t >= 0} |G1 - t Gamma|_F^2 + sum_i (sigma_i(G2) - t z_i)_+^2  +  |G_perp|_F^2
/// is an upper bound on the squared distance from G to the polar cone; the
/// square root of its mean upper-bounds the width.
inline McEstimate width_cone_mc(const SubspaceDecomposition& dec, int samples, std::uint64_t seed, int threads = 1) {
  if (samples < 100) throw std::invalid_argument("width_cone_mc: need at least 100 samples");
  const Eigen::Index d = dec.U.rows(), p = dec.V.rows();
  const Mat gamma = dec.gamma();
  const double gamma_sq = gamma.squaredNorm();
  const double theta_min = dec.theta.minCoeff();
  const int tail = static_cast<int>(std::min(d, p)) - dec.rank;

  std::vector<double> values(static_cast<std::size_t>(samples));
  parallel_for(values.size(), threads, [&](std::size_t j) {
    Rng rng = make_rng(seed, j);
    const Mat g = gaussian_matrix(d, p, rng);
    const Mat g1 = dec.P1(g), g2 = dec.P2(g);
    const double perp_sq = (g - g1 - g2).squaredNorm();
    const double g1_sq = g1.squaredNorm();
    const double cross = inner(g1, gamma);
    const Vec s2 = tail > 0 ? Vec(singular_values(g2)) : Vec();

    auto objective = [&](double t) {
      double val = g1_sq - 2.0 * t * cross + t * t * gamma_sq;
      for (int i = 0; i < tail; ++i) {
        const double excess = s2(i) - t * dec.z(i);
        if (excess > 0.0) val += excess * excess;
      }
      return val;
    };
    // The derivative is nonnegative beyond t_a, so [0, t_a] brackets the minimizer.
    double zs = 0.0;
    for (int i = 0; i < tail; ++i) zs += dec.z(i) * s2(i);
    double t_hi = std::max((cross + zs) / gamma_sq, 0.0);
    if (tail > 0 && theta_min > 0.0) t_hi = std::max(t_hi, 2.0 * s2(0) / theta_min);
    const double t_star = t_hi > 0.0 ? detail::golden_section(objective, 0.0, t_hi, 1e-8 * std::max(1.0, t_hi)) : 0.0;
    values[j] = objective(t_star) + perp_sq;
  });

  const auto stats = detail::mean_stats(values);
  const double est = std::sqrt(stats.mean);
  return {est, est > 0.0 ? stats.stderr_ / (2.0 * est) : 0.0, samples};
}

/// (sqrt(d) + sqrt(p)) / nu.
inline double width_ball_bound(double nu, int d, int p) {
  if (!(nu > 0.0)) throw std::invalid_argument("width_ball_bound: nu must be positive");
  return (std::sqrt(static_cast<double>(d)) + std::sqrt(static_cast<double>(p))) / nu;
}

/// Monte-Carlo mean of R*(G), the Gaussian width of the unit ball of R.
inline McEstimate width_ball_mc(const SpectralNorm& norm, int samples, std::uint64_t seed, int threads = 1) {
  if (samples < 100) throw std::invalid_argument("width_ball_mc: need at least 100 samples");
  std::vector<double> values(static_cast<std::size_t>(samples));
  parallel_for(values.size(), threads, [&](std::size_t j) {
    Rng rng = make_rng(seed, j);
    values[j] = norm.dual_eval(gaussian_matrix(norm.rows(), norm.cols(), rng));
  });
  const auto stats = detail::mean_stats(values);
  return {stats.mean, stats.stderr_, samples};
}

/// Predicted restricted strong convexity constant for unnormalized sums:
/// n * max(0, 1 - xi kappa^2 w / sqrt(n)). Zero means vacuous at this n.
inline double alpha_pred(double kappa, double n, double width_cone, double xi) {
  if (n < 1.0) throw std::invalid_argument("alpha_pred: n must be >= 1");
  return n * std::max(0.0, 1.0 - xi * kappa * kappa * width_cone / std::sqrt(n));
}

/// 2 psi lambda / alpha; empty when alpha <= 0.
inline std::optional<double> error_bound_pred(double psi, double lambda, double alpha) {
  if (!(alpha > 0.0)) return std::nullopt;
  return 2.0 * psi * lambda / alpha;
}

inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

/// R*(sum_i omega_i X_i) for one fresh draw of measurements and noise.
inline double noise_correlation(const SpectralNorm& norm, const Ensemble& e, Eigen::Index n, const Noise& noise,
                                std::uint64_t design_seed, std::uint64_t noise_seed) {
  const Vec omega = sample_noise(noise, n, noise_seed);
  Vec acc = Vec::Zero(e.vec_size());
  for (Eigen::Index i = 0; i < n; ++i)
    if (omega(i) != 0.0) acc += omega(i) * sample_row(e, design_seed, i);
  return norm.dual_eval(unvec(acc, e.rows, e.cols));
}

struct LambdaRules {
  double lambda_theory = 0.0;
  double lambda_empirical = 0.0;
  std::vector<double> draws;
};

/// lambda_theory = c0 kappa tau sqrt(n) (sqrt(d) + sqrt(p)) / nu;
/// lambda_empirical = `q` quantile of R*(sum_i omega_i X_i) over fresh draws.
inline LambdaRules lambda_rules(const SpectralNorm& norm, const Ensemble& e, Eigen::Index n, const Noise& noise,
                                double kappa, double c0, int mc_samples, double q, std::uint64_t seed,
                                int threads = 1) {
  if (noise.tau < 0.0) throw std::invalid_argument("lambda_rules: tau must be nonnegative");
  LambdaRules out;
  const double tau = noise.kind == NoiseKind::None ? 0.0 : noise.tau;
  out.lambda_theory = c0 * kappa * tau * std::sqrt(static_cast<double>(n)) *
                      width_ball_bound(norm.gauge().constants().nu, norm.rows(), norm.cols());
  if (tau == 0.0 || mc_samples < 1) return out;
  out.draws.resize(static_cast<std::size_t>(mc_samples));
  parallel_for(out.draws.size(), threads, [&](std::size_t j) {
    out.draws[j] = noise_correlation(norm, e, n, noise, stream_seed(seed, j, 1), stream_seed(seed, j, 2));
  });
  out.lambda_empirical = quantile(out.draws, q);
  return out;
}

/// Smallest eigenvalue of the normal map restricted to the tangent space
/// T = (M2)^perp of a decomposition, divided by n. T lies inside the error
/// cone superset, so this upper-bounds the per-sample restricted eigenvalue.
inline double tangent_restricted_eigenvalue(const Mat& gram, Eigen::Index n, const SubspaceDecomposition& dec) {
  const Eigen::Index d = dec.U.rows(), p = dec.V.rows(), m = d * p;
  const Mat pu = Mat::Identity(d, d) - dec.U * dec.U.transpose();
  const Mat pv = Mat::Identity(p, p) - dec.V * dec.V.transpose();
  // vec(Pu X Pv) = (Pv kron Pu) vec(X).
  Mat proj = Mat::Identity(m, m);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b < p; ++b) proj.block(a * d, b * d, d, d) -= pv(a, b) * pu;
  Eigen::SelfAdjointEigenSolver<Mat> eig(proj);
  const Eigen::Index dim_t = (eig.eigenvalues().array() > 0.5).count();
  const Mat basis = eig.eigenvectors().rightCols(dim_t);
  const Mat restricted = basis.transpose() * gram * basis;
  return Eigen::SelfAdjointEigenSolver<Mat>(restricted, Eigen::EigenvaluesOnly).eigenvalues()(0) /
         static_cast<double>(n);
}

/// Smallest observed (1/n) sum_i <<X_i, D>>^2 / |D|_F^2 over random directions D
/// in {D : |P2 D|_z <= |P1 D|_w}. A heuristic diagnostic: random directions
/// rarely approach the infimum over the cone.
template <class DesignT>
double rsc_diagnostic(const DesignT& design, const SubspaceDecomposition& dec, int samples, std::uint64_t seed) {
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < samples; ++j) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(j));
    const Mat g = gaussian_matrix(design.rows(), design.cols(), rng);
    const Mat g1 = dec.P1(g), g2 = dec.P2(g);
    const double lhs = owl_eval(singular_values(g2), dec.z), rhs = owl_eval(singular_values(g1), dec.w);
    const double s = lhs > rhs && lhs > 0.0 ? rhs / lhs : 1.0;
    const Mat delta = g - g2 + s * g2;
    const double ratio = design.forward(delta).squaredNorm() / (static_cast<double>(design.size()) * delta.squaredNorm());
    best = std::min(best, ratio);
  }
  return best;
}

}  // namespace gds
