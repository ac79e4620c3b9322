#pragma once

// Generalized Dantzig selector
//
//   minimize R(Theta)  subject to  R*( sum_i (<<X_i, Theta>> - y_i) X_i ) <= lambda
//
// solved by primal-dual hybrid gradient on min_x R(x) + F(Hx), where H = A^T A
// is the normal map of the measurement operator and F is the indicator of the
// shifted dual ball {Z : R*(Z - A^T y) <= lambda}.

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gds/measurements.hpp"
#include "gds/spectral.hpp"

namespace gds {

/// Theta -> sum_i <<X_i, Theta>> X_i, stored as the dp x dp Gram matrix or,
/// when n < dp, as the n x dp operator itself (whichever is smaller).
class NormalMap {
 public:
  NormalMap() = default;

  explicit NormalMap(const Design& design) : rows_(design.rows()), cols_(design.cols()) {
    const Eigen::Index m = design.ensemble().vec_size();
    if (design.size() < m)
      op_ = design.operator_matrix();
    else
      gram_ = design.gram();
  }

  explicit NormalMap(const ImplicitDesign& design)
      : rows_(design.rows()), cols_(design.cols()), gram_(design.gram()) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }

  Mat apply(const Mat& theta) const {
    const Vec t = vec(theta);
    if (gram_.size() > 0) return unvec(gram_ * t, rows_, cols_);
    return unvec(op_.transpose() * (op_ * t), rows_, cols_);
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  Mat gram_;
  Mat op_;
};

struct GdsProblem {
  SpectralNorm norm;
  NormalMap normal;
  Mat rhs;  // sum_i y_i X_i
  double lambda;

  /// M(Theta) = sum_i (<<X_i, Theta>> - y_i) X_i.
  Mat residual_map(const Mat& theta) const { return normal.apply(theta) - rhs; }

  template <class DesignT>
  static GdsProblem make(const SpectralNorm& norm, const DesignT& design, const Vec& y, double lambda) {
    if (norm.rows() != design.rows() || norm.cols() != design.cols())
      throw std::invalid_argument("GdsProblem: norm shape does not match the measurement shape");
    if (!(lambda > 0.0)) throw std::invalid_argument("GdsProblem: lambda must be positive");
    return GdsProblem{norm, NormalMap(design), design.adjoint(y), lambda};
  }
};

struct SolverOptions {
  int max_iter = 50000;
  /// Absolute feasibility tolerance; <= 0 selects 1e-7 * R*(M(0)).
  double feas_tol = -1.0;
  double opt_tol = 1e-8;
  int window = 25;
  double step_scale = 0.95;
  /// Ratio between dual and primal step sizes; <= 0 selects
  /// sqrt(min(d, p)) / |A^T y|_F as the starting value.
  double primal_weight = -1.0;
  /// Every this many iterations the weight moves halfway (in log scale)
  /// towards |dy| / |dx| measured since the previous update; 0 keeps it fixed.
  int weight_update_every = 100;
  int log_every = 0;
};

struct IterationLog {
  int iter = 0;
  double objective = 0.0;
  double residual = 0.0;
  double gap = 0.0;
};

struct GdsSolution {
  Mat theta_hat;
  double objective = 0.0;
  double constraint_residual = 0.0;  // R*(M(theta_hat)) - lambda
  double feas_tol = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> primal_dual_gap_history;
  std::vector<IterationLog> log;
};

struct SolutionCheck {
  bool feasible = false;
  double objective = 0.0;
  double constraint_value = 0.0;  // R*(M(theta))
  double residual = 0.0;          // constraint_value - lambda
};

inline SolutionCheck check_solution(const GdsProblem& problem, const Mat& theta, double tol = 0.0) {
  SolutionCheck c;
  c.objective = problem.norm.eval(theta);
  c.constraint_value = problem.norm.dual_eval(problem.residual_map(theta));
  c.residual = c.constraint_value - problem.lambda;
  c.feasible = c.residual <= tol;
  return c;
}

namespace detail {

/// Largest eigenvalue of the normal map via power iteration.
inline double normal_map_norm(const NormalMap& h) {
  Rng rng = make_rng(0x6e6f726dULL);
  Mat x = gaussian_matrix(h.rows(), h.cols(), rng);
  x /= x.norm();
  double est = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Mat y = h.apply(x);
    const double next = y.norm();
    if (next == 0.0) return 0.0;
    x = y / next;
    const bool done = std::abs(next - est) <= 1e-9 * next;
    est = next;
    if (done) break;
  }
  return est;
}

/// Lower bound on the optimal value from a dual candidate y:
/// -<<y, b>> - lambda R(y), after scaling y so that R*(H y) <= 1.
inline double dual_value(const GdsProblem& p, const Mat& y, const Mat& hy) {
  const double dn = p.norm.dual_eval(hy);
  const double s = dn > 1.0 ? 1.0 / dn : 1.0;
  return -s * inner(y, p.rhs) - s * p.lambda * p.norm.eval(y);
}

}  // namespace detail

inline GdsSolution solve(const GdsProblem& problem, const SolverOptions& opts = {}) {
  const SpectralNorm& norm = problem.norm;
  if (!norm.supports_prox())
    throw unsupported_operation("solve: the " + norm.gauge().name() + " gauge has no proximal operator");
  if (!(problem.lambda > 0.0)) throw std::invalid_argument("solve: lambda must be positive");

  const int rows = norm.rows(), cols = norm.cols();
  const Mat& b = problem.rhs;
  const double lambda = problem.lambda;

  GdsSolution sol;
  const double scale = norm.dual_eval(b);
  sol.feas_tol = opts.feas_tol > 0.0 ? opts.feas_tol : 1e-7 * std::max(scale, lambda);

  // Zero is optimal whenever it is feasible.
  if (scale <= lambda) {
    sol.theta_hat = Mat::Zero(rows, cols);
    sol.constraint_residual = scale - lambda;
    sol.converged = true;
    return sol;
  }

  const double lip = 1.01 * detail::normal_map_norm(problem.normal);
  double omega = opts.primal_weight > 0.0
                     ? opts.primal_weight
                     : std::sqrt(static_cast<double>(std::min(rows, cols))) / std::max(b.norm(), 1e-300);
  double tau = opts.step_scale / (lip * omega);
  double sigma = opts.step_scale * omega / lip;

  Mat x = Mat::Zero(rows, cols), hx = Mat::Zero(rows, cols);
  Mat xbar = x, hxbar = hx;
  Mat y = Mat::Zero(rows, cols);
  Mat x_mark = x, y_mark = y;

  std::deque<double> recent;
  double objective = 0.0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    // Dual step: prox of sigma F* via Moreau, F = indicator of b + lambda-ball.
    const Mat u = y + sigma * hxbar;
    const Mat shifted = u / sigma - b;
    y = u - sigma * (b + norm.project_dual_ball(shifted, lambda));
    const Mat hy = problem.normal.apply(y);

    // Primal step: spectral prox of R.
    const Svd s = svd(x - tau * hy);
    const Vec shrunk = norm.gauge().prox(s.sigma, tau);
    const Mat x_new = s.U * shrunk.asDiagonal() * s.V.transpose();
    const Mat hx_new = problem.normal.apply(x_new);
    xbar = 2.0 * x_new - x;
    hxbar = 2.0 * hx_new - hx;
    x = x_new;
    hx = hx_new;
    objective = norm.gauge().eval(shrunk);

    const double residual = norm.dual_eval(hx - b) - lambda;
    recent.push_back(objective);
    if (static_cast<int>(recent.size()) > opts.window + 1) recent.pop_front();

    const bool logging = opts.log_every > 0 && it % opts.log_every == 0;
    const bool window_full = static_cast<int>(recent.size()) == opts.window + 1;
    const bool feasible = residual <= sol.feas_tol;
    const bool stalled =
        window_full && std::abs(recent.back() - recent.front()) <= opts.opt_tol * std::max(objective, 1e-300);
    if (logging || (feasible && stalled) || it % 50 == 0) {
      const double gap = objective - detail::dual_value(problem, y, hy);
      sol.primal_dual_gap_history.push_back(gap);
      if (logging) sol.log.push_back({it, objective, residual, gap});
    }
    sol.iterations = it;
    sol.constraint_residual = residual;
    if (feasible && stalled) {
      sol.converged = true;
      break;
    }

    if (opts.weight_update_every > 0 && it % opts.weight_update_every == 0) {
      const double dx = (x - x_mark).norm(), dy = (y - y_mark).norm();
      if (dx > 0.0 && dy > 0.0) {
        omega = std::sqrt(omega * dy / dx);
        tau = opts.step_scale / (lip * omega);
        sigma = opts.step_scale * omega / lip;
        // Restart the extrapolation from the current point.
        xbar = x;
        hxbar = hx;
      }
      x_mark = x;
      y_mark = y;
    }
  }
  sol.theta_hat = x;
  sol.objective = objective;
  return sol;
}

}  // namespace gds
