#pragma once

// Symmetric gauge functions on R^d: norms invariant under coordinate
// permutations and sign flips. Each gauge provides evaluation, dual
// evaluation, proximal map, dual-ball projection, the polar operator and the
// envelope constants consumed by the recovery bounds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gds/random.hpp"

namespace gds {

using Vec = Eigen::VectorXd;

class unsupported_operation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class GaugeKind { L1, L2, OWL, KSupport, KyFan };

/// Ratio theta_max / theta_min of a polar vector. `infinite` is set when
/// theta_min == 0; `value` is meaningless in that case.
struct Rho {
  double value = 1.0;
  bool infinite = false;

  static Rho unbounded() { return {std::numeric_limits<double>::quiet_NaN(), true}; }
  static Rho finite(double v) { return {v, false}; }
};

/// Envelope constants of a gauge f on R^d:
///   f(v) <= max(eta1 |v|_1, eta2 |v|_2),  f(v) >= nu |v|_1,
///   f(v) <= phi(r) |v|_2 for every r-sparse v.
struct GaugeConstants {
  double eta1 = 0.0;
  double eta2 = 0.0;
  double nu = 0.0;
  std::function<double(int)> phi;
};

namespace detail {

inline void check_dim(const Vec& v, int dim, const char* what) {
  if (v.size() != dim)
    throw std::invalid_argument(std::string(what) + ": expected vector of length " +
                                std::to_string(dim) + ", got " + std::to_string(v.size()));
}

/// Indices that sort |v| in descending order (stable).
inline std::vector<Eigen::Index> abs_desc_order(const Vec& v) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(v(a)) > std::abs(v(b)); });
  return idx;
}

inline Vec gather_abs(const Vec& v, const std::vector<Eigen::Index>& order) {
  Vec z(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) z(static_cast<Eigen::Index>(i)) = std::abs(v(order[i]));
  return z;
}

/// Inverse of gather_abs: puts sorted magnitudes back in place with v's signs.
inline Vec scatter_signed(const Vec& mags, const Vec& v, const std::vector<Eigen::Index>& order) {
  Vec out(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto j = order[i];
    out(j) = v(j) < 0 ? -mags(static_cast<Eigen::Index>(i)) : mags(static_cast<Eigen::Index>(i));
  }
  return out;
}

inline Vec abs_desc(const Vec& v) {
  Vec z = v.cwiseAbs();
  std::sort(z.data(), z.data() + z.size(), std::greater<>());
  return z;
}

inline double top_k_sq(const Vec& z_sorted, int k) {
  return z_sorted.head(std::min<Eigen::Index>(k, z_sorted.size())).squaredNorm();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ordered weighted l1 (OWL) family. Weights are nonnegative and descending;
// these routines also serve as the seminorm building block when trailing
// weights vanish.

inline double owl_eval(const Vec& v, const Vec& w) {
  return detail::abs_desc(v).dot(w);
}

/// Dual of the OWL norm: max_j (sum_{i<=j} |v|_(i)) / (sum_{i<=j} w_i).
/// Requires w(0) > 0.
inline double owl_dual(const Vec& v, const Vec& w) {
  const Vec z = detail::abs_desc(v);
  double best = 0.0, sz = 0.0, sw = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    sz += z(j);
    sw += w(j);
    if (sw > 0.0) best = std::max(best, sz / sw);
  }
  return best;
}

/// Nonincreasing isotonic regression of u (pool adjacent violators).
inline Vec pav_nonincreasing(const Vec& u) {
  std::vector<double> sum;
  std::vector<Eigen::Index> count;
  sum.reserve(static_cast<std::size_t>(u.size()));
  count.reserve(static_cast<std::size_t>(u.size()));
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    sum.push_back(u(i));
    count.push_back(1);
    while (sum.size() > 1) {
      const std::size_t b = sum.size() - 1;
      if (sum[b - 1] / static_cast<double>(count[b - 1]) > sum[b] / static_cast<double>(count[b])) break;
      sum[b - 1] += sum[b];
      count[b - 1] += count[b];
      sum.pop_back();
      count.pop_back();
    }
  }
  Vec out(u.size());
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < sum.size(); ++b) {
    const double avg = sum[b] / static_cast<double>(count[b]);
    for (Eigen::Index c = 0; c < count[b]; ++c) out(pos++) = avg;
  }
  return out;
}

inline Vec owl_prox(const Vec& v, const Vec& w, double t) {
  const auto order = detail::abs_desc_order(v);
  const Vec z = detail::gather_abs(v, order);
  const Vec fit = pav_nonincreasing(z - t * w).cwiseMax(0.0);
  return detail::scatter_signed(fit, v, order);
}

/// Subgradient of the OWL norm at a sorted nonnegative sigma: w averaged over
/// each block of tied sigma entries (the zero tail is one block).
inline Vec owl_polar(const Vec& sigma, const Vec& w, double tie_tol) {
  const Eigen::Index d = sigma.size();
  const double scale = d > 0 ? sigma(0) : 0.0;
  Vec theta(d);
  Eigen::Index start = 0;
  while (start < d) {
    Eigen::Index end = start + 1;
    while (end < d && sigma(end - 1) - sigma(end) <= tie_tol * scale) ++end;
    theta.segment(start, end - start).setConstant(w.segment(start, end - start).mean());
    start = end;
  }
  return theta;
}

// ---------------------------------------------------------------------------
// k-support norm.

namespace detail {

struct KSupportSplit {
  Eigen::Index head = 0;  // number of leading entries kept individually
  double level = 0.0;     // common level of the pooled tail
  double value = 0.0;     // norm value
};

/// Dual norm (top-k l2) of the vector made of z.head(head) followed by
/// (d - head) copies of `level`. Both parts are descending.
inline double pooled_dual(const Vec& z, Eigen::Index head, double level, int k) {
  double sq = 0.0;
  Eigen::Index taken = 0, i = 0;
  const Eigen::Index tail = z.size() - head;
  Eigen::Index tail_used = 0;
  while (taken < k && (i < head || tail_used < tail)) {
    if (i < head && (tail_used >= tail || z(i) >= level)) {
      sq += z(i) * z(i);
      ++i;
    } else {
      sq += level * level;
      ++tail_used;
    }
    ++taken;
  }
  return std::sqrt(sq);
}

/// Splits a descending nonnegative z into the leading block kept as-is and a
/// pooled tail. The split index r (0..k-1) satisfies
///   z_{k-r-1} >= S/(r+1) >= z_{k-r},  S = sum_{i>=k-r} z_i  (1-based),
/// and then |z|^2_ksp = sum_{i<k-r} z_i^2 + S^2/(r+1).
inline KSupportSplit ksupport_split(const Vec& z, int k) {
  const Eigen::Index d = z.size();
  Vec suffix(d + 1);
  suffix(d) = 0.0;
  for (Eigen::Index i = d - 1; i >= 0; --i) suffix(i) = suffix(i + 1) + z(i);
  Vec prefix_sq(d + 1);
  prefix_sq(0) = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) prefix_sq(i + 1) = prefix_sq(i) + z(i) * z(i);

  for (int r = 0; r < k; ++r) {
    const Eigen::Index s = k - r - 1;  // 0-based start of the pooled tail
    const double level = suffix(s) / (r + 1);
    const bool left = (s == 0) || z(s - 1) >= level;
    const bool right = level >= z(s);
    if (left && right)
      return {s, level, std::sqrt(prefix_sq(s) + suffix(s) * suffix(s) / (r + 1))};
  }
  // Rounding at exact ties can defeat both comparisons. Every candidate u_r
  // gives the lower bound <u_r, z> / f*(u_r) and the valid split attains the
  // norm, so the largest candidate is the value.
  KSupportSplit best;
  best.value = -1.0;
  for (int r = 0; r < k; ++r) {
    const Eigen::Index s = k - r - 1;
    const double level = suffix(s) / (r + 1);
    const double dual = pooled_dual(z, s, level, k);
    const double val = dual > 0.0 ? (prefix_sq(s) + level * suffix(s)) / dual : 0.0;
    if (val > best.value) best = {s, level, val};
  }
  return best;
}

/// Solution of min 1/2|x - z|^2 + (c/2) * (sum of the k largest x_i^2) for a
/// descending nonnegative z. The k largest entries are shrunk by 1/(1+c) except
/// for a tied group at level theta straddling position k.
inline Vec ksupport_dual_sq_prox(const Vec& z, int k, double c) {
  if (c <= 0.0) return z;
  const Eigen::Index positives = (z.array() > 0.0).count();
  if (positives <= k) return z / (1.0 + c);

  // In phi = 1/theta the multiplier count h(phi) = sum clamp((z_i phi - 1)/c, 0, 1)
  // is nondecreasing and piecewise linear with breakpoints 1/z_i, (1+c)/z_i.
  std::vector<double> breaks;
  breaks.reserve(2 * static_cast<std::size_t>(positives));
  for (Eigen::Index i = 0; i < positives; ++i) {
    breaks.push_back(1.0 / z(i));
    breaks.push_back((1.0 + c) / z(i));
  }
  std::sort(breaks.begin(), breaks.end());
  auto h = [&](double phi) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < positives; ++i) s += std::clamp((z(i) * phi - 1.0) / c, 0.0, 1.0);
    return s;
  };
  double phi = breaks.back();
  double prev_phi = 0.0, prev_h = 0.0;
  for (double b : breaks) {
    const double hb = h(b);
    if (hb >= k) {
      phi = hb > prev_h ? prev_phi + (k - prev_h) * (b - prev_phi) / (hb - prev_h) : b;
      break;
    }
    prev_phi = b;
    prev_h = hb;
  }
  const double theta = 1.0 / phi;
  Vec x(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double s = z(i) > 0.0 ? std::clamp((z(i) - theta) / (c * theta), 0.0, 1.0) : 0.0;
    x(i) = z(i) / (1.0 + c * s);
  }
  return x;
}

}  // namespace detail

inline double ksupport_eval(const Vec& v, int k) {
  return detail::ksupport_split(detail::abs_desc(v), k).value;
}

inline double ksupport_dual(const Vec& v, int k) {
  return std::sqrt(detail::top_k_sq(detail::abs_desc(v), k));
}

/// Euclidean projection onto {x : top-k l2 norm of x <= radius}; bisection on
/// the multiplier of the squared constraint.
inline Vec ksupport_project_dual_ball(const Vec& v, int k, double radius) {
  const auto order = detail::abs_desc_order(v);
  const Vec z = detail::gather_abs(v, order);
  const double target = radius * radius;
  if (detail::top_k_sq(z, k) <= target) return v;
  if (radius <= 0.0) return Vec::Zero(v.size());

  auto excess = [&](double c) { return detail::top_k_sq(detail::ksupport_dual_sq_prox(z, k, c), k); };
  double lo = 0.0, hi = 1.0;
  while (excess(hi) > target) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) > target ? lo : hi) = mid;
  }
  return detail::scatter_signed(detail::ksupport_dual_sq_prox(z, k, hi), v, order);
}

inline Vec ksupport_polar(const Vec& sigma, int k) {
  const Eigen::Index d = sigma.size();
  const auto split = detail::ksupport_split(sigma, k);
  Vec u(d);
  u.head(split.head) = sigma.head(split.head);
  u.tail(d - split.head).setConstant(split.level);
  const double dual = std::sqrt(detail::top_k_sq(u, k));
  if (dual <= 0.0) return Vec::Constant(d, 1.0 / std::sqrt(static_cast<double>(std::min<Eigen::Index>(k, d))));
  return u / dual;
}

// ---------------------------------------------------------------------------

class Gauge {
 public:
  static Gauge l1(int dim) { return Gauge(GaugeKind::L1, dim, dim, Vec::Ones(checked(dim))); }
  static Gauge l2(int dim) { return Gauge(GaugeKind::L2, dim, dim, Vec()); }

  /// Weights are canonicalized to |w| sorted descending.
  static Gauge owl(const Vec& weights) {
    if (weights.size() == 0) throw std::invalid_argument("OWL: empty weight vector");
    Vec w = detail::abs_desc(weights);
    if (!(w(0) > 0.0)) throw std::invalid_argument("OWL: leading weight must be positive");
    const int dim = static_cast<int>(w.size());
    return Gauge(GaugeKind::OWL, dim, dim, std::move(w));
  }

  static Gauge ksupport(int k, int dim) {
    check_k(k, dim, "k-support");
    return Gauge(GaugeKind::KSupport, dim, k, Vec());
  }

  static Gauge ky_fan(int k, int dim) {
    check_k(k, dim, "Ky Fan");
    Vec w = Vec::Zero(dim);
    w.head(k).setOnes();
    return Gauge(GaugeKind::KyFan, dim, k, std::move(w));
  }

  GaugeKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  int k() const noexcept { return k_; }
  /// OWL-form weights for L1, OWL and Ky Fan gauges; empty otherwise.
  const Vec& weights() const noexcept { return weights_; }

  std::string name() const {
    switch (kind_) {
      case GaugeKind::L1: return "l1";
      case GaugeKind::L2: return "l2";
      case GaugeKind::OWL: return "owl";
      case GaugeKind::KSupport: return "ksupport";
      case GaugeKind::KyFan: return "kyfan";
    }
    return "unknown";
  }

  bool supports_prox() const noexcept { return kind_ != GaugeKind::KyFan; }

  double eval(const Vec& v) const {
    detail::check_dim(v, dim_, "Gauge::eval");
    switch (kind_) {
      case GaugeKind::L1: return v.lpNorm<1>();
      case GaugeKind::L2: return v.norm();
      case GaugeKind::KSupport: return ksupport_eval(v, k_);
      case GaugeKind::OWL:
      case GaugeKind::KyFan: return owl_eval(v, weights_);
    }
    return 0.0;
  }

  double dual_eval(const Vec& v) const {
    detail::check_dim(v, dim_, "Gauge::dual_eval");
    if (v.size() == 0) return 0.0;
    switch (kind_) {
      case GaugeKind::L1: return v.lpNorm<Eigen::Infinity>();
      case GaugeKind::L2: return v.norm();
      case GaugeKind::KSupport: return ksupport_dual(v, k_);
      case GaugeKind::KyFan: return std::max(v.lpNorm<Eigen::Infinity>(), v.lpNorm<1>() / k_);
      case GaugeKind::OWL: return owl_dual(v, weights_);
    }
    return 0.0;
  }

  /// argmin_x 1/2 |x - v|^2 + t f(x).
  Vec prox(const Vec& v, double t) const {
    detail::check_dim(v, dim_, "Gauge::prox");
    if (!(t > 0.0)) throw std::invalid_argument("Gauge::prox: step must be positive");
    switch (kind_) {
      case GaugeKind::L1:
        return v.array().sign() * (v.array().abs() - t).max(0.0);
      case GaugeKind::L2: {
        const double nrm = v.norm();
        return nrm > t ? Vec(v * (1.0 - t / nrm)) : Vec(Vec::Zero(v.size()));
      }
      case GaugeKind::OWL: return owl_prox(v, weights_, t);
      case GaugeKind::KSupport: return v - ksupport_project_dual_ball(v, k_, t);
      case GaugeKind::KyFan: break;
    }
    throw unsupported_operation("Gauge::prox: not available for the Ky Fan gauge");
  }

  /// Projection onto {x : f*(x) <= radius}.
  Vec project_dual_ball(const Vec& v, double radius) const {
    detail::check_dim(v, dim_, "Gauge::project_dual_ball");
    if (!(radius > 0.0)) throw std::invalid_argument("Gauge::project_dual_ball: radius must be positive");
    switch (kind_) {
      case GaugeKind::L1: return v.cwiseMax(-radius).cwiseMin(radius);
      case GaugeKind::L2: {
        const double nrm = v.norm();
        return nrm > radius ? Vec(v * (radius / nrm)) : v;
      }
      case GaugeKind::KSupport: return ksupport_project_dual_ball(v, k_, radius);
      case GaugeKind::OWL: return v - owl_prox(v, weights_, radius);
      case GaugeKind::KyFan: break;
    }
    throw unsupported_operation("Gauge::project_dual_ball: not available for the Ky Fan gauge");
  }

  /// Polar operator: a maximizer of <x, sigma> over the dual unit ball,
  /// returned nonnegative and descending. Ties between entries of sigma
  /// (relative to sigma(0) by `tie_tol`) are resolved to the maximal-support
  /// representative.
  Vec polar(const Vec& sigma, double tie_tol = 1e-12) const {
    detail::check_dim(sigma, dim_, "Gauge::polar");
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      if (sigma(i) < 0.0) throw std::invalid_argument("Gauge::polar: sigma must be nonnegative");
      if (i > 0 && sigma(i) > sigma(i - 1)) throw std::invalid_argument("Gauge::polar: sigma must be sorted descending");
    }
    switch (kind_) {
      case GaugeKind::L2: {
        const double nrm = sigma.norm();
        return nrm > 0.0 ? Vec(sigma / nrm) : Vec(Vec::Constant(dim_, 1.0 / std::sqrt(dim_)));
      }
      case GaugeKind::KSupport: return ksupport_polar(sigma, k_);
      case GaugeKind::L1:
      case GaugeKind::OWL:
      case GaugeKind::KyFan: return owl_polar(sigma, weights_, tie_tol);
    }
    return {};
  }

  /// Envelope constants, verified by random sampling before being returned.
  GaugeConstants constants() const {
    GaugeConstants c;
    const double d = dim_;
    switch (kind_) {
      case GaugeKind::L1:
        c.eta1 = 1.0, c.eta2 = 0.0, c.nu = 1.0;
        c.phi = [](int r) { return std::sqrt(static_cast<double>(r)); };
        break;
      case GaugeKind::L2:
        c.eta1 = 0.0, c.eta2 = 1.0, c.nu = 1.0 / std::sqrt(d);
        c.phi = [](int) { return 1.0; };
        break;
      case GaugeKind::KSupport: {
        // Everything follows from max(|v|_2, |v|_1/sqrt(k)) <= f(v) <= sqrt(2) * the same.
        const double k = k_;
        c.eta1 = std::sqrt(2.0 / k), c.eta2 = std::sqrt(2.0), c.nu = 1.0 / std::sqrt(k);
        c.phi = [k](int r) { return std::sqrt(2.0) * std::max(1.0, std::sqrt(r / k)); };
        break;
      }
      case GaugeKind::OWL:
      case GaugeKind::KyFan: {
        const Vec w = weights_;
        c.eta1 = w(0), c.eta2 = 0.0, c.nu = w.mean();
        c.phi = [w](int r) { return w.head(std::clamp<Eigen::Index>(r, 0, w.size())).norm(); };
        break;
      }
    }
    verify_constants(c);
    return c;
  }

 private:
  Gauge(GaugeKind kind, int dim, int k, Vec weights)
      : kind_(kind), dim_(checked(dim)), k_(k), weights_(std::move(weights)) {}

  static int checked(int dim) {
    if (dim < 1) throw std::invalid_argument("Gauge: dimension must be positive");
    return dim;
  }

  static void check_k(int k, int dim, const char* what) {
    checked(dim);
    if (k < 1 || k > dim)
      throw std::invalid_argument(std::string(what) + ": k must lie in [1, dim]");
  }

  void verify_constants(const GaugeConstants& c) const {
    Rng rng(0x5eed0c0457a17ULL + static_cast<std::uint64_t>(dim_));
    std::uniform_int_distribution<int> pick_r(1, dim_);
    constexpr double slack = 1e-9;
    for (int trial = 0; trial < 200; ++trial) {
      Vec v = gaussian_vector(dim_, rng);
      const int r = pick_r(rng);
      if (trial % 2 == 1) {
        // r-sparse sample: zero all but the first r entries of a random permutation.
        std::vector<int> perm(static_cast<std::size_t>(dim_));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int i = r; i < dim_; ++i) v(perm[static_cast<std::size_t>(i)]) = 0.0;
        if (eval(v) > c.phi(r) * v.norm() * (1.0 + slack))
          throw std::logic_error("Gauge::constants: sparse compatibility bound violated for " + name());
      }
      const double f = eval(v);
      const double upper = std::max(c.eta1 * v.lpNorm<1>(), c.eta2 * v.norm());
      if (f > upper * (1.0 + slack) || f < c.nu * v.lpNorm<1>() * (1.0 - slack))
        throw std::logic_error("Gauge::constants: envelope violated for " + name());
    }
  }

  GaugeKind kind_;
  int dim_;
  int k_;
  Vec weights_;
};

/// theta(0) / theta(d-1) for a nonnegative descending theta.
inline Rho rho(const Vec& theta) {
  if (theta.size() == 0 || !(theta.maxCoeff() > 0.0))
    throw std::invalid_argument("rho: polar vector is identically zero");
  if (theta.minCoeff() < 0.0) throw std::invalid_argument("rho: polar vector must be nonnegative");
  const double lo = theta.minCoeff();
  if (lo == 0.0) return Rho::unbounded();
  return Rho::finite(theta.maxCoeff() / lo);
}

}  // namespace gds
