#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "gds/spectral.hpp"
#include "support.hpp"

namespace gds {
namespace {

Mat random_rank(int d, int p, int r, Rng& rng) {
  return gaussian_matrix(d, r, rng) * gaussian_matrix(r, p, rng);
}

std::vector<SpectralNorm> lifts(int d, int p) {
  const int m = std::min(d, p);
  Vec w(m);
  for (int i = 0; i < m; ++i) w(i) = 1.0 + 0.5 * (m - i);
  return {SpectralNorm(Gauge::l1(m), d, p),          SpectralNorm(Gauge::l2(m), d, p),
          SpectralNorm(Gauge::owl(w), d, p),         SpectralNorm(Gauge::ksupport(2, m), d, p),
          SpectralNorm(Gauge::ksupport(m, m), d, p), SpectralNorm(Gauge::ky_fan(2, m), d, p)};
}

TEST(SpectralNorm, EvalExamples) {
  Mat a = Mat::Zero(2, 3);
  a(0, 0) = 3.0;
  a(1, 1) = 4.0;
  const SpectralNorm trace(Gauge::l1(2), 2, 3);
  EXPECT_NEAR(trace.eval(a), 7.0, 1e-14);
  EXPECT_NEAR(trace.dual_eval(a), 4.0, 1e-14);

  Rng rng(1);
  const Mat g = gaussian_matrix(4, 6, rng);
  const SpectralNorm frob(Gauge::l2(4), 4, 6);
  EXPECT_NEAR(frob.eval(g), g.norm(), 1e-12);
  EXPECT_NEAR(frob.dual_eval(g), g.norm(), 1e-12);

  const Vec u = gaussian_vector(4, rng).normalized(), v = gaussian_vector(6, rng).normalized();
  for (int k = 1; k <= 4; ++k)
    EXPECT_NEAR(SpectralNorm(Gauge::ksupport(k, 4), 4, 6).eval(u * v.transpose()), 1.0, 1e-12) << "k=" << k;
}

TEST(SpectralNorm, KSupportDualExample) {
  const Mat a = Vec((Vec(3) << 3, 2, 1).finished()).asDiagonal();
  Rng rng(2);
  const Mat q1 = random_orthonormal(3, 3, rng), q2 = random_orthonormal(3, 3, rng);
  EXPECT_NEAR(SpectralNorm(Gauge::ksupport(2, 3), 3, 3).dual_eval(q1 * a * q2), std::sqrt(13.0), 1e-12);
}

TEST(SpectralNorm, RejectsMismatchedShapes) {
  EXPECT_THROW(SpectralNorm(Gauge::l1(3), 4, 5), std::invalid_argument);
  const SpectralNorm trace(Gauge::l1(2), 2, 3);
  EXPECT_THROW(trace.eval(Mat::Zero(3, 2)), std::invalid_argument);
  EXPECT_THROW(trace.prox(Mat::Zero(2, 2), 1.0), std::invalid_argument);
}

TEST(SpectralNorm, KyFanHasNoProx) {
  const SpectralNorm kf(Gauge::ky_fan(2, 3), 3, 4);
  EXPECT_THROW(kf.prox(Mat::Ones(3, 4), 1.0), unsupported_operation);
  EXPECT_THROW(kf.project_dual_ball(Mat::Ones(3, 4), 1.0), unsupported_operation);
}

TEST(SpectralNorm, UnitaryInvariance) {
  Rng rng(3);
  for (const auto& norm : lifts(5, 7)) {
    for (int trial = 0; trial < 40; ++trial) {
      const Mat a = gaussian_matrix(5, 7, rng);
      const Mat b = random_orthonormal(5, 5, rng) * a * random_orthonormal(7, 7, rng);
      EXPECT_NEAR(norm.eval(b), norm.eval(a), 1e-9 * norm.eval(a)) << norm.gauge().name();
      EXPECT_NEAR(norm.dual_eval(b), norm.dual_eval(a), 1e-9 * norm.dual_eval(a)) << norm.gauge().name();
    }
  }
}

TEST(SpectralNorm, MatrixHolder) {
  Rng rng(4);
  for (const auto& norm : lifts(5, 7)) {
    for (int trial = 0; trial < 100; ++trial) {
      const Mat a = gaussian_matrix(5, 7, rng), b = gaussian_matrix(5, 7, rng);
      EXPECT_LE(inner(a, b), norm.eval(a) * norm.dual_eval(b) * (1 + 1e-9)) << norm.gauge().name();
    }
  }
}

TEST(SpectralNorm, ProxExamples) {
  const SpectralNorm trace(Gauge::l1(2), 2, 2);
  const Mat a = Vec((Vec(2) << 3, 1).finished()).asDiagonal();
  const Mat expected = Vec((Vec(2) << 1, 0).finished()).asDiagonal();
  EXPECT_LT((trace.prox(a, 2.0) - expected).norm(), 1e-12);
  Rng rng(5);
  const Mat g = gaussian_matrix(2, 2, rng);
  EXPECT_LT((trace.prox(g, 1e-12) - g).norm(), 1e-10);
}

TEST(SpectralNorm, ProxBeatsRandomCandidates) {
  Rng rng(6);
  for (const auto& norm : lifts(5, 7)) {
    if (!norm.supports_prox()) continue;
    for (int trial = 0; trial < 5; ++trial) {
      const Mat a = 2.0 * gaussian_matrix(5, 7, rng);
      const double t = 0.8;
      const Mat p = norm.prox(a, t);
      const double best = 0.5 * (p - a).squaredNorm() + t * norm.eval(p);
      for (int c = 0; c < 200; ++c) {
        const Mat w = c % 2 ? Mat(p + 0.05 * gaussian_matrix(5, 7, rng)) : Mat(2.0 * gaussian_matrix(5, 7, rng));
        EXPECT_GE(0.5 * (w - a).squaredNorm() + t * norm.eval(w), best - 1e-9) << norm.gauge().name();
      }
    }
  }
}

TEST(SpectralNorm, ProjectionExamples) {
  Rng rng(7);
  const SpectralNorm trace(Gauge::l1(3), 3, 4);
  const Mat a = 3.0 * gaussian_matrix(3, 4, rng);
  const Svd s = svd(a);
  const Mat clipped = s.U * s.sigma.cwiseMin(1.5).asDiagonal() * s.V.transpose();
  EXPECT_LT((trace.project_dual_ball(a, 1.5) - clipped).norm(), 1e-12);
  const Mat inside = a / (2.0 * trace.dual_eval(a));
  EXPECT_LT((trace.project_dual_ball(inside, 1.0) - inside).norm(), 1e-14);
}

TEST(SpectralNorm, ProjectionMatchesConicOracle) {
  // Reference projections onto the OWL dual ball, solved as conic programs
  // over the partial sums of singular values (tests/oracle/make_oracles.py).
  const auto data = testing::load_data("owl_projection_oracle.json");
  ASSERT_EQ(data.at("cases").size(), 12u);
  for (const auto& c : data.at("cases")) {
    const Vec w = testing::to_vec(c.at("weights"));
    const Mat a = testing::to_mat(c.at("A"));
    const Mat expected = testing::to_mat(c.at("Z"));
    const double radius = c.at("radius").get<double>();
    const double distance = c.at("distance").get<double>();
    const SpectralNorm norm(Gauge::owl(w), static_cast<int>(a.rows()), static_cast<int>(a.cols()));
    const Mat z = norm.project_dual_ball(a, radius);
    EXPECT_LE(norm.dual_eval(z), radius * (1 + 1e-9));
    // A feasible point no farther than the optimum is the projection; the
    // oracle itself is only feasible to about 1e-8, hence the lower slack.
    EXPECT_LE((z - a).norm(), distance + 1e-8) << "weights " << w.transpose();
    EXPECT_GE((z - a).norm(), distance - 1e-6) << "weights " << w.transpose();
    EXPECT_LT((z - expected).norm(), 1e-3) << "weights " << w.transpose();
  }
}

TEST(Decompose, RankOneReference) {
  Rng rng(9);
  const Vec u = gaussian_vector(4, rng).normalized(), v = gaussian_vector(5, rng).normalized();
  const Mat ref = 2.5 * u * v.transpose();
  const auto dec = SpectralNorm(Gauge::l1(4), 4, 5).decompose(ref);
  EXPECT_EQ(dec.rank, 1);
  EXPECT_LT((dec.P1(ref) - ref).norm(), 1e-12);
  EXPECT_LT(dec.P2(ref).norm(), 1e-12);
  EXPECT_LT(dec.Pperp(ref).norm(), 1e-12);
}

TEST(Decompose, ZeroReferenceThrows) {
  EXPECT_THROW(SpectralNorm(Gauge::l1(3), 3, 3).decompose(Mat::Zero(3, 3)), std::invalid_argument);
}

// Trace of a linear map on d x p matrices, computed on the standard basis.
template <class F>
double map_trace(F&& f, int d, int p) {
  double tr = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < p; ++j) {
      Mat e = Mat::Zero(d, p);
      e(i, j) = 1.0;
      tr += f(e)(i, j);
    }
  return tr;
}

TEST(Decompose, SubspaceDimensions) {
  Rng rng(10);
  const int d = 4, p = 6, r = 2;
  const auto dec = SpectralNorm(Gauge::l1(d), d, p).decompose(random_rank(d, p, r, rng));
  ASSERT_EQ(dec.rank, r);
  EXPECT_NEAR(map_trace([&](const Mat& x) { return dec.P1(x); }, d, p), r * r, 1e-10);
  EXPECT_NEAR(map_trace([&](const Mat& x) { return dec.P2(x); }, d, p), (d - r) * (p - r), 1e-10);
  EXPECT_NEAR(map_trace([&](const Mat& x) { return dec.Pperp(x); }, d, p), r * (d + p - 2 * r), 1e-10);
}

TEST(Decompose, ProjectorsAreCompleteIdempotentAndOrthogonal) {
  Rng rng(11);
  const auto dec = SpectralNorm(Gauge::l1(5), 5, 7).decompose(random_rank(5, 7, 2, rng));
  for (int trial = 0; trial < 50; ++trial) {
    const Mat a = gaussian_matrix(5, 7, rng);
    const Mat p1 = dec.P1(a), p2 = dec.P2(a), pp = dec.Pperp(a);
    EXPECT_LT((p1 + p2 + pp - a).norm(), 1e-12);
    EXPECT_LT((dec.P1(p1) - p1).norm(), 1e-12);
    EXPECT_LT((dec.P2(p2) - p2).norm(), 1e-12);
    EXPECT_LT((dec.Pperp(pp) - pp).norm(), 1e-12);
    EXPECT_LT(dec.P1(p2).norm() + dec.P2(p1).norm() + dec.P1(pp).norm() + dec.P2(pp).norm(), 1e-12);
    EXPECT_NEAR(inner(p1, p2) + inner(p1, pp) + inner(p2, pp), 0.0, 1e-12);
  }
}

TEST(Decompose, SplitMatchesPolar) {
  Rng rng(12);
  const SpectralNorm norm(Gauge::ksupport(2, 5), 5, 6);
  const Mat ref = random_rank(5, 6, 2, rng);
  const auto dec = norm.decompose(ref);
  const Vec theta = norm.gauge().polar(singular_values(ref).cwiseMax(0.0).eval());
  ASSERT_EQ(dec.rank, 2);
  EXPECT_LT((dec.w.head(2) - dec.theta.head(2)).norm(), 1e-15);
  EXPECT_EQ(dec.w.tail(3), Vec::Zero(3));
  EXPECT_LT((dec.z.head(3) - dec.theta.tail(3)).norm(), 1e-15);
  EXPECT_EQ(dec.z.tail(2), Vec::Zero(2));
  EXPECT_NEAR(dec.theta.dot(dec.sigma), norm.eval(ref), 1e-10 * norm.eval(ref));
  EXPECT_LT((dec.theta - theta).norm(), 1e-8);
}

class SeminormBound : public ::testing::TestWithParam<int> {};

TEST_P(SeminormBound, SeminormIsDominatedByTheNorm) {
  const int d = 6, p = 8, r = 2;
  const SpectralNorm norm = GetParam() == 0 ? SpectralNorm(Gauge::l1(d), d, p) : SpectralNorm(Gauge::ksupport(r, d), d, p);
  Rng rng(13 + GetParam());
  const Mat ref = random_rank(d, p, r, rng);
  const auto dec = norm.decompose(ref);
  EXPECT_NEAR(dec.seminorm(ref), norm.eval(ref), 1e-9 * norm.eval(ref));
  for (int trial = 0; trial < 200; ++trial) {
    const Mat delta = gaussian_matrix(d, p, rng);
    EXPECT_LE(dec.seminorm(delta), norm.eval(delta) * (1 + 1e-9));
  }
}

INSTANTIATE_TEST_SUITE_P(TraceAndKSupport, SeminormBound, ::testing::Values(0, 1));

TEST(Decompose, ComplementElementsHaveRankAtMostTwiceR) {
  Rng rng(15);
  const int d = 6, p = 7, r = 2;
  const auto dec = SpectralNorm(Gauge::l1(d), d, p).decompose(random_rank(d, p, r, rng));
  for (int trial = 0; trial < 50; ++trial) {
    const Mat delta = dec.Pperp(gaussian_matrix(d, p, rng));
    const Vec s = singular_values(delta);
    EXPECT_LE((s.array() > 1e-10 * s(0)).count(), 2 * r);
  }
}

}  // namespace
}  // namespace gds
