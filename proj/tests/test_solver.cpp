#include <cmath>

#include <gtest/gtest.h>

#include "gds/solver.hpp"
#include "support.hpp"

namespace gds {
namespace {

Ensemble gaussian(int d, int p) {
  Ensemble e;
  e.rows = d;
  e.cols = p;
  return e;
}

Mat low_rank(int d, int p, int r, Rng& rng) {
  const Mat u = random_orthonormal(d, r, rng), v = random_orthonormal(p, r, rng);
  return u * v.transpose() / std::sqrt(static_cast<double>(r));
}

struct OracleInstance {
  Design design;
  Vec y;
  double lambda;
  double objective;
};

std::vector<OracleInstance> load_trace_instances() {
  const auto data = testing::load_data("trace_gds_oracle.json");
  std::vector<OracleInstance> out;
  for (const auto& inst : data.at("instances")) {
    const int d = inst.at("rows"), p = inst.at("cols"), n = inst.at("n");
    Mat a(n, d * p);
    for (int i = 0; i < n; ++i) a.row(i) = vec(testing::to_mat(inst.at("X").at(i))).transpose();
    out.push_back({Design(gaussian(d, p), a), testing::to_vec(inst.at("y")), inst.at("lambda").get<double>(),
                   inst.at("objective").get<double>()});
  }
  return out;
}

TEST(Solve, ZeroDataGivesZero) {
  const Design x = Design::sample(gaussian(3, 4), 10, 1);
  const auto problem = GdsProblem::make(SpectralNorm(Gauge::l1(3), 3, 4), x, Vec::Zero(10), 0.1);
  const auto sol = solve(problem);
  EXPECT_TRUE(sol.converged);
  EXPECT_EQ(sol.theta_hat, Mat::Zero(3, 4));
  EXPECT_EQ(sol.objective, 0.0);
}

TEST(Solve, MatchesConicOracleOnSmallTraceInstances) {
  const auto instances = load_trace_instances();
  ASSERT_EQ(instances.size(), 20u);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto problem = GdsProblem::make(SpectralNorm(Gauge::l1(4), 4, 4), inst.design, inst.y, inst.lambda);
    SolverOptions opts;
    opts.feas_tol = 1e-7;
    const auto sol = solve(problem, opts);
    const auto check = check_solution(problem, sol.theta_hat);
    EXPECT_TRUE(sol.converged) << "instance " << i;
    EXPECT_NEAR(sol.objective, inst.objective, 1e-4 * inst.objective) << "instance " << i;
    EXPECT_LE(check.residual, 1e-6) << "instance " << i;
    EXPECT_NEAR(check.objective, sol.objective, 1e-12 * sol.objective);
  }
}

TEST(Solve, ExactRecoveryWithoutNoise) {
  Rng rng(2);
  const Mat truth = low_rank(10, 10, 1, rng);
  const Design x = Design::sample(gaussian(10, 10), 200, 3);
  const Vec y = x.forward(truth);
  const SpectralNorm norm(Gauge::l1(10), 10, 10);
  const double scale = norm.dual_eval(x.adjoint(y));
  const auto sol = solve(GdsProblem::make(norm, x, y, 1e-6 * scale));
  EXPECT_TRUE(sol.converged);
  EXPECT_LE((sol.theta_hat - truth).norm() / truth.norm(), 1e-3);
}

class FeasibleTruth : public ::testing::TestWithParam<int> {};

TEST_P(FeasibleTruth, EstimateHasNoLargerNorm) {
  const int d = 8, p = 8, r = 2;
  const SpectralNorm norm = GetParam() == 0 ? SpectralNorm(Gauge::l1(d), d, p) : SpectralNorm(Gauge::ksupport(r, d), d, p);
  Rng rng(4 + GetParam());
  const Mat truth = low_rank(d, p, r, rng);
  const Design x = Design::sample(gaussian(d, p), 120, 5);
  const Vec noise = sample_noise(Noise{NoiseKind::Gaussian, 0.1}, 120, 6);
  const Vec y = x.forward(truth) + noise;
  const double lambda = 1.05 * norm.dual_eval(x.adjoint(noise));
  const auto problem = GdsProblem::make(norm, x, y, lambda);
  ASSERT_TRUE(check_solution(problem, truth).feasible);
  SolverOptions opts;
  const auto sol = solve(problem, opts);
  EXPECT_TRUE(sol.converged) << norm.gauge().name();
  EXPECT_LE(sol.constraint_residual, sol.feas_tol);
  EXPECT_LE(sol.objective, norm.eval(truth) * (1 + opts.opt_tol));
}

INSTANTIATE_TEST_SUITE_P(TraceAndKSupport, FeasibleTruth, ::testing::Values(0, 1));

TEST(Solve, ScaleEquivariance) {
  Rng rng(7);
  const Mat truth = low_rank(6, 7, 2, rng);
  const Design x = Design::sample(gaussian(6, 7), 60, 8);
  const Vec y = x.forward(truth) + sample_noise(Noise{NoiseKind::Gaussian, 0.05}, 60, 9);
  const SpectralNorm norm(Gauge::l1(6), 6, 7);
  const double lambda = 0.3 * norm.dual_eval(x.adjoint(y));
  SolverOptions opts;
  opts.opt_tol = 1e-11;
  const auto base = solve(GdsProblem::make(norm, x, y, lambda), opts);
  const double c = 3.5;
  const auto scaled = solve(GdsProblem::make(norm, x, Vec(c * y), c * lambda), opts);
  ASSERT_TRUE(base.converged && scaled.converged);
  EXPECT_NEAR(scaled.objective, c * base.objective, 1e-6 * c * base.objective);
  EXPECT_LE((scaled.theta_hat - c * base.theta_hat).norm(), 1e-3 * c * base.theta_hat.norm());
}

TEST(Solve, Deterministic) {
  Rng rng(10);
  const Mat truth = low_rank(5, 5, 1, rng);
  const Design x = Design::sample(gaussian(5, 5), 40, 11);
  const Vec y = x.forward(truth) + sample_noise(Noise{NoiseKind::Gaussian, 0.1}, 40, 12);
  const auto problem = GdsProblem::make(SpectralNorm(Gauge::l1(5), 5, 5), x, y, 0.5);
  const auto a = solve(problem), b = solve(problem);
  EXPECT_EQ(a.theta_hat, b.theta_hat);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Solve, GapHistoryDecreasesAfterBurnIn) {
  Rng rng(13);
  const Mat truth = low_rank(8, 8, 2, rng);
  const Design x = Design::sample(gaussian(8, 8), 100, 14);
  const Vec y = x.forward(truth) + sample_noise(Noise{NoiseKind::Gaussian, 0.1}, 100, 15);
  const SpectralNorm norm(Gauge::l1(8), 8, 8);
  SolverOptions opts;
  opts.log_every = 10;
  const auto sol = solve(GdsProblem::make(norm, x, y, 0.2 * norm.dual_eval(x.adjoint(y))), opts);
  ASSERT_TRUE(sol.converged);
  ASSERT_GE(sol.log.size(), 10u);
  // Oscillations are allowed within a 50-iteration window (5 log entries):
  // every window minimum must not exceed the minimum of the window before it
  // by more than solver noise.
  const auto& log = sol.log;
  const std::size_t burn = log.size() / 4;
  auto window_min = [&](std::size_t start) {
    double m = std::abs(log[start].gap);
    for (std::size_t i = start; i < std::min(start + 5, log.size()); ++i) m = std::min(m, std::abs(log[i].gap));
    return m;
  };
  for (std::size_t s = burn + 5; s + 5 <= log.size(); s += 5)
    EXPECT_LE(window_min(s), window_min(s - 5) + 1e-6 * sol.objective) << "window at iteration " << log[s].iter;
  EXPECT_LE(std::abs(sol.primal_dual_gap_history.back()), 1e-3 * sol.objective);
}

TEST(CheckSolution, DetectsInfeasibleCandidates) {
  Rng rng(16);
  const Mat truth = low_rank(4, 4, 1, rng);
  const Design x = Design::sample(gaussian(4, 4), 30, 17);
  const Vec y = x.forward(truth);
  const auto problem = GdsProblem::make(SpectralNorm(Gauge::l1(4), 4, 4), x, y, 1e-3);
  EXPECT_TRUE(check_solution(problem, truth).feasible);
  // Moving away from the truth along any direction scales the residual up.
  const Mat bad = truth + 10.0 * gaussian_matrix(4, 4, rng);
  const auto c = check_solution(problem, bad);
  EXPECT_FALSE(c.feasible);
  EXPECT_GT(c.residual, 0.0);
  EXPECT_NEAR(c.constraint_value - problem.lambda, c.residual, 1e-12);
}

TEST(Solve, RejectsKyFanAndBadLambda) {
  const Design x = Design::sample(gaussian(3, 3), 10, 18);
  const Vec y = Vec::Ones(10);
  EXPECT_THROW(solve(GdsProblem::make(SpectralNorm(Gauge::ky_fan(2, 3), 3, 3), x, y, 0.1)), unsupported_operation);
  EXPECT_THROW(GdsProblem::make(SpectralNorm(Gauge::l1(3), 3, 3), x, y, 0.0), std::invalid_argument);
  EXPECT_THROW(GdsProblem::make(SpectralNorm(Gauge::l1(2), 2, 4), x, y, 0.1), std::invalid_argument);
}

TEST(Solve, ImplicitDesignAgreesWithDense) {
  Rng rng(19);
  const Mat truth = low_rank(5, 6, 1, rng);
  const ImplicitDesign implicit(gaussian(5, 6), 50, 20);
  const Vec y = implicit.forward(truth);
  const SpectralNorm norm(Gauge::l1(5), 5, 6);
  const auto a = solve(GdsProblem::make(norm, implicit, y, 1e-4));
  const auto b = solve(GdsProblem::make(norm, implicit.materialize(), y, 1e-4));
  EXPECT_NEAR(a.objective, b.objective, 1e-6 * b.objective);
}

TEST(Solve, ReportsNonConvergence) {
  Rng rng(21);
  const Mat truth = low_rank(6, 6, 2, rng);
  const Design x = Design::sample(gaussian(6, 6), 30, 22);
  const Vec y = x.forward(truth);
  SolverOptions opts;
  opts.max_iter = 5;
  const auto sol = solve(GdsProblem::make(SpectralNorm(Gauge::l1(6), 6, 6), x, y, 1e-6), opts);
  EXPECT_FALSE(sol.converged);
  EXPECT_EQ(sol.iterations, 5);
}

}  // namespace
}  // namespace gds
