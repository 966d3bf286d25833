#include "snx/gda.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "snx/errors.hpp"

namespace snx {
namespace {

// g0(m) = sum (m_i - target)^2 with optional constraints m_i - bound <= 0.
ConstrainedProblem quadratic(std::size_t dim, double target, std::vector<double> bounds = {}) {
  ConstrainedProblem p;
  p.dimension = dim;
  p.num_constraints = bounds.size();
  p.evaluate = [=](std::span<const double> m, std::span<const double> lambda) {
    ProblemEval e;
    e.lagrangian_grad.assign(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      e.objective += (m[i] - target) * (m[i] - target);
      e.lagrangian_grad[i] = 2.0 * (m[i] - target);
    }
    for (std::size_t k = 0; k < bounds.size(); ++k) {
      e.constraints.push_back(m[k % dim] - bounds[k]);
      e.lagrangian_grad[k % dim] += lambda[k];
    }
    return e;
  };
  return p;
}

TEST(GdaTest, LagrangianExamples) {
  const ConstrainedProblem free = quadratic(1, 0.0);
  const std::vector<double> m = {1.0};
  EXPECT_EQ(lagrangian(free, m, {}), 1.0);
  const ConstrainedProblem one = quadratic(1, 0.0, {0.5});
  EXPECT_DOUBLE_EQ(lagrangian(one, m, std::vector<double>{1.0}), 1.5);
  EXPECT_EQ(lagrangian(one, m, std::vector<double>{0.0}), 1.0);
  EXPECT_THROW(lagrangian(one, m, std::vector<double>{-0.1}), InputError);
}

TEST(GdaTest, OneStepByHand) {
  const ConstrainedProblem p = quadratic(1, 0.0, {0.5});
  const std::vector<double> m = {1.0}, lambda = {1.0};
  const GdaStep s = gda_step(p, m, lambda, GdaConfig{0.1, 0.001, 1, 0, 0});
  EXPECT_DOUBLE_EQ(s.primal[0], 0.7);
  EXPECT_DOUBLE_EQ(s.at_new_primal.constraints[0], 0.7 - 0.5);
  EXPECT_EQ(s.dual[0], 1.0);
  EXPECT_DOUBLE_EQ(s.grad_norm_primal, 3.0);
}

TEST(GdaTest, UnconstrainedStepLeavesEmptyDual) {
  const ConstrainedProblem p = quadratic(2, 0.0);
  const std::vector<double> m = {1.0, -2.0};
  const GdaStep s = gda_step(p, m, {}, GdaConfig{});
  EXPECT_DOUBLE_EQ(s.primal[0], 0.8);
  EXPECT_DOUBLE_EQ(s.primal[1], -1.6);
  EXPECT_TRUE(s.dual.empty());
}

TEST(GdaTest, DualProjection) {
  EXPECT_EQ(project_dual({-1.0, -2.0}), (std::vector<double>{1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)}));
  const auto d = project_dual({3.0, -1.0, 4.0});
  EXPECT_DOUBLE_EQ(d[0], 0.6);
  EXPECT_EQ(d[1], 0.0);
  EXPECT_DOUBLE_EQ(d[2], 0.8);
  EXPECT_TRUE(project_dual({}).empty());
}

TEST(GdaTest, NegativeRawDualResetsToUniform) {
  // Deeply feasible constraints push the dual below zero in one step.
  const ConstrainedProblem p = quadratic(2, 0.0, {100.0, 100.0});
  const std::vector<double> m = {0.0, 0.0}, lambda = {1e-6, 0.0};
  const GdaStep s = gda_step(p, m, lambda, GdaConfig{0.1, 1.0, 1, 0, 0});
  EXPECT_DOUBLE_EQ(s.dual[0], 1.0 / std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(s.dual[1], 1.0 / std::sqrt(2.0));
}

TEST(GdaTest, QuadraticConvergesGeometrically) {
  const ConstrainedProblem p = quadratic(3, 0.0);
  const std::vector<double> init = {1.0, -2.0, 0.5};
  const GdaResult r = solve(p, init, GdaConfig{0.1, 1e-3, 100, 0, 0});
  ASSERT_EQ(r.trace.iterations.size(), 100u);
  double n0 = 0.0;
  for (double v : init) n0 += v * v;
  double n = 0.0;
  for (double v : r.primal) n += v * v;
  EXPECT_NEAR(std::sqrt(n), std::pow(0.8, 100) * std::sqrt(n0), 1e-15);
  // Gradient at the final iterate.
  EXPECT_LT(2.0 * std::sqrt(n), 1e-6);
}

TEST(GdaTest, ConstrainedOptimumAtBoundary) {
  // g0 = (m-2)^2 with m - 1 <= 0; brute-force grid puts the optimum at m = 1.
  double best = 0.0, best_val = std::numeric_limits<double>::infinity();
  for (int i = -3000; i <= 3000; ++i) {
    const double m = i * 1e-3;
    if (m - 1.0 > 0.0) continue;
    const double v = (m - 2.0) * (m - 2.0);
    if (v < best_val) {
      best_val = v;
      best = m;
    }
  }
  ASSERT_NEAR(best, 1.0, 1e-12);
  const ConstrainedProblem p = quadratic(1, 2.0, {1.0});
  const GdaResult r = solve(p, std::vector<double>{0.0}, GdaConfig{0.1, 1e-3, 500, 0, 0});
  EXPECT_GE(r.primal[0], best);
  EXPECT_LE(r.primal[0], best + 0.2);
}

TEST(GdaTest, TraceLengthCountsPretraining) {
  const ConstrainedProblem p = quadratic(2, 0.3, {0.1});
  const GdaResult r = solve(p, std::vector<double>{1.0, 1.0}, GdaConfig{0.1, 1e-3, 7, 5, 0});
  EXPECT_EQ(r.trace.iterations.size(), 12u);
  EXPECT_EQ(r.trace.primal, r.primal);
  EXPECT_EQ(r.trace.dual, r.dual);
}

TEST(GdaTest, DualStaysOnUnitSphere) {
  const ConstrainedProblem p = quadratic(3, 1.0, {0.2, 0.5, 2.0, -0.1});
  const std::vector<double> m = {0.0, 0.0, 0.0};
  std::vector<double> lambda(4, 0.25), x = m;
  for (int t = 0; t < 200; ++t) {
    const GdaStep s = gda_step(p, x, lambda, GdaConfig{});
    x = s.primal;
    lambda = s.dual;
    double n = 0.0;
    for (double l : lambda) {
      EXPECT_GE(l, 0.0);
      n += l * l;
    }
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
}

TEST(GdaTest, NoConstraintsMatchesPlainDescentBitForBit) {
  const ConstrainedProblem p = quadratic(4, -0.7);
  std::vector<double> ref = {0.3, 1.1, -2.0, 0.0};
  const GdaResult r = solve(p, ref, GdaConfig{0.1, 1e-3, 30, 20, 0});
  for (int t = 0; t < 50; ++t) {
    for (double& v : ref) v -= 0.1 * (2.0 * (v + 0.7));
  }
  EXPECT_EQ(r.primal, ref);
}

TEST(GdaTest, StrictlyFeasibleConvexProblemConverges) {
  const ConstrainedProblem p = quadratic(3, 0.2, {1.0, 1.0, 1.0});
  const GdaResult r = solve(p, std::vector<double>{-1.0, 2.0, 0.0}, GdaConfig{0.1, 1e-3, 500, 0, 0});
  EXPECT_LT(r.trace.iterations.back().grad_norm_primal, 1e-4);
  for (const auto& it : r.trace.iterations) {
    EXPECT_TRUE(std::isfinite(it.grad_norm_primal));
    EXPECT_TRUE(std::isfinite(it.grad_norm_dual));
  }
}

TEST(GdaTest, SingleConstraintFeasibleProblemConverges) {
  const ConstrainedProblem p = quadratic(2, 0.2, {1.0});
  const GdaResult r = solve(p, std::vector<double>{-1.0, 2.0}, GdaConfig{0.1, 1e-3, 500, 0, 0});
  EXPECT_LT(r.trace.iterations.back().grad_norm_primal, 1e-4);
}

TEST(GdaTest, ViolationRatio) {
  EXPECT_EQ(violation_ratio(std::vector<double>{-1.0, -0.5}), 0.0);
  EXPECT_EQ(violation_ratio(std::vector<double>{1.0, 0.5}), 1.0);
  EXPECT_EQ(violation_ratio(std::vector<double>{1.0, -0.5, 0.0, -2.0}), 0.25);
  const ConstrainedProblem p = quadratic(1, 0.0, {0.5, 2.0});
  EXPECT_EQ(violation_ratio(p, std::vector<double>{1.0}), 0.5);
  EXPECT_THROW(violation_ratio(quadratic(1, 0.0), std::vector<double>{1.0}), InputError);
}

TEST(GdaTest, DivergenceIsReported) {
  ConstrainedProblem p = quadratic(1, 0.0);
  // A step size of 2 makes |m| grow by 3x per step until it overflows.
  try {
    solve(p, std::vector<double>{1.0}, GdaConfig{2.0, 1e-3, 2000, 0, 0});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.iteration(), 100u);
  }
  ConstrainedProblem nan = p;
  nan.evaluate = [](std::span<const double>, std::span<const double>) {
    ProblemEval e;
    e.objective = std::nan("");
    e.lagrangian_grad = {0.0};
    return e;
  };
  EXPECT_THROW(solve(nan, std::vector<double>{1.0}, GdaConfig{}), DivergenceError);
}

TEST(GdaTest, InputValidation) {
  const ConstrainedProblem p = quadratic(2, 0.0);
  EXPECT_THROW(solve(p, std::vector<double>{1.0}, GdaConfig{}), InputError);
  EXPECT_THROW(solve(p, std::vector<double>{1.0, std::nan("")}, GdaConfig{}), InputError);
  EXPECT_THROW(solve(p, std::vector<double>{1.0, 1.0}, GdaConfig{0.0, 1e-3, 1, 0, 0}), InputError);
}

TEST(GdaTest, TraceCsv) {
  const ConstrainedProblem p = quadratic(1, 0.0, {0.5});
  const GdaResult r = solve(p, std::vector<double>{1.0}, GdaConfig{0.1, 1e-3, 3, 1, 0});
  const std::string csv = trace_csv(r.trace);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,grad_norm_primal,grad_norm_dual,objective,violation_ratio");
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  EXPECT_EQ(lines, 5u);
  const auto path = std::filesystem::temp_directory_path() / "snx_gda_trace.csv";
  write_trace_csv(r.trace, path);
  std::ifstream in(path, std::ios::binary);
  std::string back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(back, csv);
}

}  // namespace
}  // namespace snx
