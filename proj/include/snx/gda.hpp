#pragma once

// Gradient descent-ascent on the Lagrangian
//   L(m, lambda) = g0(m) + sum_i lambda_i g_i(m),   lambda >= 0,
// with constraints g_i(m) <= 0. The primal steps down the gradient, the dual
// steps up using the constraint values at the freshly updated primal, is
// clamped to the non-negative orthant and rescaled to unit l2 length.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace snx {

struct ProblemEval {
  double objective = 0.0;               // g0(m)
  std::vector<double> constraints;      // g_1(m) .. g_c(m)
  std::vector<double> lagrangian_grad;  // dL/dm at (m, lambda)
};

struct ConstrainedProblem {
  std::size_t dimension = 0;
  std::size_t num_constraints = 0;
  // Evaluates g0, every g_i and the Lagrangian gradient at (m, lambda).
  std::function<ProblemEval(std::span<const double> m, std::span<const double> lambda)> evaluate;
};

struct GdaConfig {
  double eta1 = 1e-1;  // primal step
  double eta2 = 1e-3;  // dual step
  std::size_t max_iter = 100;
  std::size_t pre_iter = 0;  // unconstrained descent on g0 before GDA
  std::uint64_t seed = 0;
};

struct GdaIteration {
  double grad_norm_primal = 0.0;  // ||dL/dm|| at the iterate the step was taken from
  double grad_norm_dual = 0.0;    // ||dL/dlambda|| = ||g(m')|| after the primal step
  double objective = 0.0;         // g0(m') after the primal step
  double violation_ratio = 0.0;   // fraction of g_i(m') > 0
  std::size_t violations = 0;
};

struct GdaTrace {
  std::vector<GdaIteration> iterations;  // pre_iter + max_iter entries
  std::vector<double> primal;
  std::vector<double> dual;
};

struct GdaResult {
  std::vector<double> primal;
  std::vector<double> dual;
  GdaTrace trace;
};

double lagrangian(const ConstrainedProblem& problem, std::span<const double> m, std::span<const double> lambda);

struct GdaStep {
  std::vector<double> primal;
  std::vector<double> dual;
  ProblemEval at_new_primal;  // evaluated with the old dual
  double grad_norm_primal = 0.0;
};

GdaStep gda_step(const ConstrainedProblem& problem, std::span<const double> m, std::span<const double> lambda,
                 const GdaConfig& config);

// Initial dual is uniform 1/c. Throws DivergenceError on any non-finite value.
GdaResult solve(const ConstrainedProblem& problem, std::span<const double> init, const GdaConfig& config);

double violation_ratio(const ConstrainedProblem& problem, std::span<const double> m);
double violation_ratio(std::span<const double> constraint_values);

// Clamp to >= 0, reset an all-zero vector to uniform, rescale to unit l2 norm.
std::vector<double> project_dual(std::vector<double> lambda);

void write_trace_csv(const GdaTrace& trace, const std::filesystem::path& path);
std::string trace_csv(const GdaTrace& trace);

}  // namespace snx
