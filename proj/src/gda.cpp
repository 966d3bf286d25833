#include "snx/gda.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "snx/errors.hpp"

namespace snx {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double e) { return std::isfinite(e); });
}

ProblemEval checked_eval(const ConstrainedProblem& problem, std::span<const double> m,
                         std::span<const double> lambda) {
  ProblemEval e = problem.evaluate(m, lambda);
  if (e.constraints.size() != problem.num_constraints) {
    throw ShapeError("problem returned " + std::to_string(e.constraints.size()) + " constraint values, expected " +
                     std::to_string(problem.num_constraints));
  }
  if (e.lagrangian_grad.size() != problem.dimension) throw ShapeError("problem gradient has the wrong dimension");
  return e;
}

void validate_dual(const ConstrainedProblem& problem, std::span<const double> lambda) {
  if (lambda.size() != problem.num_constraints) throw InputError("dual length does not match constraint count");
  for (double l : lambda) {
    if (!(l >= 0.0)) throw InputError("dual variables must be non-negative");
  }
}

}  // namespace

double lagrangian(const ConstrainedProblem& problem, std::span<const double> m, std::span<const double> lambda) {
  validate_dual(problem, lambda);
  const ProblemEval e = checked_eval(problem, m, lambda);
  double value = e.objective;
  for (std::size_t i = 0; i < lambda.size(); ++i) value += lambda[i] * e.constraints[i];
  return value;
}

std::vector<double> project_dual(std::vector<double> lambda) {
  if (lambda.empty()) return lambda;
  bool any_positive = false;
  for (double& l : lambda) {
    l = std::max(l, 0.0);
    any_positive = any_positive || l > 0.0;
  }
  if (!any_positive) std::fill(lambda.begin(), lambda.end(), 1.0 / static_cast<double>(lambda.size()));
  const double n = norm2(lambda);
  for (double& l : lambda) l /= n;
  return lambda;
}

GdaStep gda_step(const ConstrainedProblem& problem, std::span<const double> m, std::span<const double> lambda,
                 const GdaConfig& config) {
  validate_dual(problem, lambda);
  const ProblemEval here = checked_eval(problem, m, lambda);

  GdaStep step;
  step.grad_norm_primal = norm2(here.lagrangian_grad);
  step.primal.assign(m.begin(), m.end());
  for (std::size_t i = 0; i < step.primal.size(); ++i) step.primal[i] -= config.eta1 * here.lagrangian_grad[i];

  // dL/dlambda = g(m'), using the updated primal.
  step.at_new_primal = checked_eval(problem, step.primal, lambda);
  std::vector<double> raw(lambda.begin(), lambda.end());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] += config.eta2 * step.at_new_primal.constraints[i];
  step.dual = project_dual(std::move(raw));
  return step;
}

double violation_ratio(std::span<const double> constraint_values) {
  if (constraint_values.empty()) return 0.0;
  const auto violated = std::count_if(constraint_values.begin(), constraint_values.end(),
                                      [](double g) { return g > 0.0; });
  return static_cast<double>(violated) / static_cast<double>(constraint_values.size());
}

double violation_ratio(const ConstrainedProblem& problem, std::span<const double> m) {
  if (problem.num_constraints == 0) throw InputError("violation ratio needs at least one constraint");
  const std::vector<double> zero(problem.num_constraints, 0.0);
  return violation_ratio(checked_eval(problem, m, zero).constraints);
}

GdaResult solve(const ConstrainedProblem& problem, std::span<const double> init, const GdaConfig& config) {
  if (init.size() != problem.dimension) throw InputError("initial primal has the wrong dimension");
  if (!all_finite(init)) throw InputError("initial primal is not finite");
  if (!(config.eta1 > 0.0) || !(config.eta2 > 0.0)) throw InputError("learning rates must be positive");

  const std::size_t c = problem.num_constraints;
  std::vector<double> m(init.begin(), init.end());
  std::vector<double> lambda(c, c == 0 ? 0.0 : 1.0 / static_cast<double>(c));
  const std::vector<double> no_dual(c, 0.0);

  GdaResult result;
  result.trace.iterations.reserve(config.pre_iter + config.max_iter);

  auto record = [&](std::size_t iter, double grad_norm, const ProblemEval& after) {
    GdaIteration it;
    it.grad_norm_primal = grad_norm;
    it.grad_norm_dual = norm2(after.constraints);
    it.objective = after.objective;
    it.violations = static_cast<std::size_t>(
        std::count_if(after.constraints.begin(), after.constraints.end(), [](double g) { return g > 0.0; }));
    it.violation_ratio = violation_ratio(after.constraints);
    if (!std::isfinite(it.grad_norm_primal) || !std::isfinite(it.grad_norm_dual) || !std::isfinite(it.objective) ||
        !all_finite(m) || !all_finite(lambda)) {
      throw DivergenceError(iter, "non-finite primal, dual, gradient or objective");
    }
    result.trace.iterations.push_back(it);
  };

  // Pretraining: descent on g0 alone (lambda = 0 gives dL/dm = dg0/dm).
  for (std::size_t t = 0; t < config.pre_iter; ++t) {
    const ProblemEval here = checked_eval(problem, m, no_dual);
    const double gn = norm2(here.lagrangian_grad);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] -= config.eta1 * here.lagrangian_grad[i];
    record(t, gn, checked_eval(problem, m, no_dual));
  }

  for (std::size_t t = 0; t < config.max_iter; ++t) {
    GdaStep step = gda_step(problem, m, lambda, config);
    m = std::move(step.primal);
    lambda = std::move(step.dual);
    record(config.pre_iter + t, step.grad_norm_primal, step.at_new_primal);
  }

  result.primal = m;
  result.dual = lambda;
  result.trace.primal = std::move(m);
  result.trace.dual = std::move(lambda);
  return result;
}

std::string trace_csv(const GdaTrace& trace) {
  std::string out = "iteration,grad_norm_primal,grad_norm_dual,objective,violation_ratio\n";
  char buf[256];
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const GdaIteration& it = trace.iterations[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", i + 1, it.grad_norm_primal,
                  it.grad_norm_dual, it.objective, it.violation_ratio);
    out += buf;
  }
  return out;
}

void write_trace_csv(const GdaTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << trace_csv(trace);
}

}  // namespace snx
