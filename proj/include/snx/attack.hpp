#pragma once

// Saliency manipulation on a linear Siamese model f(a, b) = <T'a, T'b>.
// The reference is perturbed so that the query's saliency T T' (x^t + d)
// lines up with an attacker-chosen target while <x^s, T T' d> = 0 keeps the
// prediction unchanged.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snx/autodiff.hpp"

namespace snx {

double linear_sn_score(const ad::Tensor& theta, std::span<const double> xs, std::span<const double> xt);
// d f / d x^s computed by reverse-mode differentiation.
std::vector<double> linear_saliency(const ad::Tensor& theta, std::span<const double> xs, std::span<const double> xt);
// T T' x^t.
std::vector<double> linear_saliency_closed_form(const ad::Tensor& theta, std::span<const double> xt);

struct AttackConfig {
  double amplification = 10.0;  // scale of the target direction in x_perp
  std::size_t max_iter = 200;
  double tolerance = 1e-13;  // on the projected normal-equation residual
  std::uint64_t seed = 0;
};

struct AttackResult {
  std::vector<double> delta;
  std::vector<double> target;
  double drift = 0.0;          // |f(x^s, x^t) - f(x^s, x^t + delta)|
  double alignment = 0.0;      // cosine(saliency after attack, target)
  double orthogonality = 0.0;  // |<x^s, T T' delta>|
  std::size_t iterations = 0;
};

// Throws AttackInfeasibleError if x^s has no zero coordinate or the target
// has no mass on the zero coordinates of x^s.
AttackResult manipulate_reference(const ad::Tensor& theta, std::span<const double> xs, std::span<const double> xt,
                                  std::span<const double> target, const AttackConfig& config = {});

struct AttackCheck {
  double drift = 0.0;
  double alignment = 0.0;
  double orthogonality = 0.0;
};

// Recomputes the diagnostics of a stored result from scratch.
AttackCheck verify_attack(const ad::Tensor& theta, std::span<const double> xs, std::span<const double> xt,
                          const AttackResult& result);
// True when recomputed drift and alignment match the stored ones to `tol`.
bool attack_consistent(const ad::Tensor& theta, std::span<const double> xs, std::span<const double> xt,
                       const AttackResult& result, double tol = 1e-10);

struct AttackInstance {
  ad::Tensor theta;
  std::vector<double> xs;
  std::vector<double> xt;
  std::vector<double> target;
};

// Random p x p Gaussian theta, one-hot-style binary x^s with at least one
// zero, Gaussian x^t, non-negative target supported on the zeros of x^s.
AttackInstance random_attack_instance(std::uint64_t seed, std::size_t p);

std::string attack_report_json(const AttackInstance& instance, const AttackResult& result, std::uint64_t seed);

}  // namespace snx
