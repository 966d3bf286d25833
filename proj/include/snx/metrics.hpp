#pragma once

// Faithfulness, counterfactual loss, conformity, diversity, aggregates and
// budget sweeps.

#include <cstddef>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "snx/data.hpp"
#include "snx/mask.hpp"
#include "snx/siamese.hpp"

namespace snx {

// Binary cross-entropy between a target probability and a prediction. The
// arguments of both logarithms are floored at clip; terms with a zero coefficient
// are skipped, so bce(t, t) is exactly 0 for t in {0, 1}.
double bce(double target, double prediction, double clip = 1e-12);

// BCE(p(f(x^s, x^t)), p(f(m^s x^s, m^t x^t))).
double faithfulness(const SiameseModel& model, const TabularInstance& query, const TabularInstance& reference,
                    std::span<const double> query_mask, std::span<const double> reference_mask);
double faithfulness(const SiameseModel& model, const GraphInstance& query, const GraphInstance& reference,
                    std::span<const double> query_mask, std::span<const double> reference_mask);

// Faithfulness of the complements 1 - m^s, 1 - m^t.
double counterfactual(const SiameseModel& model, const TabularInstance& query, const TabularInstance& reference,
                      std::span<const double> query_mask, std::span<const double> reference_mask);
double counterfactual(const SiameseModel& model, const GraphInstance& query, const GraphInstance& reference,
                      std::span<const double> query_mask, std::span<const double> reference_mask);

// Global-mask faithfulness: BCE(p(f(x, x)), p(f(x, M x))).
double global_faithfulness(const SiameseModel& model, const TabularInstance& x, std::span<const double> mask);
double global_faithfulness(const SiameseModel& model, const GraphInstance& g, std::span<const double> mask);

std::vector<double> complement(std::span<const double> mask);

// Mean Jaccard similarity between a global decoded set and each local one.
double conformity(const std::set<std::size_t>& global, const std::vector<std::set<std::size_t>>& locals);

enum class Distance { kJaccard, kHamming, kCosine };
std::string to_string(Distance d);
Distance parse_distance(const std::string& s);

double mask_distance(const std::set<std::size_t>& a, const std::set<std::size_t>& b, std::size_t length, Distance d);

// Pairwise distances between the decoded local masks of one query; summed,
// or averaged over pairs when `mean` is set. Fewer than two masks give 0.
double diversity(const std::vector<std::set<std::size_t>>& locals, std::size_t length,
                 Distance distance = Distance::kJaccard, bool mean = false);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for fewer than two values
  std::size_t count = 0;
};
Summary summarize(std::span<const double> values);

// One explained pair for budget sweeps. `evaluate` returns the faithfulness
// of the pair under the given (query, reference) masks.
struct SweepItem {
  std::vector<double> query_mask;
  std::vector<double> reference_mask;
  bool shared = false;  // tabular: one mask decoded once and used on both sides
  std::function<double(std::span<const double>, std::span<const double>)> evaluate;
};

struct SweepRow {
  Budget budget;
  Summary fa;
  Summary cf;
};

// Re-decodes each item at every budget and scores the binary masks.
std::vector<SweepRow> sensitivity_sweep(const std::vector<SweepItem>& items, const std::vector<Budget>& budgets);

// FA and CF of one item at one budget (binary decoded masks).
std::pair<double, double> decoded_scores(const SweepItem& item, Budget budget);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace snx
