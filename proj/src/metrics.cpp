#include "snx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "snx/errors.hpp"

namespace snx {

double bce(double target, double prediction, double clip) {
  double loss = 0.0;
  if (target != 0.0) loss -= target * std::log(std::clamp(prediction, clip, 1.0));
  if (target != 1.0) loss -= (1.0 - target) * std::log(std::clamp(1.0 - prediction, clip, 1.0));
  return loss;
}

namespace {

void check_unit_interval(std::span<const double> mask) {
  for (double v : mask) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("mask values must lie in [0, 1]");
  }
}

template <typename Instance>
double faithfulness_impl(const SiameseModel& model, const Instance& query, const Instance& reference,
                         std::span<const double> qm, std::span<const double> rm, std::size_t qlen,
                         std::size_t rlen) {
  check_unit_interval(qm);
  check_unit_interval(rm);
  const std::vector<double> qones(qlen, 1.0);
  const std::vector<double> rones(rlen, 1.0);
  const double target = masked_probability(model, query, reference, qones, rones);
  return bce(target, masked_probability(model, query, reference, qm, rm));
}

}  // namespace

double faithfulness(const SiameseModel& model, const TabularInstance& query, const TabularInstance& reference,
                    std::span<const double> query_mask, std::span<const double> reference_mask) {
  return faithfulness_impl(model, query, reference, query_mask, reference_mask, query.x.size(), reference.x.size());
}

double faithfulness(const SiameseModel& model, const GraphInstance& query, const GraphInstance& reference,
                    std::span<const double> query_mask, std::span<const double> reference_mask) {
  return faithfulness_impl(model, query, reference, query_mask, reference_mask, query.num_edges(),
                           reference.num_edges());
}

std::vector<double> complement(std::span<const double> mask) {
  std::vector<double> out(mask.size());
  std::transform(mask.begin(), mask.end(), out.begin(), [](double v) { return 1.0 - v; });
  return out;
}

double counterfactual(const SiameseModel& model, const TabularInstance& query, const TabularInstance& reference,
                      std::span<const double> query_mask, std::span<const double> reference_mask) {
  return faithfulness(model, query, reference, complement(query_mask), complement(reference_mask));
}

double counterfactual(const SiameseModel& model, const GraphInstance& query, const GraphInstance& reference,
                      std::span<const double> query_mask, std::span<const double> reference_mask) {
  return faithfulness(model, query, reference, complement(query_mask), complement(reference_mask));
}

double global_faithfulness(const SiameseModel& model, const TabularInstance& x, std::span<const double> mask) {
  return faithfulness(model, x, x, std::vector<double>(x.x.size(), 1.0), mask);
}

double global_faithfulness(const SiameseModel& model, const GraphInstance& g, std::span<const double> mask) {
  return faithfulness(model, g, g, std::vector<double>(g.num_edges(), 1.0), mask);
}

double conformity(const std::set<std::size_t>& global, const std::vector<std::set<std::size_t>>& locals) {
  if (locals.empty()) throw InputError("conformity needs at least one local mask");
  double s = 0.0;
  for (const auto& l : locals) s += jaccard(global, l);
  return s / static_cast<double>(locals.size());
}

std::string to_string(Distance d) {
  switch (d) {
    case Distance::kJaccard: return "jaccard";
    case Distance::kHamming: return "hamming";
    case Distance::kCosine: return "cosine";
  }
  return "?";
}

Distance parse_distance(const std::string& s) {
  for (Distance d : {Distance::kJaccard, Distance::kHamming, Distance::kCosine}) {
    if (to_string(d) == s) return d;
  }
  throw InputError("unknown distance '" + s + "'");
}

double mask_distance(const std::set<std::size_t>& a, const std::set<std::size_t>& b, std::size_t length,
                     Distance d) {
  for (const auto* s : {&a, &b}) {
    if (!s->empty() && *s->rbegin() >= length) throw ShapeError("decoded index beyond mask length");
  }
  std::size_t inter = 0;
  for (std::size_t v : a) inter += b.count(v);
  switch (d) {
    case Distance::kJaccard: return 1.0 - jaccard(a, b);
    case Distance::kHamming: return static_cast<double>(a.size() + b.size() - 2 * inter);
    case Distance::kCosine: {
      if (a.empty() && b.empty()) return 0.0;
      if (a.empty() || b.empty()) return 1.0;
      return 1.0 - static_cast<double>(inter) / std::sqrt(static_cast<double>(a.size() * b.size()));
    }
  }
  return 0.0;
}

double diversity(const std::vector<std::set<std::size_t>>& locals, std::size_t length, Distance distance,
                 bool mean) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    for (std::size_t j = i + 1; j < locals.size(); ++j) {
      total += mask_distance(locals[i], locals[j], length, distance);
      ++pairs;
    }
  }
  if (mean && pairs > 0) total /= static_cast<double>(pairs);
  return total;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::pair<double, double> decoded_scores(const SweepItem& item, Budget budget) {
  if (!item.evaluate) throw InputError("sweep item has no evaluator");
  const std::vector<double> qb = to_binary(topk_decode(item.query_mask, budget), item.query_mask.size());
  const std::vector<double> rb =
      item.shared ? qb : to_binary(topk_decode(item.reference_mask, budget), item.reference_mask.size());
  const double fa = item.evaluate(qb, rb);
  const double cf = item.evaluate(complement(qb), complement(rb));
  return {fa, cf};
}

std::vector<SweepRow> sensitivity_sweep(const std::vector<SweepItem>& items, const std::vector<Budget>& budgets) {
  if (items.empty()) throw InputError("sensitivity sweep needs at least one explanation");
  if (budgets.empty()) throw InputError("sensitivity sweep needs at least one budget");
  std::vector<SweepRow> rows;
  for (const Budget& b : budgets) {
    std::vector<double> fa, cf;
    for (const SweepItem& item : items) {
      const auto [f, c] = decoded_scores(item, b);
      fa.push_back(f);
      cf.push_back(c);
    }
    rows.push_back({b, summarize(fa), summarize(cf)});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "budget,FA_mean,FA_std,CF_mean,CF_std\n";
  char buf[256];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g\n", r.budget.describe().c_str(), r.fa.mean,
                  r.fa.std, r.cf.mean, r.cf.std);
    out += buf;
  }
  return out;
}

}  // namespace snx
