#pragma once

// Logit-parameterized masks, major-feature aggregation, top-k decoding,
// Bernoulli KL, Jaccard similarity and mask combination.

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "snx/data.hpp"

namespace snx {

enum class MaskDomain { kTabularMinor, kGraphEdge };

struct MaskParams {
  MaskDomain domain = MaskDomain::kTabularMinor;
  std::vector<double> logits;

  static MaskParams zeros(MaskDomain domain, std::size_t length);
  std::vector<double> values() const;  // sigmoid(logits), each in (0, 1)
};

double sigmoid(double x);
double logit(double p);

// N_i = 1 - prod_j (1 - M_{i,j}) over each major block.
std::vector<double> aggregate_major(std::span<const double> minor_mask, const TabularSchema& schema);

// How many entries a top-k decode keeps.
struct Budget {
  enum class Kind { kCount, kPercent };
  Kind kind = Kind::kCount;
  double value = 10;

  static Budget count(std::size_t k) { return {Kind::kCount, static_cast<double>(k)}; }
  static Budget percent(double p) { return {Kind::kPercent, p}; }
  // Number of entries selected out of `length`; percentages round up.
  // Throws InputError unless 1 <= k <= length or 0 < percent <= 100.
  std::size_t resolve(std::size_t length) const;
  std::string describe() const;
};

struct DecodedMask {
  std::set<std::size_t> selected;
  Budget budget;
};

// Largest values first, ties broken by lowest index.
DecodedMask topk_decode(std::span<const double> mask, Budget budget);
// Binary indicator vector of a decoded mask.
std::vector<double> to_binary(const DecodedMask& decoded, std::size_t length);

double kl_bernoulli(std::span<const double> local, std::span<const double> global, double delta = 1e-7);

double jaccard(const std::set<std::size_t>& a, const std::set<std::size_t>& b);

enum class CombineMode { kInter, kUnion };
std::vector<double> combine_masks(std::span<const double> a, std::span<const double> b, CombineMode mode);

std::string to_string(MaskDomain d);
MaskDomain parse_domain(const std::string& s);

// Versioned JSON with domain tag, logits, decoded set and decode budget.
std::string serialize_mask(const MaskParams& mask, Budget budget);
MaskParams parse_mask(const std::string& text);

std::string to_string(Budget::Kind k);
Budget parse_budget(const std::string& kind, double value);

}  // namespace snx
