#include "snx/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "snx/errors.hpp"

namespace snx {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

MaskParams MaskParams::zeros(MaskDomain domain, std::size_t length) {
  return {domain, std::vector<double>(length, 0.0)};
}

std::vector<double> MaskParams::values() const {
  std::vector<double> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(), sigmoid);
  return out;
}

std::string to_string(MaskDomain d) { return d == MaskDomain::kTabularMinor ? "tabular-minor" : "graph-edge"; }

MaskDomain parse_domain(const std::string& s) {
  if (s == "tabular-minor") return MaskDomain::kTabularMinor;
  if (s == "graph-edge") return MaskDomain::kGraphEdge;
  throw InputError("unknown mask domain '" + s + "'");
}

std::string to_string(Budget::Kind k) { return k == Budget::Kind::kCount ? "count" : "percent"; }

Budget parse_budget(const std::string& kind, double value) {
  if (kind == "count") {
    if (!(value >= 1.0) || value != std::floor(value)) throw InputError("top-k budget must be a positive integer");
    return Budget::count(static_cast<std::size_t>(value));
  }
  if (kind == "percent") {
    if (!(value > 0.0 && value <= 100.0)) throw InputError("top-percent budget must lie in (0, 100]");
    return Budget::percent(value);
  }
  throw InputError("unknown budget kind '" + kind + "'");
}

std::string serialize_mask(const MaskParams& mask, Budget budget) {
  nlohmann::json j;
  j["format"] = "snx-mask";
  j["version"] = 1;
  j["domain"] = to_string(mask.domain);
  j["logits"] = mask.logits;
  j["budget"] = {{"kind", to_string(budget.kind)}, {"value", budget.value}};
  const DecodedMask d = topk_decode(mask.values(), budget);
  j["decoded"] = std::vector<std::size_t>(d.selected.begin(), d.selected.end());
  return j.dump(2) + "\n";
}

MaskParams parse_mask(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("mask document is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "snx-mask" || j.value("version", 0) != 1) {
    throw InputError("not a version-1 mask document");
  }
  MaskParams m;
  m.domain = parse_domain(j.at("domain").get<std::string>());
  m.logits = j.at("logits").get<std::vector<double>>();
  return m;
}

std::vector<double> aggregate_major(std::span<const double> minor_mask, const TabularSchema& schema) {
  if (minor_mask.size() != schema.num_minors()) throw ShapeError("mask length does not match schema");
  const auto sizes = schema.block_sizes();
  std::vector<double> out(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    double prod = 1.0;
    for (std::size_t j = 0; j < sizes[i]; ++j) prod *= 1.0 - minor_mask[schema.offset(i) + j];
    out[i] = 1.0 - prod;
  }
  return out;
}

std::size_t Budget::resolve(std::size_t length) const {
  if (kind == Kind::kCount) {
    if (value < 1.0 || value > static_cast<double>(length) || value != std::floor(value)) {
      throw InputError("top-k count " + std::to_string(value) + " outside [1, " + std::to_string(length) + "]");
    }
    return static_cast<std::size_t>(value);
  }
  if (!(value > 0.0 && value <= 100.0)) throw InputError("top-k percent must be in (0, 100]");
  // Guard against 75% of 4 landing on 3.0000000000000004.
  const double exact = value * static_cast<double>(length) / 100.0;
  const auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::min(length, std::max<std::size_t>(k, length == 0 ? 0 : 1));
}

std::string Budget::describe() const {
  if (kind == Kind::kCount) return "top" + std::to_string(static_cast<std::size_t>(value));
  std::string s = std::to_string(value);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return "top" + s + "pct";
}

DecodedMask topk_decode(std::span<const double> mask, Budget budget) {
  const std::size_t k = budget.resolve(mask.size());
  std::vector<std::size_t> order(mask.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mask[a] > mask[b]; });
  DecodedMask out;
  out.budget = budget;
  out.selected.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

std::vector<double> to_binary(const DecodedMask& decoded, std::size_t length) {
  std::vector<double> out(length, 0.0);
  for (std::size_t i : decoded.selected) {
    if (i >= length) throw ShapeError("decoded index out of range");
    out[i] = 1.0;
  }
  return out;
}

double kl_bernoulli(std::span<const double> local, std::span<const double> global, double delta) {
  if (local.size() != global.size()) throw ShapeError("kl_bernoulli: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < local.size(); ++i) {
    const double a = std::clamp(local[i], delta, 1.0 - delta);
    const double b = std::clamp(global[i], delta, 1.0 - delta);
    s += a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
  }
  return s;
}

double jaccard(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (std::size_t v : a) inter += b.count(v);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> combine_masks(std::span<const double> a, std::span<const double> b, CombineMode mode) {
  if (a.size() != b.size()) throw ShapeError("combine_masks: masks are not aligned");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = mode == CombineMode::kInter ? std::min(a[i], b[i]) : std::max(a[i], b[i]);
  }
  return out;
}

}  // namespace snx
