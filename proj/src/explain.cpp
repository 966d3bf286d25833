#include "snx/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "snx/errors.hpp"

namespace snx {

namespace {

using ad::Tensor;
using ad::Var;

Tensor col(std::span<const double> v) { return Tensor::column(std::vector<double>(v.begin(), v.end())); }

std::vector<std::size_t> iota_from(std::size_t start, std::size_t count) {
  std::vector<std::size_t> out(count);
  std::iota(out.begin(), out.end(), start);
  return out;
}

void require_frozen(const SiameseModel& model) {
  if (!model.frozen()) throw StateError("explainers require a frozen model");
}

std::vector<double> sigmoid_all(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(), [](double z) { return sigmoid(z); });
  return out;
}

std::vector<double> logits_of(std::span<const double> mask) {
  std::vector<double> out(mask.size());
  std::transform(mask.begin(), mask.end(), out.begin(),
                 [](double p) { return logit(std::clamp(p, 1e-6, 1.0 - 1e-6)); });
  return out;
}

void check_mask(std::span<const double> mask, std::size_t expected, const char* what) {
  if (mask.empty()) throw InputError(std::string("missing ") + what);
  if (mask.size() != expected) {
    throw ShapeError(std::string(what) + " has length " + std::to_string(mask.size()) + ", expected " +
                     std::to_string(expected));
  }
  for (double v : mask) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError(std::string(what) + " values must lie in [0, 1]");
  }
}

double unmasked_target(const SiameseModel& model, const TabularInstance& q, const TabularInstance& r) {
  const std::vector<double> ones(q.x.size(), 1.0);
  return masked_probability(model, q, r, ones, ones);
}

double unmasked_target(const SiameseModel& model, const GraphInstance& q, const GraphInstance& r) {
  return masked_probability(model, q, r, std::vector<double>(q.num_edges(), 1.0),
                            std::vector<double>(r.num_edges(), 1.0));
}

// Builds the final problem from objective and (full) constraint vector,
// keeping only constraint rows listed in `kept`.
TapeProblem finish(std::shared_ptr<ad::Tape> tape, std::size_t dim, Var objective, std::optional<Var> constraints,
                   const std::vector<std::size_t>& kept) {
  if (!constraints || kept.empty()) {
    tape->affine(objective, 1.0, 0.0);
    return TapeProblem(std::move(tape), dim, 0, objective, std::nullopt);
  }
  const Var g = tape->gather(*constraints, kept);
  const Var lambda = tape->leaf("lambda", kept.size());
  tape->add(objective, tape->dot(lambda, g));
  return TapeProblem(std::move(tape), dim, kept.size(), objective, g);
}

double tabular_violation(const TabularSchema& schema, std::span<const double> m, std::span<const double> global) {
  if (global.empty()) return 0.0;
  const auto n = aggregate_major(m, schema);
  const auto big_n = aggregate_major(global, schema);
  std::vector<double> g(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) g[i] = n[i] - big_n[i];
  return violation_ratio(g);
}

double graph_violation(std::span<const double> ms, std::span<const double> mt, std::span<const double> gs,
                       std::span<const double> gt) {
  if (gs.empty() || gt.empty()) return 0.0;
  std::vector<double> g;
  g.reserve(ms.size() + mt.size());
  for (std::size_t i = 0; i < ms.size(); ++i) g.push_back(ms[i] - gs[i]);
  for (std::size_t i = 0; i < mt.size(); ++i) g.push_back(mt[i] - gt[i]);
  return violation_ratio(g);
}

GdaConfig local_gda(const ExplainConfig& c) {
  GdaConfig g;
  g.eta1 = c.eta1;
  g.eta2 = c.eta2;
  g.pre_iter = c.pre_iter;
  g.max_iter = c.max_iter;
  g.seed = c.seed;
  return g;
}

double final_objective(const GdaTrace& trace) {
  return trace.iterations.empty() ? 0.0 : trace.iterations.back().objective;
}

// Shared Stage-2 driver for tabular data.
Explanation run_local_tabular(Method method, const SiameseModel& model, const TabularSchema& schema,
                              const TabularInstance& query, const TabularInstance& reference,
                              std::span<const double> global_query, const LocalTerms& terms,
                              const ExplainConfig& config) {
  require_frozen(model);
  validate(schema, query);
  validate(schema, reference);
  const std::size_t p = schema.num_minors();
  std::vector<double> global_major;
  if (!global_query.empty()) {
    check_mask(global_query, p, "global mask");
    global_major = aggregate_major(global_query, schema);
  } else if (terms.constrained || terms.beta != 0.0) {
    throw InputError("missing global mask");
  }

  const TapeProblem tp = local_tabular_problem(model, schema, query, reference, global_major, terms);
  const GdaResult res = solve(tp.problem(), std::vector<double>(p, 0.0), local_gda(config));

  Explanation e;
  e.method = method;
  e.domain = MaskDomain::kTabularMinor;
  e.query_mask = sigmoid_all(res.primal);
  e.reference_mask = e.query_mask;
  e.query_global.assign(global_query.begin(), global_query.end());
  e.local_major = aggregate_major(e.query_mask, schema);
  e.global_major = global_major;
  e.trace = res.trace;
  e.config = config;
  e.objective = final_objective(res.trace);
  e.violation_ratio = tabular_violation(schema, e.query_mask, global_query);
  return e;
}

Explanation run_local_graph(Method method, const SiameseModel& model, const GraphInstance& query,
                            const GraphInstance& reference, std::span<const double> gs, std::span<const double> gt,
                            const LocalTerms& terms, const ExplainConfig& config) {
  require_frozen(model);
  validate(query);
  validate(reference);
  const std::size_t ps = query.num_edges();
  const std::size_t pt = reference.num_edges();
  const bool have_global = !gs.empty() || !gt.empty();
  if (have_global || terms.constrained || terms.beta != 0.0) {
    check_mask(gs, ps, "query global mask");
    check_mask(gt, pt, "reference global mask");
  }

  std::vector<double> init(ps + pt, 0.0);
  if (config.init_from_global && have_global) {
    const auto ls = logits_of(gs);
    const auto lt = logits_of(gt);
    std::copy(ls.begin(), ls.end(), init.begin());
    std::copy(lt.begin(), lt.end(), init.begin() + static_cast<std::ptrdiff_t>(ps));
  }

  const TapeProblem tp = local_graph_problem(model, query, reference, gs, gt, terms);
  const GdaResult res = solve(tp.problem(), init, local_gda(config));
  const std::vector<double> m = sigmoid_all(res.primal);

  Explanation e;
  e.method = method;
  e.domain = MaskDomain::kGraphEdge;
  e.query_mask.assign(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(ps));
  e.reference_mask.assign(m.begin() + static_cast<std::ptrdiff_t>(ps), m.end());
  e.query_global.assign(gs.begin(), gs.end());
  e.reference_global.assign(gt.begin(), gt.end());
  e.trace = res.trace;
  e.config = config;
  e.objective = final_objective(res.trace);
  e.violation_ratio = graph_violation(e.query_mask, e.reference_mask, gs, gt);
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Method m) {
  switch (m) {
    case Method::kSnx: return "snx";
    case Method::kSnxKl: return "snx-kl";
    case Method::kSnxUc: return "snx-uc";
    case Method::kSnxGlobal: return "snx-global";
    case Method::kSaliency: return "sm";
    case Method::kPickAll: return "pick-all";
    case Method::kInter: return "inter";
    case Method::kUnion: return "union";
  }
  return "?";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::kSnx,      Method::kSnxKl,   Method::kSnxUc, Method::kSnxGlobal,
                                           Method::kSaliency, Method::kPickAll, Method::kInter, Method::kUnion};
  return methods;
}

Method parse_method(const std::string& s) {
  for (Method m : all_methods()) {
    if (to_string(m) == s) return m;
  }
  throw InputError("unknown method '" + s + "'");
}

bool method_supports_graphs(Method m) { return m != Method::kInter && m != Method::kUnion; }

ExplainConfig ExplainConfig::tabular_defaults() { return ExplainConfig{}; }

ExplainConfig ExplainConfig::graph_defaults() {
  ExplainConfig c;
  c.global_gamma = 1e-1;
  c.global_iters = 200;
  c.gamma = 1e-1;
  c.pre_iter = 0;
  c.max_iter = 400;
  return c;
}

// ---------------------------------------------------------------------------

TapeProblem::TapeProblem(std::shared_ptr<ad::Tape> tape, std::size_t dimension, std::size_t num_constraints,
                         Var objective, std::optional<Var> constraints)
    : tape_(std::move(tape)),
      dimension_(dimension),
      num_constraints_(num_constraints),
      objective_(objective),
      constraints_(constraints) {}

ProblemEval TapeProblem::evaluate(std::span<const double> m, std::span<const double> lambda) const {
  if (m.size() != dimension_) throw ShapeError("primal has the wrong dimension");
  if (lambda.size() != num_constraints_) throw ShapeError("dual has the wrong dimension");
  ad::Bindings b{{"m", col(m)}};
  if (num_constraints_ > 0) b.emplace("lambda", col(lambda));
  tape_->forward(b);
  ProblemEval out;
  out.objective = tape_->value(objective_)[0];
  if (constraints_) out.constraints = tape_->value(*constraints_).data;
  out.lagrangian_grad = tape_->backward().at("m").data;
  return out;
}

ConstrainedProblem TapeProblem::problem() const {
  ConstrainedProblem p;
  p.dimension = dimension_;
  p.num_constraints = num_constraints_;
  TapeProblem self = *this;
  p.evaluate = [self](std::span<const double> m, std::span<const double> lambda) { return self.evaluate(m, lambda); };
  return p;
}

TapeProblem global_tabular_problem(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& x,
                                   double gamma) {
  validate(schema, x);
  const double target = unmasked_target(model, x, x);
  auto tape = std::make_shared<ad::Tape>();
  const ModelVars vars = bind_model(*tape, model, false);
  const std::size_t p = x.x.size();
  const Var logits = tape->leaf("m", p);
  const Var mask = tape->sigmoid(logits);
  const Var xin = tape->constant(col(x.x));
  const Var u = encode_tabular(*tape, model, vars, xin);
  const Var v = encode_tabular(*tape, model, vars, tape->mul(mask, xin));
  const Var prob = probability(*tape, model, similarity(*tape, model, u, v));
  const Var loss = ad::binary_cross_entropy(*tape, target, prob);
  const Var sparsity = tape->sum(tape->noisy_or_blocks(mask, schema.block_sizes()));
  const Var objective = tape->add(loss, tape->affine(sparsity, gamma, 0.0));
  return finish(std::move(tape), p, objective, std::nullopt, {});
}

std::vector<std::pair<std::size_t, std::size_t>> adjacent_edge_pairs(const GraphInstance& g) {
  const auto edges = g.edges();
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t j = 0; j < edges.size(); ++j) {
    for (std::size_t k = j + 1; k < edges.size(); ++k) {
      const auto [a, b] = edges[j];
      const auto [c, d] = edges[k];
      if (a == c || a == d || b == c || b == d) out.emplace_back(j, k);
    }
  }
  return out;
}

TapeProblem global_graph_problem(const SiameseModel& model, const GraphInstance& g, double gamma, double epsilon) {
  validate(g);
  const double target = unmasked_target(model, g, g);
  auto tape = std::make_shared<ad::Tape>();
  const ModelVars vars = bind_model(*tape, model, false);
  const std::size_t e = g.num_edges();
  const Var logits = tape->leaf("m", e);
  const Var mask = tape->sigmoid(logits);
  const Var u = encode_graph(*tape, model, vars, g, tape->constant(Tensor(e, 1, 1.0)));
  const Var v = encode_graph(*tape, model, vars, g, mask);
  const Var prob = probability(*tape, model, similarity(*tape, model, u, v));
  const Var loss = ad::binary_cross_entropy(*tape, target, prob);
  const Var objective = tape->add(loss, tape->affine(tape->sum(mask), gamma, 0.0));

  const auto pairs = adjacent_edge_pairs(g);
  // |M_j - M_k| <= 1 always, so epsilon >= 1 leaves nothing that can bind.
  if (pairs.empty() || epsilon >= 1.0) return finish(std::move(tape), e, objective, std::nullopt, {});
  std::vector<std::size_t> js, ks;
  for (const auto& [j, k] : pairs) {
    js.push_back(j);
    ks.push_back(k);
  }
  const Var diff = tape->abs(tape->sub(tape->gather(mask, js), tape->gather(mask, ks)));
  const Var cons = tape->affine(diff, 1.0, -epsilon);
  return finish(std::move(tape), e, objective, cons, iota_from(0, pairs.size()));
}

TapeProblem local_tabular_problem(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                                  const TabularInstance& reference, std::span<const double> global_major,
                                  const LocalTerms& terms) {
  const std::size_t q = schema.num_majors();
  if ((terms.constrained || terms.beta != 0.0) && global_major.size() != q) {
    throw ShapeError("global major mask must have one entry per major feature");
  }
  const double target = unmasked_target(model, query, reference);
  auto tape = std::make_shared<ad::Tape>();
  const ModelVars vars = bind_model(*tape, model, false);
  const std::size_t p = schema.num_minors();
  const Var mask = tape->sigmoid(tape->leaf("m", p));
  const Var u = encode_tabular(*tape, model, vars, tape->mul(mask, tape->constant(col(query.x))));
  const Var v = encode_tabular(*tape, model, vars, tape->mul(mask, tape->constant(col(reference.x))));
  const Var prob = probability(*tape, model, similarity(*tape, model, u, v));
  const Var loss = ad::binary_cross_entropy(*tape, target, prob);
  const Var n = tape->noisy_or_blocks(mask, schema.block_sizes());
  Var objective = tape->add(loss, tape->affine(tape->sum(n), terms.gamma, 0.0));
  if (terms.beta != 0.0) {
    objective = tape->add(objective, tape->affine(tape->kl_bernoulli(n, col(global_major)), terms.beta, 0.0));
  }
  if (!terms.constrained) return finish(std::move(tape), p, objective, std::nullopt, {});

  // a(m)_i <= 1 always, so rows with N_i >= 1 can never bind.
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < q; ++i) {
    if (global_major[i] < 1.0) kept.push_back(i);
  }
  const Var cons = tape->sub(n, tape->constant(col(global_major)));
  return finish(std::move(tape), p, objective, cons, kept);
}

TapeProblem local_graph_problem(const SiameseModel& model, const GraphInstance& query,
                                const GraphInstance& reference, std::span<const double> query_global,
                                std::span<const double> reference_global, const LocalTerms& terms) {
  const std::size_t ps = query.num_edges();
  const std::size_t pt = reference.num_edges();
  const bool need_global = terms.constrained || terms.beta != 0.0;
  if (need_global && (query_global.size() != ps || reference_global.size() != pt)) {
    throw ShapeError("global edge masks do not match the graphs");
  }
  const double target = unmasked_target(model, query, reference);
  auto tape = std::make_shared<ad::Tape>();
  const ModelVars vars = bind_model(*tape, model, false);
  const Var mask = tape->sigmoid(tape->leaf("m", ps + pt));
  const Var ms = tape->gather(mask, iota_from(0, ps));
  const Var mt = tape->gather(mask, iota_from(ps, pt));
  const Var u = encode_graph(*tape, model, vars, query, ms);
  const Var v = encode_graph(*tape, model, vars, reference, mt);
  const Var prob = probability(*tape, model, similarity(*tape, model, u, v));
  const Var loss = ad::binary_cross_entropy(*tape, target, prob);
  Var objective = tape->add(loss, tape->affine(tape->sum(mask), terms.gamma, 0.0));
  if (terms.beta != 0.0) {
    const Var kl = tape->add(tape->kl_bernoulli(ms, col(query_global)), tape->kl_bernoulli(mt, col(reference_global)));
    objective = tape->add(objective, tape->affine(kl, terms.beta, 0.0));
  }
  if (!terms.constrained) return finish(std::move(tape), ps + pt, objective, std::nullopt, {});

  std::vector<double> bound(query_global.begin(), query_global.end());
  bound.insert(bound.end(), reference_global.begin(), reference_global.end());
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < bound.size(); ++i) {
    if (bound[i] < 1.0) kept.push_back(i);
  }
  const Var cons = tape->sub(mask, tape->constant(col(bound)));
  return finish(std::move(tape), ps + pt, objective, cons, kept);
}

// ---------------------------------------------------------------------------

GlobalMask explain_global_tabular(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& x,
                                  const ExplainConfig& config) {
  require_frozen(model);
  const TapeProblem tp = global_tabular_problem(model, schema, x, config.global_gamma);
  GdaConfig g;
  g.eta1 = config.global_lr;
  g.eta2 = config.global_eta2;
  g.max_iter = config.global_iters;
  g.seed = config.seed;
  GdaResult res = solve(tp.problem(), std::vector<double>(tp.dimension(), 0.0), g);
  return {sigmoid_all(res.primal), std::move(res.trace)};
}

GlobalMask explain_global_graph(const SiameseModel& model, const GraphInstance& g, const ExplainConfig& config) {
  require_frozen(model);
  const TapeProblem tp = global_graph_problem(model, g, config.global_gamma, config.epsilon);
  GdaConfig gc;
  gc.eta1 = config.global_lr;
  gc.eta2 = config.global_eta2;
  gc.max_iter = config.global_iters;
  gc.seed = config.seed;
  GdaResult res = solve(tp.problem(), std::vector<double>(tp.dimension(), 0.0), gc);
  return {sigmoid_all(res.primal), std::move(res.trace)};
}

Explanation explain_local_snx(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                              const TabularInstance& reference, std::span<const double> global_query,
                              const ExplainConfig& config) {
  if (global_query.empty()) throw InputError("missing global mask");
  return run_local_tabular(Method::kSnx, model, schema, query, reference, global_query,
                           {config.gamma, 0.0, true}, config);
}

Explanation explain_local_snx(const SiameseModel& model, const GraphInstance& query, const GraphInstance& reference,
                              std::span<const double> global_query, std::span<const double> global_reference,
                              const ExplainConfig& config) {
  if (global_query.empty() || global_reference.empty()) throw InputError("missing global mask");
  return run_local_graph(Method::kSnx, model, query, reference, global_query, global_reference,
                         {config.gamma, 0.0, true}, config);
}

Explanation explain_local_kl(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                             const TabularInstance& reference, std::span<const double> global_query,
                             const ExplainConfig& config) {
  if (global_query.empty()) throw InputError("missing global mask");
  return run_local_tabular(Method::kSnxKl, model, schema, query, reference, global_query,
                           {config.gamma, config.beta, false}, config);
}

Explanation explain_local_kl(const SiameseModel& model, const GraphInstance& query, const GraphInstance& reference,
                             std::span<const double> global_query, std::span<const double> global_reference,
                             const ExplainConfig& config) {
  if (global_query.empty() || global_reference.empty()) throw InputError("missing global mask");
  return run_local_graph(Method::kSnxKl, model, query, reference, global_query, global_reference,
                         {config.gamma, config.beta, false}, config);
}

Explanation explain_local_unconstrained(const SiameseModel& model, const TabularSchema& schema,
                                        const TabularInstance& query, const TabularInstance& reference,
                                        const ExplainConfig& config, std::span<const double> global_query) {
  return run_local_tabular(Method::kSnxUc, model, schema, query, reference, global_query, {config.gamma, 0.0, false},
                           config);
}

Explanation explain_local_unconstrained(const SiameseModel& model, const GraphInstance& query,
                                        const GraphInstance& reference, const ExplainConfig& config,
                                        std::span<const double> global_query,
                                        std::span<const double> global_reference) {
  return run_local_graph(Method::kSnxUc, model, query, reference, global_query, global_reference,
                         {config.gamma, 0.0, false}, config);
}

std::vector<double> normalize_saliency(std::span<const double> gradient) {
  std::vector<double> out(gradient.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::fabs(gradient[i]);
    peak = std::max(peak, out[i]);
  }
  if (peak > 0.0) {
    for (double& v : out) v /= peak;
  }
  return out;
}

namespace {

// Training loss on a raw score, built on the tape.
Var sn_loss(ad::Tape& tape, const SiameseModel& model, Var raw, int pair_label, double margin = 4.0) {
  if (model.metric() == Metric::kCosine) {
    const double y = pair_label == 1 ? 1.0 : -1.0;
    return tape.relu(tape.affine(raw, -y, 1.0));
  }
  if (pair_label == 1) return tape.square(raw);
  return tape.square(tape.relu(tape.affine(raw, -1.0, margin)));
}

}  // namespace

Explanation explain_saliency_map(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                                 const TabularInstance& reference, int pair_label,
                                 std::span<const double> global_query) {
  require_frozen(model);
  validate(schema, query);
  validate(schema, reference);
  ad::Tape tape;
  const ModelVars vars = bind_model(tape, model, false);
  const Var xs = tape.leaf("xs", query.x.size());
  const Var u = encode_tabular(tape, model, vars, xs);
  const Var v = encode_tabular(tape, model, vars, tape.constant(col(reference.x)));
  tape.affine(sn_loss(tape, model, similarity(tape, model, u, v), pair_label), 1.0, 0.0);
  tape.forward({{"xs", col(query.x)}});

  Explanation e;
  e.method = Method::kSaliency;
  e.domain = MaskDomain::kTabularMinor;
  e.query_mask = normalize_saliency(tape.backward().at("xs").data);
  e.reference_mask = e.query_mask;
  e.local_major = aggregate_major(e.query_mask, schema);
  if (!global_query.empty()) {
    check_mask(global_query, query.x.size(), "global mask");
    e.query_global.assign(global_query.begin(), global_query.end());
    e.global_major = aggregate_major(global_query, schema);
  }
  e.violation_ratio = tabular_violation(schema, e.query_mask, global_query);
  return e;
}

Explanation explain_saliency_map(const SiameseModel& model, const GraphInstance& query, const GraphInstance& reference,
                                 int pair_label, std::span<const double> global_query,
                                 std::span<const double> global_reference) {
  require_frozen(model);
  validate(query);
  validate(reference);
  ad::Tape tape;
  const ModelVars vars = bind_model(tape, model, false);
  const Var ws = tape.leaf("ws", query.num_edges());
  const Var wt = tape.leaf("wt", reference.num_edges());
  const Var u = encode_graph(tape, model, vars, query, ws);
  const Var v = encode_graph(tape, model, vars, reference, wt);
  tape.affine(sn_loss(tape, model, similarity(tape, model, u, v), pair_label), 1.0, 0.0);
  tape.forward({{"ws", Tensor(query.num_edges(), 1, 1.0)}, {"wt", Tensor(reference.num_edges(), 1, 1.0)}});
  const ad::Gradients grads = tape.backward();

  Explanation e;
  e.method = Method::kSaliency;
  e.domain = MaskDomain::kGraphEdge;
  e.query_mask = normalize_saliency(grads.at("ws").data);
  e.reference_mask = normalize_saliency(grads.at("wt").data);
  if (!global_query.empty() && !global_reference.empty()) {
    check_mask(global_query, query.num_edges(), "query global mask");
    check_mask(global_reference, reference.num_edges(), "reference global mask");
    e.query_global.assign(global_query.begin(), global_query.end());
    e.reference_global.assign(global_reference.begin(), global_reference.end());
  }
  e.violation_ratio = graph_violation(e.query_mask, e.reference_mask, e.query_global, e.reference_global);
  return e;
}

Explanation explain_pick_all(std::size_t query_length, std::size_t reference_length, MaskDomain domain) {
  if (domain == MaskDomain::kTabularMinor && query_length != reference_length) {
    throw ShapeError("tabular masks are shared and must have equal length");
  }
  Explanation e;
  e.method = Method::kPickAll;
  e.domain = domain;
  e.query_mask.assign(query_length, 1.0);
  e.reference_mask.assign(reference_length, 1.0);
  return e;
}

Explanation explain_global_only(std::span<const double> global_query, std::span<const double> global_reference,
                                MaskDomain domain) {
  if (global_query.empty()) throw InputError("missing global mask");
  Explanation e;
  e.method = Method::kSnxGlobal;
  e.domain = domain;
  e.query_mask.assign(global_query.begin(), global_query.end());
  e.query_global = e.query_mask;
  if (domain == MaskDomain::kTabularMinor) {
    e.reference_mask = e.query_mask;
  } else {
    if (global_reference.empty()) throw InputError("missing reference global mask");
    e.reference_mask.assign(global_reference.begin(), global_reference.end());
    e.reference_global = e.reference_mask;
  }
  return e;
}

namespace {

Explanation run_combined(Method method, CombineMode mode, const SiameseModel& model, const TabularSchema& schema,
                         const TabularInstance& query, const TabularInstance& reference,
                         std::span<const double> gs, std::span<const double> gt, const ExplainConfig& config) {
  if (gs.empty() || gt.empty()) throw InputError("missing global mask");
  const std::vector<double> combined = combine_masks(gs, gt, mode);
  Explanation e = run_local_tabular(method, model, schema, query, reference, combined, {config.gamma, 0.0, true}, config);
  e.reference_global.assign(gt.begin(), gt.end());
  return e;
}

}  // namespace

Explanation explain_inter(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                          const TabularInstance& reference, std::span<const double> global_query,
                          std::span<const double> global_reference, const ExplainConfig& config) {
  return run_combined(Method::kInter, CombineMode::kInter, model, schema, query, reference, global_query,
                      global_reference, config);
}

Explanation explain_union(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                          const TabularInstance& reference, std::span<const double> global_query,
                          std::span<const double> global_reference, const ExplainConfig& config) {
  return run_combined(Method::kUnion, CombineMode::kUnion, model, schema, query, reference, global_query,
                      global_reference, config);
}

Explanation explain(Method method, const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                    const TabularInstance& reference, int pair_label, std::span<const double> global_query,
                    std::span<const double> global_reference, const ExplainConfig& config) {
  Explanation e;
  switch (method) {
    case Method::kSnx: return explain_local_snx(model, schema, query, reference, global_query, config);
    case Method::kSnxKl: return explain_local_kl(model, schema, query, reference, global_query, config);
    case Method::kSnxUc: return explain_local_unconstrained(model, schema, query, reference, config, global_query);
    case Method::kSaliency: return explain_saliency_map(model, schema, query, reference, pair_label, global_query);
    case Method::kInter:
      return explain_inter(model, schema, query, reference, global_query, global_reference, config);
    case Method::kUnion:
      return explain_union(model, schema, query, reference, global_query, global_reference, config);
    case Method::kPickAll:
      e = explain_pick_all(query.x.size(), reference.x.size(), MaskDomain::kTabularMinor);
      break;
    case Method::kSnxGlobal:
      e = explain_global_only(global_query, global_reference, MaskDomain::kTabularMinor);
      break;
  }
  e.local_major = aggregate_major(e.query_mask, schema);
  if (!global_query.empty()) {
    e.query_global.assign(global_query.begin(), global_query.end());
    e.global_major = aggregate_major(global_query, schema);
  }
  e.violation_ratio = tabular_violation(schema, e.query_mask, global_query);
  e.config = config;
  return e;
}

Explanation explain(Method method, const SiameseModel& model, const GraphInstance& query,
                    const GraphInstance& reference, int pair_label, std::span<const double> global_query,
                    std::span<const double> global_reference, const ExplainConfig& config) {
  Explanation e;
  switch (method) {
    case Method::kSnx: return explain_local_snx(model, query, reference, global_query, global_reference, config);
    case Method::kSnxKl: return explain_local_kl(model, query, reference, global_query, global_reference, config);
    case Method::kSnxUc:
      return explain_local_unconstrained(model, query, reference, config, global_query, global_reference);
    case Method::kSaliency:
      return explain_saliency_map(model, query, reference, pair_label, global_query, global_reference);
    case Method::kInter:
    case Method::kUnion:
      throw InputError(to_string(method) + " needs aligned features and is tabular only");
    case Method::kPickAll:
      e = explain_pick_all(query.num_edges(), reference.num_edges(), MaskDomain::kGraphEdge);
      break;
    case Method::kSnxGlobal:
      e = explain_global_only(global_query, global_reference, MaskDomain::kGraphEdge);
      break;
  }
  if (!global_query.empty() && !global_reference.empty()) {
    e.query_global.assign(global_query.begin(), global_query.end());
    e.reference_global.assign(global_reference.begin(), global_reference.end());
  }
  e.violation_ratio = graph_violation(e.query_mask, e.reference_mask, e.query_global, e.reference_global);
  e.config = config;
  return e;
}

}  // namespace snx
