#include "snx/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "snx/attack.hpp"
#include "snx/errors.hpp"

namespace snx {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Domain d) { return d == Domain::kTabular ? "tabular" : "graph"; }

Domain parse_domain_tag(const std::string& s) {
  if (s == "tabular") return Domain::kTabular;
  if (s == "graph") return Domain::kGraph;
  throw InputError("unknown domain '" + s + "' (expected tabular or graph)");
}

std::vector<Budget> default_sweep_budgets(Domain domain) {
  if (domain == Domain::kTabular) {
    return {Budget::count(2),  Budget::count(4),  Budget::count(6),    Budget::count(8),
            Budget::count(10), Budget::count(12), Budget::percent(100)};
  }
  return {Budget::percent(10), Budget::percent(25), Budget::percent(50), Budget::percent(75), Budget::percent(100)};
}

RunConfig RunConfig::defaults(Domain domain) {
  RunConfig c;
  c.domain = domain;
  if (domain == Domain::kTabular) {
    c.explain = ExplainConfig::tabular_defaults();
    c.budget = Budget::count(10);
  } else {
    c.data.instances = 100;
    c.pairs.max_pairs = 20;
    c.explain = ExplainConfig::graph_defaults();
    c.budget = Budget::percent(75);
  }
  c.sweep_budgets = default_sweep_budgets(domain);
  c.explain.seed = c.seed;
  return c;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

Activation parse_activation(const std::string& s) {
  for (Activation a : {Activation::kTanh, Activation::kSigmoid, Activation::kRelu}) {
    if (to_string(a) == s) return a;
  }
  throw InputError("unknown activation '" + s + "'");
}

json budget_json(const Budget& b) { return {{"kind", to_string(b.kind)}, {"value", b.value}}; }

Budget budget_from_json(const json& j) {
  if (!j.is_object()) throw InputError("budget must be an object with kind and value");
  for (const auto& [k, v] : j.items()) {
    if (k != "kind" && k != "value") throw InputError("unknown budget key '" + k + "'");
  }
  return parse_budget(j.at("kind").get<std::string>(), j.at("value").get<double>());
}

json explain_json(const ExplainConfig& e) {
  return {{"global_gamma", e.global_gamma}, {"global_lr", e.global_lr},   {"global_iters", e.global_iters},
          {"global_eta2", e.global_eta2},   {"epsilon", e.epsilon},       {"gamma", e.gamma},
          {"beta", e.beta},                 {"eta1", e.eta1},             {"eta2", e.eta2},
          {"pre_iter", e.pre_iter},         {"max_iter", e.max_iter},     {"init_from_global", e.init_from_global}};
}

// Reads the keys present in `j` into the targets; anything else is an error.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InputError(where_ + " must be an object");
  }
  template <typename T>
  Reader& opt(const std::string& key, T& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InputError(where_ + "." + key + " has the wrong type");
    }
    return *this;
  }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) const { return j_.at(key); }
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw InputError("unknown key '" + where_ + "." + k + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(what + " is not valid JSON: " + e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string padded(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return buf;
}

}  // namespace

void validate_config(const RunConfig& c) {
  if (c.data.instances < 8) throw InputError("data.instances must be at least 8");
  if (c.data.synthetic) {
    if (c.domain == Domain::kTabular) {
      if (c.data.majors < 2) throw InputError("data.majors must be at least 2");
      if (c.data.categories < 2) throw InputError("data.categories must be at least 2");
      if (!(c.data.signal >= 0.0 && c.data.signal <= 1.0)) throw InputError("data.signal must lie in [0, 1]");
    } else if (c.data.min_nodes < 8 || c.data.min_nodes > c.data.max_nodes) {
      throw InputError("graph node range must satisfy 8 <= min_nodes <= max_nodes");
    }
  } else if (c.domain == Domain::kTabular && (c.data.csv.empty() || c.data.schema.empty())) {
    throw InputError("tabular file input needs data.csv and data.schema");
  } else if (c.domain == Domain::kGraph && c.data.graphs.empty()) {
    throw InputError("graph file input needs data.graphs");
  }
  if (c.pairs.per_instance == 0 || c.pairs.same_class > c.pairs.per_instance) {
    throw InputError("pairs need per_instance >= 1 and same_class <= per_instance");
  }
  if (!(c.pairs.train_fraction > 0.0 && c.pairs.train_fraction < 1.0)) {
    throw InputError("pairs.train_fraction must lie in (0, 1)");
  }
  if (c.pairs.max_pairs == 0) throw InputError("pairs.max_pairs must be positive");
  if (c.model.train.learning_rate <= 0.0) throw InputError("model.learning_rate must be positive");
  const ExplainConfig& e = c.explain;
  for (double v : {e.global_gamma, e.gamma, e.beta}) {
    if (!(v >= 0.0)) throw InputError("gamma and beta must be non-negative");
  }
  for (double v : {e.global_lr, e.eta1, e.global_eta2, e.eta2}) {
    if (!(v > 0.0)) throw InputError("step sizes must be positive");
  }
  if (!(e.epsilon >= 0.0)) throw InputError("epsilon must be non-negative");
  if (c.domain == Domain::kGraph && !method_supports_graphs(c.method)) {
    throw InputError("method " + to_string(c.method) + " is tabular only");
  }
  if (c.sweep_budgets.empty()) throw InputError("sweep_budgets must not be empty");
  if (c.attack.dimension < 2) throw InputError("attack.dimension must be at least 2");
  if (c.workers == 0) throw InputError("workers must be at least 1");
  if (c.out.empty()) throw InputError("out must name a directory");
}

RunConfig parse_config(const std::string& text) {
  const json j = parse_json(text, "config");
  if (!j.is_object()) throw InputError("config must be a JSON object");
  Reader top(j, "config");
  int version = 1;
  top.opt("version", version);
  if (version != 1) throw InputError("unsupported config version " + std::to_string(version));
  std::string domain = "tabular";
  top.opt("domain", domain);
  RunConfig c = RunConfig::defaults(parse_domain_tag(domain));

  std::string method = to_string(c.method);
  std::string activation = to_string(c.model.activation);
  top.opt("method", method).opt("seed", c.seed).opt("workers", c.workers).opt("out", c.out);
  c.method = parse_method(method);

  if (top.has("data")) {
    Reader r(top.at("data"), "data");
    r.opt("synthetic", c.data.synthetic)
        .opt("instances", c.data.instances)
        .opt("majors", c.data.majors)
        .opt("categories", c.data.categories)
        .opt("signal", c.data.signal)
        .opt("min_nodes", c.data.min_nodes)
        .opt("max_nodes", c.data.max_nodes)
        .opt("csv", c.data.csv)
        .opt("schema", c.data.schema)
        .opt("graphs", c.data.graphs);
    r.finish();
  }
  if (top.has("pairs")) {
    Reader r(top.at("pairs"), "pairs");
    r.opt("per_instance", c.pairs.per_instance)
        .opt("same_class", c.pairs.same_class)
        .opt("train_fraction", c.pairs.train_fraction)
        .opt("max_pairs", c.pairs.max_pairs);
    r.finish();
  }
  if (top.has("model")) {
    Reader r(top.at("model"), "model");
    r.opt("hidden", c.model.hidden)
        .opt("hidden1", c.model.hidden1)
        .opt("hidden2", c.model.hidden2)
        .opt("activation", activation)
        .opt("epochs", c.model.train.epochs)
        .opt("learning_rate", c.model.train.learning_rate)
        .opt("margin", c.model.train.margin);
    r.finish();
  }
  c.model.activation = parse_activation(activation);
  if (top.has("explain")) {
    Reader r(top.at("explain"), "explain");
    ExplainConfig& e = c.explain;
    r.opt("global_gamma", e.global_gamma)
        .opt("global_lr", e.global_lr)
        .opt("global_iters", e.global_iters)
        .opt("global_eta2", e.global_eta2)
        .opt("epsilon", e.epsilon)
        .opt("gamma", e.gamma)
        .opt("beta", e.beta)
        .opt("eta1", e.eta1)
        .opt("eta2", e.eta2)
        .opt("pre_iter", e.pre_iter)
        .opt("max_iter", e.max_iter)
        .opt("init_from_global", e.init_from_global);
    r.finish();
  }
  if (top.has("budget")) c.budget = budget_from_json(top.at("budget"));
  if (top.has("sweep_budgets")) {
    const json& arr = top.at("sweep_budgets");
    if (!arr.is_array()) throw InputError("sweep_budgets must be an array");
    c.sweep_budgets.clear();
    for (const json& b : arr) c.sweep_budgets.push_back(budget_from_json(b));
  }
  if (top.has("attack")) {
    Reader r(top.at("attack"), "attack");
    r.opt("instances", c.attack.instances)
        .opt("dimension", c.attack.dimension)
        .opt("amplification", c.attack.amplification)
        .opt("max_iter", c.attack.max_iter);
    r.finish();
  }
  top.finish();
  c.explain.seed = c.seed;
  validate_config(c);
  return c;
}

RunConfig load_config(const fs::path& path) { return parse_config(read_text(path)); }

std::string serialize_config(const RunConfig& c) {
  json j;
  j["version"] = 1;
  j["domain"] = to_string(c.domain);
  j["method"] = to_string(c.method);
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["out"] = c.out;
  j["data"] = {{"synthetic", c.data.synthetic}, {"instances", c.data.instances}, {"majors", c.data.majors},
               {"categories", c.data.categories}, {"signal", c.data.signal},       {"min_nodes", c.data.min_nodes},
               {"max_nodes", c.data.max_nodes}, {"csv", c.data.csv},               {"schema", c.data.schema},
               {"graphs", c.data.graphs}};
  j["pairs"] = {{"per_instance", c.pairs.per_instance},
                {"same_class", c.pairs.same_class},
                {"train_fraction", c.pairs.train_fraction},
                {"max_pairs", c.pairs.max_pairs}};
  j["model"] = {{"hidden", c.model.hidden},
                {"hidden1", c.model.hidden1},
                {"hidden2", c.model.hidden2},
                {"activation", to_string(c.model.activation)},
                {"epochs", c.model.train.epochs},
                {"learning_rate", c.model.train.learning_rate},
                {"margin", c.model.train.margin}};
  j["explain"] = explain_json(c.explain);
  j["budget"] = budget_json(c.budget);
  j["sweep_budgets"] = json::array();
  for (const Budget& b : c.sweep_budgets) j["sweep_budgets"].push_back(budget_json(b));
  j["attack"] = {{"instances", c.attack.instances},
                 {"dimension", c.attack.dimension},
                 {"amplification", c.attack.amplification},
                 {"max_iter", c.attack.max_iter}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Data and model

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  if (domain == Domain::kTabular) {
    for (const auto& t : tabular) out.push_back(t.label);
  } else {
    for (const auto& g : graphs) out.push_back(g.label);
  }
  return out;
}

std::size_t Dataset::mask_length(std::size_t id) const {
  return domain == Domain::kTabular ? tabular.at(id).x.size() : graphs.at(id).num_edges();
}

Dataset build_dataset(const RunConfig& c) {
  Dataset d;
  d.domain = c.domain;
  if (c.domain == Domain::kTabular) {
    if (c.data.synthetic) {
      SynthTabular s = synth_tabular(c.seed, c.data.instances, make_synth_schema(c.data.majors, c.data.categories),
                                     c.data.signal);
      d.schema = std::move(s.schema);
      d.tabular = std::move(s.instances);
      d.salient_majors = std::move(s.salient_majors);
    } else {
      d.schema = load_schema(c.data.schema);
      d.tabular = load_tabular_csv(c.data.csv, d.schema);
    }
  } else if (c.data.synthetic) {
    SynthGraphs s = synth_graphs(c.seed, c.data.instances, c.data.min_nodes, c.data.max_nodes);
    d.graphs = std::move(s.instances);
    d.motif_edges = std::move(s.motif_edges);
  } else {
    d.graphs = load_graph_file(c.data.graphs);
    if (d.graphs.empty()) throw InputError("graph file holds no graphs");
  }
  if (d.size() < 8) throw InputError("dataset needs at least 8 instances");

  const std::vector<int> labels = d.labels();
  const Split split = train_test_split(labels, c.pairs.train_fraction, c.seed + 1);
  d.train_pairs = generate_pairs(labels, c.pairs.per_instance, c.pairs.same_class, c.seed + 2, split.train);
  d.train_pairs.split = "train";
  d.explain_pairs = generate_pairs(labels, c.pairs.per_instance, c.pairs.same_class, c.seed + 3, split.test);
  if (d.explain_pairs.pairs.size() > c.pairs.max_pairs) d.explain_pairs.pairs.resize(c.pairs.max_pairs);
  d.explain_pairs.split = "test";
  return d;
}

SiameseModel build_and_train(const RunConfig& c, const Dataset& d, TrainLog* log) {
  if (c.domain == Domain::kTabular) {
    SiameseModel m = SiameseModel::tabular(d.schema.num_minors(), c.model.hidden, c.seed + 4, c.model.activation);
    TrainLog l = train_siamese(m, d.tabular, d.train_pairs, c.model.train);
    if (log) *log = std::move(l);
    return m;
  }
  SiameseModel m =
      SiameseModel::graph(d.graphs.front().features.cols, c.model.hidden1, c.model.hidden2, c.seed + 4,
                          c.model.activation);
  TrainLog l = train_siamese(m, d.graphs, d.train_pairs, c.model.train);
  if (log) *log = std::move(l);
  return m;
}

// ---------------------------------------------------------------------------
// Explanation

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ExplainRun run_explain(const RunConfig& c, const SiameseModel& model, const Dataset& d) {
  if (!model.frozen()) throw StateError("explaining needs a frozen model");
  if ((c.domain == Domain::kTabular) != model.is_tabular()) throw InputError("model kind does not match the domain");
  if (d.explain_pairs.pairs.empty()) throw InputError("no pairs to explain");

  std::set<std::size_t> ids;
  for (const Pair& p : d.explain_pairs.pairs) {
    ids.insert(p.query);
    ids.insert(p.reference);
  }
  const std::vector<std::size_t> id_list(ids.begin(), ids.end());
  std::vector<GlobalMask> globals(id_list.size());
  parallel_for(id_list.size(), c.workers, [&](std::size_t i) {
    const std::size_t id = id_list[i];
    globals[i] = c.domain == Domain::kTabular ? explain_global_tabular(model, d.schema, d.tabular[id], c.explain)
                                              : explain_global_graph(model, d.graphs[id], c.explain);
  });

  ExplainRun run;
  for (std::size_t i = 0; i < id_list.size(); ++i) run.globals.emplace(id_list[i], std::move(globals[i]));

  const auto& pairs = d.explain_pairs.pairs;
  run.results.resize(pairs.size());
  parallel_for(pairs.size(), c.workers, [&](std::size_t i) {
    const Pair& p = pairs[i];
    const auto& gq = run.globals.at(p.query).values;
    const auto& gr = run.globals.at(p.reference).values;
    PairResult& r = run.results[i];
    r.index = i;
    r.pair = p;
    r.explanation = c.domain == Domain::kTabular
                        ? explain(c.method, model, d.schema, d.tabular[p.query], d.tabular[p.reference], p.label, gq,
                                  gr, c.explain)
                        : explain(c.method, model, d.graphs[p.query], d.graphs[p.reference], p.label, gq, gr,
                                  c.explain);
    r.explanation.query_global = gq;
    r.explanation.reference_global = gr;
  });
  return run;
}

// ---------------------------------------------------------------------------
// Evaluation

std::map<std::size_t, std::vector<double>> global_values(const std::map<std::size_t, GlobalMask>& globals) {
  std::map<std::size_t, std::vector<double>> out;
  for (const auto& [id, g] : globals) out.emplace(id, g.values);
  return out;
}

namespace {

std::set<std::size_t> decode_set(std::span<const double> mask, Budget budget, bool all) {
  if (all) {
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < mask.size(); ++i) s.insert(i);
    return s;
  }
  return topk_decode(mask, budget).selected;
}

std::vector<double> indicator(const std::set<std::size_t>& s, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i : s) out[i] = 1.0;
  return out;
}

double pair_faithfulness(const SiameseModel& model, const Dataset& d, const Pair& p, std::span<const double> qm,
                         std::span<const double> rm) {
  return d.domain == Domain::kTabular ? faithfulness(model, d.tabular[p.query], d.tabular[p.reference], qm, rm)
                                      : faithfulness(model, d.graphs[p.query], d.graphs[p.reference], qm, rm);
}

}  // namespace

MetricReport evaluate_results(const SiameseModel& model, const Dataset& d, const std::vector<PairResult>& results,
                              const std::map<std::size_t, std::vector<double>>& globals, Method method,
                              Budget budget, Distance distance) {
  if (results.empty()) throw InputError("no explanations to evaluate");
  MetricReport rep;
  rep.method = method;
  rep.budget = budget;
  const bool all = method == Method::kPickAll;
  std::map<std::size_t, std::vector<double>> conf_by_query;
  std::map<std::size_t, std::vector<std::set<std::size_t>>> locals_by_query;
  std::vector<double> fa, cf, viol, bfa, bcf;
  for (const PairResult& r : results) {
    const Pair& p = r.pair;
    const std::size_t nq = d.mask_length(p.query);
    const std::size_t nr = d.mask_length(p.reference);
    const Explanation& e = r.explanation;
    if (e.query_mask.size() != nq || e.reference_mask.size() != nr) {
      throw ShapeError("stored mask does not match pair " + std::to_string(r.index));
    }
    const auto gq = globals.find(p.query);
    const auto gr = globals.find(p.reference);
    if (gq == globals.end() || gr == globals.end()) {
      throw MissingInputError("global mask missing for pair " + std::to_string(r.index));
    }
    const std::set<std::size_t> sq = decode_set(e.query_mask, budget, all);
    const std::set<std::size_t> sr = decode_set(e.reference_mask, budget, all);
    const std::vector<double> bq = indicator(sq, nq);
    const std::vector<double> br = indicator(sr, nr);

    PairMetrics m;
    m.index = r.index;
    m.query = p.query;
    m.reference = p.reference;
    m.label = p.label;
    m.faithfulness = pair_faithfulness(model, d, p, bq, br);
    m.counterfactual = pair_faithfulness(model, d, p, complement(bq), complement(br));
    // Conformity is measured on the query side. Pick-all's global mask is
    // all-ones as well, so its decoding keeps every entry.
    m.conformity = jaccard(decode_set(gq->second, budget, all), sq);
    m.violation_ratio = e.violation_ratio;
    rep.pairs.push_back(m);

    fa.push_back(m.faithfulness);
    cf.push_back(m.counterfactual);
    viol.push_back(m.violation_ratio);
    const std::vector<double> oq(nq, 1.0), orr(nr, 1.0), zq(nq, 0.0), zr(nr, 0.0);
    bfa.push_back(pair_faithfulness(model, d, p, oq, orr));
    bcf.push_back(pair_faithfulness(model, d, p, zq, zr));
    conf_by_query[p.query].push_back(m.conformity);
    locals_by_query[p.query].push_back(sq);
  }
  std::vector<double> qc, qd;
  for (const auto& [q, vals] : conf_by_query) {
    const double mean = summarize(vals).mean;
    rep.query_conformity[q] = mean;
    qc.push_back(mean);
    const double div = diversity(locals_by_query[q], d.mask_length(q), distance);
    rep.query_diversity[q] = div;
    qd.push_back(div);
  }
  rep.faithfulness = summarize(fa);
  rep.counterfactual = summarize(cf);
  rep.conformity = summarize(qc);
  rep.diversity = summarize(qd);
  rep.violation_ratio = summarize(viol);
  rep.bound_faithfulness = summarize(bfa);
  rep.bound_counterfactual = summarize(bcf);
  return rep;
}

std::vector<SweepItem> local_sweep_items(const SiameseModel& model, const Dataset& d,
                                         const std::vector<PairResult>& results) {
  std::vector<SweepItem> items;
  for (const PairResult& r : results) {
    SweepItem it;
    it.query_mask = r.explanation.query_mask;
    it.reference_mask = r.explanation.reference_mask;
    it.shared = d.domain == Domain::kTabular;
    const Pair p = r.pair;
    it.evaluate = [&model, &d, p](std::span<const double> q, std::span<const double> rm) {
      return pair_faithfulness(model, d, p, q, rm);
    };
    items.push_back(std::move(it));
  }
  return items;
}

std::vector<SweepItem> global_sweep_items(const SiameseModel& model, const Dataset& d,
                                          const std::map<std::size_t, std::vector<double>>& globals) {
  std::vector<SweepItem> items;
  for (const auto& [id, values] : globals) {
    SweepItem it;
    it.query_mask = values;
    it.reference_mask = values;
    it.shared = true;
    it.evaluate = [&model, &d, id](std::span<const double> q, std::span<const double>) {
      return d.domain == Domain::kTabular ? global_faithfulness(model, d.tabular[id], q)
                                          : global_faithfulness(model, d.graphs[id], q);
    };
    items.push_back(std::move(it));
  }
  return items;
}

std::string metrics_csv(const MetricReport& rep) {
  std::string out = "pair,query,reference,label,faithfulness,counterfactual,conformity,violation_ratio\n";
  for (const PairMetrics& m : rep.pairs) {
    out += std::to_string(m.index) + "," + std::to_string(m.query) + "," + std::to_string(m.reference) + "," +
           std::to_string(m.label) + "," + fmt(m.faithfulness) + "," + fmt(m.counterfactual) + "," +
           fmt(m.conformity) + "," + fmt(m.violation_ratio) + "\n";
  }
  return out;
}

std::string queries_csv(const MetricReport& rep) {
  std::string out = "query,conformity,diversity\n";
  for (const auto& [q, c] : rep.query_conformity) {
    out += std::to_string(q) + "," + fmt(c) + "," + fmt(rep.query_diversity.at(q)) + "\n";
  }
  return out;
}

std::string summary_csv(const MetricReport& rep) {
  std::string out = "method,budget,metric,mean,std,count\n";
  const std::string prefix = to_string(rep.method) + "," + rep.budget.describe() + ",";
  auto row = [&](const std::string& name, const Summary& s) {
    out += prefix + name + "," + fmt(s.mean) + "," + fmt(s.std) + "," + std::to_string(s.count) + "\n";
  };
  row("faithfulness", rep.faithfulness);
  row("counterfactual", rep.counterfactual);
  row("conformity", rep.conformity);
  row("diversity", rep.diversity);
  row("violation_ratio", rep.violation_ratio);
  row("pick_all_faithfulness", rep.bound_faithfulness);
  row("pick_all_counterfactual", rep.bound_counterfactual);
  return out;
}

std::string result_document(const RunConfig& c, const PairResult& r, const std::string& trace_file) {
  const Explanation& e = r.explanation;
  const bool all = e.method == Method::kPickAll;
  auto dec = [&](const std::vector<double>& m, bool use_all) {
    const auto s = decode_set(m, c.budget, use_all);
    return std::vector<std::size_t>(s.begin(), s.end());
  };
  json j;
  j["format"] = "snx-result";
  j["version"] = 1;
  j["method"] = to_string(e.method);
  j["domain"] = to_string(e.domain);
  j["pair"] = r.index;
  j["query"] = r.pair.query;
  j["reference"] = r.pair.reference;
  j["label"] = r.pair.label;
  j["query_mask"] = e.query_mask;
  j["reference_mask"] = e.reference_mask;
  j["query_global"] = e.query_global;
  j["reference_global"] = e.reference_global;
  j["local_major"] = e.local_major;
  j["global_major"] = e.global_major;
  j["budget"] = budget_json(c.budget);
  j["decoded"] = {{"query", dec(e.query_mask, all)},
                  {"reference", dec(e.reference_mask, all)},
                  {"query_global", dec(e.query_global, false)},
                  {"reference_global", dec(e.reference_global, false)}};
  j["objective"] = e.objective;
  j["violation_ratio"] = e.violation_ratio;
  j["trace"] = trace_file.empty() ? json(nullptr) : json(trace_file);
  j["hyperparameters"] = explain_json(e.config);
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Commands

void CommandLog::operator()(const std::string& event,
                            const std::vector<std::pair<std::string, std::string>>& fields) const {
  if (!stream) return;
  std::string line = "event=" + event;
  for (const auto& [k, v] : fields) line += " " + k + "=" + v;
  *stream << line << "\n";
  stream->flush();
}

namespace {

fs::path results_dir_for(const RunConfig& c) { return fs::path(c.out) / "results" / to_string(c.method); }

PairResult parse_result_document(const json& j, Domain domain) {
  if (j.value("format", "") != "snx-result" || j.value("version", 0) != 1) {
    throw InputError("not a version-1 result document");
  }
  PairResult r;
  r.index = j.at("pair").get<std::size_t>();
  r.pair.query = j.at("query").get<std::size_t>();
  r.pair.reference = j.at("reference").get<std::size_t>();
  r.pair.label = j.at("label").get<int>();
  Explanation& e = r.explanation;
  e.method = parse_method(j.at("method").get<std::string>());
  e.domain = domain == Domain::kTabular ? MaskDomain::kTabularMinor : MaskDomain::kGraphEdge;
  e.query_mask = j.at("query_mask").get<std::vector<double>>();
  e.reference_mask = j.at("reference_mask").get<std::vector<double>>();
  e.query_global = j.at("query_global").get<std::vector<double>>();
  e.reference_global = j.at("reference_global").get<std::vector<double>>();
  e.local_major = j.at("local_major").get<std::vector<double>>();
  e.global_major = j.at("global_major").get<std::vector<double>>();
  e.objective = j.at("objective").get<double>();
  e.violation_ratio = j.at("violation_ratio").get<double>();
  return r;
}

struct LoadedResults {
  RunConfig config;
  SiameseModel model;
  Dataset data;
  std::vector<PairResult> results;
  std::map<std::size_t, std::vector<double>> globals;
};

LoadedResults load_results(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingInputError("results directory '" + dir.string() + "' does not exist");
  if (!fs::exists(dir / "index.json")) {
    throw InputError("results directory '" + dir.string() + "' contains no explanations");
  }
  const json index = parse_json(read_text(dir / "index.json"), "index.json");
  if (index.value("format", "") != "snx-index" || index.value("version", 0) != 1) {
    throw InputError("index.json is not a version-1 result index");
  }
  const auto files = index.at("pairs").get<std::vector<std::string>>();
  if (files.empty()) throw InputError("results directory '" + dir.string() + "' contains no explanations");

  LoadedResults out{load_config(dir / "config.json"), load_checkpoint(dir / "model.json"), {}, {}, {}};
  out.model.freeze();
  out.data = build_dataset(out.config);
  for (const std::string& f : files) {
    out.results.push_back(parse_result_document(parse_json(read_text(dir / f), f), out.config.domain));
    const PairResult& r = out.results.back();
    if (r.pair.query >= out.data.size() || r.pair.reference >= out.data.size()) {
      throw InputError(f + " refers to an instance outside the dataset");
    }
    out.globals[r.pair.query] = r.explanation.query_global;
    out.globals[r.pair.reference] = r.explanation.reference_global;
  }
  return out;
}

}  // namespace

void cmd_train(const RunConfig& c, const CommandLog& log) {
  validate_config(c);
  const Dataset d = build_dataset(c);
  log("train_start", {{"domain", to_string(c.domain)},
                      {"instances", std::to_string(d.size())},
                      {"train_pairs", std::to_string(d.train_pairs.pairs.size())},
                      {"seed", std::to_string(c.seed)}});
  TrainLog tl;
  const SiameseModel model = build_and_train(c, d, &tl);
  const fs::path out(c.out);
  fs::create_directories(out);
  write_text(out / "config.json", serialize_config(c));
  write_text(out / "model.json", serialize_checkpoint(model));
  std::string csv = "epoch,loss\n";
  for (std::size_t i = 0; i < tl.loss.size(); ++i) csv += std::to_string(i) + "," + fmt(tl.loss[i]) + "\n";
  write_text(out / "train_log.csv", csv);
  log("train_done", {{"initial_loss", fmt(tl.loss.empty() ? 0.0 : tl.loss.front())},
                     {"final_loss", fmt(tl.loss.empty() ? 0.0 : tl.loss.back())},
                     {"checkpoint", (out / "model.json").string()}});
}

fs::path cmd_explain(const RunConfig& c, const CommandLog& log) {
  validate_config(c);
  const fs::path ckpt = fs::path(c.out) / "model.json";
  if (!fs::exists(ckpt)) throw MissingInputError("no checkpoint at '" + ckpt.string() + "'; run train first");
  SiameseModel model = load_checkpoint(ckpt);
  model.freeze();
  const Dataset d = build_dataset(c);
  log("explain_start", {{"method", to_string(c.method)},
                        {"pairs", std::to_string(d.explain_pairs.pairs.size())},
                        {"workers", std::to_string(c.workers)}});
  const ExplainRun run = run_explain(c, model, d);
  const MetricReport rep = evaluate_results(model, d, run.results, global_values(run.globals), c.method, c.budget);

  const fs::path dir = results_dir_for(c);
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir / "pairs");
  fs::create_directories(dir / "globals");
  write_text(dir / "config.json", serialize_config(c));
  write_text(dir / "model.json", serialize_checkpoint(model));

  std::vector<std::string> files(run.results.size());
  parallel_for(run.results.size(), c.workers, [&](std::size_t i) {
    const PairResult& r = run.results[i];
    const std::string stem = "pair_" + padded(r.index);
    std::string trace;
    if (!r.explanation.trace.iterations.empty()) {
      trace = stem + "_trace.csv";
      write_text(dir / "pairs" / trace, trace_csv(r.explanation.trace));
    }
    json doc = json::parse(result_document(c, r, trace));
    const PairMetrics& m = rep.pairs[i];
    doc["metrics"] = {{"faithfulness", m.faithfulness},
                      {"counterfactual", m.counterfactual},
                      {"conformity", m.conformity}};
    write_text(dir / "pairs" / (stem + ".json"), doc.dump(2) + "\n");
    files[i] = "pairs/" + stem + ".json";
  });
  for (const auto& [id, g] : run.globals) {
    json j;
    j["format"] = "snx-global";
    j["version"] = 1;
    j["instance"] = id;
    j["values"] = g.values;
    j["budget"] = budget_json(c.budget);
    const auto s = topk_decode(g.values, c.budget).selected;
    j["decoded"] = std::vector<std::size_t>(s.begin(), s.end());
    write_text(dir / "globals" / ("instance_" + padded(id) + ".json"), j.dump(2) + "\n");
  }
  json index;
  index["format"] = "snx-index";
  index["version"] = 1;
  index["method"] = to_string(c.method);
  index["pairs"] = files;
  write_text(dir / "index.json", index.dump(2) + "\n");
  log("explain_done", {{"method", to_string(c.method)},
                       {"pairs", std::to_string(run.results.size())},
                       {"globals", std::to_string(run.globals.size())},
                       {"faithfulness_mean", fmt(rep.faithfulness.mean)},
                       {"conformity_mean", fmt(rep.conformity.mean)},
                       {"dir", dir.string()}});
  return dir;
}

MetricReport cmd_eval(const fs::path& dir, const EvalOptions& options, const CommandLog& log) {
  const LoadedResults lr = load_results(dir);
  const Budget budget = options.budget.value_or(lr.config.budget);
  const MetricReport rep =
      evaluate_results(lr.model, lr.data, lr.results, lr.globals, lr.config.method, budget, options.distance);
  write_text(dir / "metrics.csv", metrics_csv(rep));
  write_text(dir / "queries.csv", queries_csv(rep));
  write_text(dir / "summary.csv", summary_csv(rep));
  log("eval_done", {{"method", to_string(rep.method)},
                    {"budget", budget.describe()},
                    {"pairs", std::to_string(rep.pairs.size())},
                    {"faithfulness_mean", fmt(rep.faithfulness.mean)},
                    {"counterfactual_mean", fmt(rep.counterfactual.mean)},
                    {"conformity_mean", fmt(rep.conformity.mean)},
                    {"violation_ratio_mean", fmt(rep.violation_ratio.mean)}});
  return rep;
}

std::vector<SweepRow> cmd_sweep(const fs::path& dir, std::vector<Budget> budgets, const CommandLog& log) {
  const LoadedResults lr = load_results(dir);
  if (budgets.empty()) budgets = lr.config.sweep_budgets;
  const auto local = sensitivity_sweep(local_sweep_items(lr.model, lr.data, lr.results), budgets);
  const auto global = sensitivity_sweep(global_sweep_items(lr.model, lr.data, lr.globals), budgets);
  write_text(dir / "sweep.csv", sweep_csv(local));
  write_text(dir / "sweep_global.csv", sweep_csv(global));
  log("sweep_done", {{"budgets", std::to_string(budgets.size())}, {"pairs", std::to_string(lr.results.size())}});
  return local;
}

void cmd_attack(const RunConfig& c, const CommandLog& log) {
  validate_config(c);
  const std::size_t n = c.attack.instances;
  std::vector<AttackInstance> inst(n);
  std::vector<AttackResult> res(n);
  AttackConfig ac;
  ac.amplification = c.attack.amplification;
  ac.max_iter = c.attack.max_iter;
  parallel_for(n, c.workers, [&](std::size_t i) {
    inst[i] = random_attack_instance(c.seed + i, c.attack.dimension);
    res[i] = manipulate_reference(inst[i].theta, inst[i].xs, inst[i].xt, inst[i].target, ac);
  });
  const fs::path dir = fs::path(c.out) / "attack";
  fs::create_directories(dir);
  write_text(dir / "config.json", serialize_config(c));
  std::string csv = "instance,seed,drift,alignment,orthogonality,iterations\n";
  std::size_t ok = 0;
  for (std::size_t i = 0; i < n; ++i) {
    write_text(dir / ("instance_" + padded(i) + ".json"), attack_report_json(inst[i], res[i], c.seed + i));
    csv += std::to_string(i) + "," + std::to_string(c.seed + i) + "," + fmt(res[i].drift) + "," +
           fmt(res[i].alignment) + "," + fmt(res[i].orthogonality) + "," + std::to_string(res[i].iterations) + "\n";
    if (res[i].drift < 1e-6 && res[i].alignment > 0.99) ++ok;
  }
  write_text(dir / "attack.csv", csv);
  log("attack_done", {{"instances", std::to_string(n)}, {"successful", std::to_string(ok)}});
}

}  // namespace snx
