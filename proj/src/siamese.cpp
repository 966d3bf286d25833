#include "snx/siamese.hpp"

#include <algorithm>
#include <map>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "snx/errors.hpp"

namespace snx {

using json = nlohmann::json;

namespace {

constexpr double kCosineFloor = 1e-12;
constexpr int kCheckpointVersion = 1;

ad::Tensor random_matrix(std::size_t rows, std::size_t cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  ad::Tensor t(rows, cols);
  for (double& v : t.data) v = normal(rng);
  return t;
}

ad::Var activate(ad::Tape& tape, Activation a, ad::Var x) {
  switch (a) {
    case Activation::kTanh:
      return tape.tanh(x);
    case Activation::kSigmoid:
      return tape.sigmoid(x);
    case Activation::kRelu:
      return tape.relu(x);
  }
  throw InputError("unknown activation");
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kRelu:
      return "relu";
  }
  return "?";
}

std::string to_string(Metric m) { return m == Metric::kCosine ? "cosine" : "euclidean"; }
std::string to_string(ProbMap p) { return p == ProbMap::kAffine ? "affine" : "sigmoid"; }

namespace {

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "relu") return Activation::kRelu;
  throw ParseError(0, "unknown activation '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

SiameseModel SiameseModel::tabular(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                                   Activation activation) {
  if (input_dim == 0 || hidden_dim == 0) throw InputError("MLP dimensions must be positive");
  std::mt19937_64 rng(seed);
  MlpEncoder enc;
  enc.input_dim = input_dim;
  enc.hidden_dim = hidden_dim;
  enc.activation = activation;
  enc.w1 = random_matrix(hidden_dim, input_dim, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
  enc.b1 = random_matrix(hidden_dim, 1, 0.1, rng);
  SiameseModel m;
  m.encoder_ = std::move(enc);
  m.metric_ = Metric::kCosine;
  return m;
}

SiameseModel SiameseModel::graph(std::size_t feature_dim, std::size_t hidden1, std::size_t hidden2,
                                 std::uint64_t seed, Activation activation) {
  if (feature_dim == 0 || hidden1 == 0 || hidden2 == 0) throw InputError("GCN dimensions must be positive");
  std::mt19937_64 rng(seed);
  GcnEncoder enc;
  enc.feature_dim = feature_dim;
  enc.hidden1 = hidden1;
  enc.hidden2 = hidden2;
  enc.activation = activation;
  enc.w1 = random_matrix(feature_dim, hidden1, 1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
  enc.w2 = random_matrix(hidden1, hidden2, 1.0 / std::sqrt(static_cast<double>(hidden1)), rng);
  SiameseModel m;
  m.encoder_ = std::move(enc);
  m.metric_ = Metric::kEuclidean;
  return m;
}

MlpEncoder& SiameseModel::mutable_mlp() {
  if (frozen_) throw StateError("model is frozen");
  return std::get<MlpEncoder>(encoder_);
}

GcnEncoder& SiameseModel::mutable_gcn() {
  if (frozen_) throw StateError("model is frozen");
  return std::get<GcnEncoder>(encoder_);
}

void SiameseModel::set_prob_map(ProbMap map) {
  if (frozen_) throw StateError("model is frozen");
  prob_map_ = map;
}

std::vector<const ad::Tensor*> SiameseModel::parameters() const {
  if (is_tabular()) return {&mlp().w1, &mlp().b1};
  return {&gcn().w1, &gcn().w2};
}

std::vector<ad::Tensor*> SiameseModel::mutable_parameters() {
  if (frozen_) throw StateError("model is frozen");
  if (is_tabular()) {
    auto& e = std::get<MlpEncoder>(encoder_);
    return {&e.w1, &e.b1};
  }
  auto& e = std::get<GcnEncoder>(encoder_);
  return {&e.w1, &e.w2};
}

bool SiameseModel::operator==(const SiameseModel& other) const {
  if (is_tabular() != other.is_tabular() || metric_ != other.metric_ || prob_map_ != other.prob_map_ ||
      frozen_ != other.frozen_) {
    return false;
  }
  if (is_tabular()) {
    if (mlp().hidden_dim != other.mlp().hidden_dim || mlp().activation != other.mlp().activation) return false;
  } else {
    if (gcn().hidden1 != other.gcn().hidden1 || gcn().hidden2 != other.gcn().hidden2 ||
        gcn().activation != other.gcn().activation) {
      return false;
    }
  }
  const auto a = parameters();
  const auto b = other.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i]->same_shape(*b[i]) || a[i]->data != b[i]->data) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape builders

ModelVars bind_model(ad::Tape& tape, const SiameseModel& model, bool as_leaves) {
  ModelVars vars;
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (as_leaves) {
      vars.params.push_back(tape.leaf("theta" + std::to_string(i), params[i]->rows, params[i]->cols));
    } else {
      vars.params.push_back(tape.constant(*params[i]));
    }
  }
  return vars;
}

ad::Bindings model_bindings(const SiameseModel& model) {
  ad::Bindings b;
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) b.emplace("theta" + std::to_string(i), *params[i]);
  return b;
}

ad::Var encode_tabular(ad::Tape& tape, const SiameseModel& model, const ModelVars& vars, ad::Var input) {
  if (!model.is_tabular()) throw InputError("model is not a tabular MLP");
  const ad::Var pre = tape.add(tape.matmul(vars.params[0], input), vars.params[1]);
  return activate(tape, model.mlp().activation, pre);
}

ad::Var encode_graph(ad::Tape& tape, const SiameseModel& model, const ModelVars& vars,
                     const GraphInstance& graph, ad::Var edge_weights) {
  if (model.is_tabular()) throw InputError("model is not a graph GCN");
  const GcnEncoder& enc = model.gcn();
  if (graph.features.cols != enc.feature_dim || graph.features.rows != graph.num_nodes) {
    throw ShapeError("graph node features do not match the encoder's feature dimension");
  }
  const ad::Var adj = tape.edges_to_adjacency(edge_weights, graph.num_nodes, graph.edges());
  const ad::Var prop = tape.normalize_adjacency(adj);
  const ad::Var feats = tape.constant(graph.features);
  const ad::Var h1 = activate(tape, enc.activation, tape.matmul(prop, tape.matmul(feats, vars.params[0])));
  const ad::Var h2 = activate(tape, enc.activation, tape.matmul(prop, tape.matmul(h1, vars.params[1])));
  return tape.mean_rows(h2);
}

ad::Var similarity(ad::Tape& tape, const SiameseModel& model, ad::Var u, ad::Var v) {
  if (model.metric() == Metric::kCosine) return tape.cosine(u, v, kCosineFloor);
  return tape.l2norm(tape.sub(u, v));
}

ad::Var probability(ad::Tape& tape, const SiameseModel& model, ad::Var raw) {
  if (model.metric() == Metric::kCosine) {
    if (model.prob_map() == ProbMap::kAffine) return tape.clamp(tape.affine(raw, 0.5, 0.5), 0.0, 1.0);
    return tape.sigmoid(raw);
  }
  if (model.prob_map() == ProbMap::kAffine) return tape.exp(tape.neg(raw));
  return tape.affine(tape.sigmoid(tape.neg(raw)), 2.0, 0.0);
}

double score_to_prob(const SiameseModel& model, double raw) {
  ad::Tape tape;
  probability(tape, model, tape.leaf("raw", 1));
  return tape.forward({{"raw", ad::Tensor::scalar(raw)}});
}

// ---------------------------------------------------------------------------
// Direct evaluation

namespace {

void check_input(const SiameseModel& model, const TabularInstance& inst) {
  if (!model.is_tabular()) throw InputError("model is not a tabular MLP");
  if (inst.x.size() != model.mlp().input_dim) {
    throw ShapeError("instance has " + std::to_string(inst.x.size()) + " minor features, model expects " +
                     std::to_string(model.mlp().input_dim));
  }
}

void check_input(const SiameseModel& model, const GraphInstance& g) {
  if (model.is_tabular()) throw InputError("model is not a graph GCN");
  if (g.features.cols != model.gcn().feature_dim) throw ShapeError("node feature dimension mismatch");
}

std::vector<double> masked_input(const TabularInstance& inst, std::span<const double> mask) {
  if (mask.size() != inst.x.size()) throw ShapeError("mask length does not match instance");
  std::vector<double> out(inst.x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] * inst.x[i];
  return out;
}

std::vector<double> masked_edges(const GraphInstance& g, std::span<const double> mask) {
  if (mask.size() != g.num_edges()) throw ShapeError("edge mask length does not match graph");
  return {mask.begin(), mask.end()};
}

struct PairEval {
  double raw;
  double prob;
  std::vector<double> u, v;
};

PairEval eval_tabular(const SiameseModel& model, std::vector<double> xs, std::vector<double> xt) {
  ad::Tape tape;
  const ModelVars vars = bind_model(tape, model, false);
  const ad::Var u = encode_tabular(tape, model, vars, tape.constant(ad::Tensor::column(std::move(xs))));
  const ad::Var v = encode_tabular(tape, model, vars, tape.constant(ad::Tensor::column(std::move(xt))));
  const ad::Var raw = similarity(tape, model, u, v);
  probability(tape, model, raw);
  const double prob = tape.forward({});
  return {tape.value(raw)[0], prob, tape.value(u).data, tape.value(v).data};
}

PairEval eval_graph(const SiameseModel& model, const GraphInstance& gs, std::vector<double> ws,
                    const GraphInstance& gt, std::vector<double> wt) {
  ad::Tape tape;
  const ModelVars vars = bind_model(tape, model, false);
  const ad::Var u = encode_graph(tape, model, vars, gs, tape.constant(ad::Tensor::column(std::move(ws))));
  const ad::Var v = encode_graph(tape, model, vars, gt, tape.constant(ad::Tensor::column(std::move(wt))));
  const ad::Var raw = similarity(tape, model, u, v);
  probability(tape, model, raw);
  const double prob = tape.forward({});
  return {tape.value(raw)[0], prob, tape.value(u).data, tape.value(v).data};
}

void check_degenerate(const SiameseModel& model, const PairEval& e) {
  if (model.metric() == Metric::kCosine && (norm2(e.u) == 0.0 || norm2(e.v) == 0.0)) {
    throw DegenerateEmbeddingError("zero-norm embedding under cosine similarity");
  }
}

}  // namespace

std::vector<double> embed(const SiameseModel& model, const TabularInstance& instance) {
  check_input(model, instance);
  ad::Tape tape;
  const ModelVars vars = bind_model(tape, model, false);
  const ad::Var e = encode_tabular(tape, model, vars, tape.constant(ad::Tensor::column(instance.x)));
  tape.sum(e);
  tape.forward({});
  return tape.value(e).data;
}

std::vector<double> embed(const SiameseModel& model, const GraphInstance& instance) {
  check_input(model, instance);
  ad::Tape tape;
  const ModelVars vars = bind_model(tape, model, false);
  const ad::Var e = encode_graph(tape, model, vars, instance,
                                 tape.constant(ad::Tensor::column(std::vector<double>(instance.num_edges(), 1.0))));
  tape.sum(e);
  tape.forward({});
  return tape.value(e).data;
}

double predict_pair(const SiameseModel& model, const TabularInstance& query, const TabularInstance& reference) {
  check_input(model, query);
  check_input(model, reference);
  const PairEval e = eval_tabular(model, query.x, reference.x);
  check_degenerate(model, e);
  return e.raw;
}

double predict_pair(const SiameseModel& model, const GraphInstance& query, const GraphInstance& reference) {
  check_input(model, query);
  check_input(model, reference);
  const PairEval e = eval_graph(model, query, std::vector<double>(query.num_edges(), 1.0), reference,
                                std::vector<double>(reference.num_edges(), 1.0));
  check_degenerate(model, e);
  return e.raw;
}

double masked_probability(const SiameseModel& model, const TabularInstance& query,
                          const TabularInstance& reference, std::span<const double> query_mask,
                          std::span<const double> reference_mask) {
  check_input(model, query);
  check_input(model, reference);
  return eval_tabular(model, masked_input(query, query_mask), masked_input(reference, reference_mask)).prob;
}

double masked_probability(const SiameseModel& model, const GraphInstance& query,
                          const GraphInstance& reference, std::span<const double> query_mask,
                          std::span<const double> reference_mask) {
  check_input(model, query);
  check_input(model, reference);
  return eval_graph(model, query, masked_edges(query, query_mask), reference,
                    masked_edges(reference, reference_mask))
      .prob;
}

// ---------------------------------------------------------------------------
// Training

double hinge_loss(double score, int pair_label) {
  const double signed_label = pair_label == 1 ? 1.0 : -1.0;
  return std::max(0.0, 1.0 - signed_label * score);
}

double contrastive_loss(double distance, int pair_label, double margin) {
  if (pair_label == 1) return distance * distance;
  const double gap = std::max(0.0, margin - distance);
  return gap * gap;
}

namespace {

ad::Var pair_loss(ad::Tape& tape, const SiameseModel& model, ad::Var raw, int label, double margin) {
  if (model.metric() == Metric::kCosine) {
    const double signed_label = label == 1 ? 1.0 : -1.0;
    return tape.relu(tape.affine(raw, -signed_label, 1.0));
  }
  if (label == 1) return tape.square(raw);
  return tape.square(tape.relu(tape.affine(raw, -1.0, margin)));
}

template <typename Instance, typename Encode>
TrainLog train_impl(SiameseModel& model, const std::vector<Instance>& instances, const PairDataset& pairs,
                    const TrainConfig& config, Encode encode) {
  if (model.frozen()) throw StateError("cannot train a frozen model");
  if (pairs.pairs.empty()) throw InputError("training set is empty");
  if (!(config.learning_rate > 0.0)) throw InputError("learning rate must be positive");

  ad::Tape tape;
  const ModelVars vars = bind_model(tape, model, true);
  std::map<std::size_t, ad::Var> embeddings;
  auto embedding_of = [&](std::size_t id) {
    if (id >= instances.size()) throw InputError("pair refers to unknown instance");
    auto it = embeddings.find(id);
    if (it != embeddings.end()) return it->second;
    const ad::Var e = encode(tape, vars, instances[id]);
    embeddings.emplace(id, e);
    return e;
  };

  ad::Var total{};
  bool have = false;
  for (const Pair& p : pairs.pairs) {
    const ad::Var raw = similarity(tape, model, embedding_of(p.query), embedding_of(p.reference));
    const ad::Var loss = pair_loss(tape, model, raw, p.label, config.margin);
    total = have ? tape.add(total, loss) : loss;
    have = true;
  }
  tape.affine(total, 1.0 / static_cast<double>(pairs.pairs.size()), 0.0);

  TrainLog log;
  auto params = model.mutable_parameters();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = tape.forward(model_bindings(model));
    if (!std::isfinite(loss)) throw DivergenceError(epoch, "training loss is not finite");
    log.loss.push_back(loss);
    const ad::Gradients grads = tape.backward();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const ad::Tensor& g = grads.at("theta" + std::to_string(i));
      for (std::size_t k = 0; k < g.size(); ++k) params[i]->data[k] -= config.learning_rate * g[k];
    }
  }
  log.loss.push_back(tape.forward(model_bindings(model)));
  model.freeze();
  return log;
}

}  // namespace

TrainLog train_siamese(SiameseModel& model, const std::vector<TabularInstance>& instances,
                       const PairDataset& pairs, const TrainConfig& config) {
  for (const auto& inst : instances) check_input(model, inst);
  return train_impl(model, instances, pairs, config,
                    [&](ad::Tape& tape, const ModelVars& vars, const TabularInstance& inst) {
                      return encode_tabular(tape, model, vars, tape.constant(ad::Tensor::column(inst.x)));
                    });
}

TrainLog train_siamese(SiameseModel& model, const std::vector<GraphInstance>& instances,
                       const PairDataset& pairs, const TrainConfig& config) {
  for (const auto& inst : instances) check_input(model, inst);
  return train_impl(model, instances, pairs, config,
                    [&](ad::Tape& tape, const ModelVars& vars, const GraphInstance& g) {
                      const ad::Var w = tape.constant(ad::Tensor::column(std::vector<double>(g.num_edges(), 1.0)));
                      return encode_graph(tape, model, vars, g, w);
                    });
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json tensor_json(const ad::Tensor& t) { return {{"rows", t.rows}, {"cols", t.cols}, {"data", t.data}}; }

ad::Tensor tensor_from(const json& j) {
  return ad::Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                    j.at("data").get<std::vector<double>>());
}

}  // namespace

std::string serialize_checkpoint(const SiameseModel& model) {
  json doc;
  doc["format"] = "snx-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["metric"] = to_string(model.metric());
  doc["prob_map"] = to_string(model.prob_map());
  doc["frozen"] = model.frozen();
  if (model.is_tabular()) {
    const MlpEncoder& e = model.mlp();
    doc["encoder"] = "mlp";
    doc["input_dim"] = e.input_dim;
    doc["hidden_dim"] = e.hidden_dim;
    doc["activation"] = to_string(e.activation);
    doc["parameters"] = {{"w1", tensor_json(e.w1)}, {"b1", tensor_json(e.b1)}};
  } else {
    const GcnEncoder& e = model.gcn();
    doc["encoder"] = "gcn";
    doc["feature_dim"] = e.feature_dim;
    doc["hidden1"] = e.hidden1;
    doc["hidden2"] = e.hidden2;
    doc["activation"] = to_string(e.activation);
    doc["parameters"] = {{"w1", tensor_json(e.w1)}, {"w2", tensor_json(e.w2)}};
  }
  return doc.dump(1) + "\n";
}

SiameseModel parse_checkpoint(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("checkpoint: ") + e.what());
  }
  try {
    if (doc.at("format") != "snx-checkpoint") throw ParseError(0, "not an snx checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError(0, "unsupported checkpoint version " + doc["version"].dump());
    }
    SiameseModel m;
    const std::string kind = doc.at("encoder");
    const json& params = doc.at("parameters");
    if (kind == "mlp") {
      MlpEncoder e;
      e.input_dim = doc.at("input_dim");
      e.hidden_dim = doc.at("hidden_dim");
      e.activation = parse_activation(doc.at("activation"));
      e.w1 = tensor_from(params.at("w1"));
      e.b1 = tensor_from(params.at("b1"));
      if (e.w1.rows != e.hidden_dim || e.w1.cols != e.input_dim || e.b1.rows != e.hidden_dim || e.b1.cols != 1) {
        throw ParseError(0, "mlp parameter shapes do not match dimensions");
      }
      m.encoder_ = std::move(e);
    } else if (kind == "gcn") {
      GcnEncoder e;
      e.feature_dim = doc.at("feature_dim");
      e.hidden1 = doc.at("hidden1");
      e.hidden2 = doc.at("hidden2");
      e.activation = parse_activation(doc.at("activation"));
      e.w1 = tensor_from(params.at("w1"));
      e.w2 = tensor_from(params.at("w2"));
      if (e.w1.rows != e.feature_dim || e.w1.cols != e.hidden1 || e.w2.rows != e.hidden1 || e.w2.cols != e.hidden2) {
        throw ParseError(0, "gcn parameter shapes do not match dimensions");
      }
      m.encoder_ = std::move(e);
    } else {
      throw ParseError(0, "unknown encoder '" + kind + "'");
    }
    const std::string metric = doc.at("metric");
    if (metric == "cosine") {
      m.metric_ = Metric::kCosine;
    } else if (metric == "euclidean") {
      m.metric_ = Metric::kEuclidean;
    } else {
      throw ParseError(0, "unknown metric '" + metric + "'");
    }
    const std::string pm = doc.at("prob_map");
    if (pm == "affine") {
      m.prob_map_ = ProbMap::kAffine;
    } else if (pm == "sigmoid") {
      m.prob_map_ = ProbMap::kSigmoid;
    } else {
      throw ParseError(0, "unknown prob_map '" + pm + "'");
    }
    m.frozen_ = doc.at("frozen").get<bool>();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const SiameseModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << serialize_checkpoint(model);
}

SiameseModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace snx
