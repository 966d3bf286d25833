#include "snx/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "snx/errors.hpp"

namespace snx {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Schema

TabularSchema::TabularSchema(std::vector<MajorFeature> majors) : majors_(std::move(majors)) {
  std::set<std::string> names;
  for (const MajorFeature& m : majors_) {
    if (m.categories.size() < 2) {
      throw SchemaError("major feature '" + m.name + "' needs at least 2 categories");
    }
    if (!names.insert(m.name).second) throw SchemaError("duplicate major feature '" + m.name + "'");
    std::set<std::string> cats(m.categories.begin(), m.categories.end());
    if (cats.size() != m.categories.size()) {
      throw SchemaError("duplicate category in major feature '" + m.name + "'");
    }
    offsets_.push_back(num_minors_);
    num_minors_ += m.categories.size();
  }
}

std::vector<std::size_t> TabularSchema::block_sizes() const {
  std::vector<std::size_t> sizes;
  sizes.reserve(majors_.size());
  for (const MajorFeature& m : majors_) sizes.push_back(m.categories.size());
  return sizes;
}

std::size_t TabularSchema::major_of(std::size_t minor) const {
  if (minor >= num_minors_) throw InputError("minor index out of range");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), minor);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

std::size_t TabularSchema::category_index(std::size_t major, const std::string& value) const {
  const auto& cats = majors_.at(major).categories;
  auto it = std::find(cats.begin(), cats.end(), value);
  if (it == cats.end()) {
    throw SchemaError("unknown category '" + value + "' for major feature '" + majors_[major].name + "'");
  }
  return static_cast<std::size_t>(it - cats.begin());
}

bool TabularSchema::operator==(const TabularSchema& other) const {
  if (majors_.size() != other.majors_.size()) return false;
  for (std::size_t i = 0; i < majors_.size(); ++i) {
    if (majors_[i].name != other.majors_[i].name ||
        majors_[i].categories != other.majors_[i].categories) {
      return false;
    }
  }
  return true;
}

TabularInstance encode_one_hot(const TabularSchema& schema, std::span<const std::string> row,
                               int label) {
  if (row.size() != schema.num_majors()) {
    throw SchemaError("row has " + std::to_string(row.size()) + " values, schema has " +
                      std::to_string(schema.num_majors()) + " major features");
  }
  TabularInstance inst;
  inst.label = label;
  inst.x.assign(schema.num_minors(), 0.0);
  for (std::size_t i = 0; i < row.size(); ++i) {
    const std::size_t c = schema.category_index(i, row[i]);
    inst.z.push_back(c);
    inst.x[schema.offset(i) + c] = 1.0;
  }
  return inst;
}

void validate(const TabularSchema& schema, const TabularInstance& inst) {
  if (inst.x.size() != schema.num_minors() || inst.z.size() != schema.num_majors()) {
    throw SchemaError("instance dimensions do not match schema");
  }
  const auto sizes = schema.block_sizes();
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (inst.z[i] >= sizes[i]) throw SchemaError("category index out of range");
    double total = 0.0;
    for (std::size_t j = 0; j < sizes[i]; ++j) {
      const double v = inst.x[schema.offset(i) + j];
      if (v != 0.0 && v != 1.0) throw SchemaError("minor feature is not binary");
      total += v;
    }
    if (total != 1.0) throw SchemaError("major block " + std::to_string(i) + " is not one-hot");
    if (inst.x[schema.offset(i) + inst.z[i]] != 1.0) throw SchemaError("x inconsistent with z");
  }
}

// ---------------------------------------------------------------------------
// Graphs

std::size_t edge_vector_length(std::size_t num_nodes) {
  return num_nodes < 2 ? 0 : num_nodes * (num_nodes - 1) / 2;
}

std::size_t edge_index(std::size_t i, std::size_t j, std::size_t num_nodes) {
  if (i == j || i >= num_nodes || j >= num_nodes) throw InputError("invalid node pair");
  if (i > j) std::swap(i, j);
  // Rows before i contribute (n-1) + (n-2) + ... + (n-i) entries.
  return i * num_nodes - i * (i + 1) / 2 + (j - i - 1);
}

std::pair<std::size_t, std::size_t> edge_pair(std::size_t index, std::size_t num_nodes) {
  if (index >= edge_vector_length(num_nodes)) throw InputError("edge index out of range");
  std::size_t i = 0;
  std::size_t row_len = num_nodes - 1;
  while (index >= row_len) {
    index -= row_len;
    ++i;
    --row_len;
  }
  return {i, i + 1 + index};
}

std::vector<std::pair<std::size_t, std::size_t>> GraphInstance::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < num_nodes; ++i) {
    for (std::size_t j = i + 1; j < num_nodes; ++j, ++k) {
      if (x[k] != 0.0) out.emplace_back(i, j);
    }
  }
  return out;
}

std::vector<std::size_t> GraphInstance::edge_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] != 0.0) out.push_back(k);
  }
  return out;
}

std::size_t GraphInstance::num_edges() const {
  return static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [](double v) { return v != 0.0; }));
}

void validate(const GraphInstance& g) {
  if (g.num_nodes == 0) throw InputError("graph has no nodes");
  if (g.x.size() != edge_vector_length(g.num_nodes)) throw ShapeError("edge vector length mismatch");
  if (g.features.rows != g.num_nodes || g.features.cols == 0) {
    throw ShapeError("node feature matrix must be num_nodes x d");
  }
  for (double v : g.x) {
    if (v != 0.0 && v != 1.0) throw InputError("edge vector is not binary");
  }
}

std::vector<double> flatten_adjacency(const AdjacencyMatrix& adjacency) {
  const std::size_t n = adjacency.size();
  for (const auto& row : adjacency) {
    if (row.size() != n) throw InputError("adjacency matrix is not square");
  }
  std::vector<double> out;
  out.reserve(edge_vector_length(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency[i][i] != 0) throw InputError("adjacency matrix has a self loop");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (adjacency[i][j] != adjacency[j][i]) throw InputError("adjacency matrix is not symmetric");
      if (adjacency[i][j] != 0 && adjacency[i][j] != 1) throw InputError("adjacency matrix is not binary");
      out.push_back(static_cast<double>(adjacency[i][j]));
    }
  }
  return out;
}

AdjacencyMatrix unflatten_adjacency(std::span<const double> edges, std::size_t num_nodes) {
  if (edges.size() != edge_vector_length(num_nodes)) throw ShapeError("edge vector length mismatch");
  AdjacencyMatrix adj(num_nodes, std::vector<int>(num_nodes, 0));
  std::size_t k = 0;
  for (std::size_t i = 0; i < num_nodes; ++i) {
    for (std::size_t j = i + 1; j < num_nodes; ++j, ++k) {
      adj[i][j] = adj[j][i] = edges[k] != 0.0 ? 1 : 0;
    }
  }
  return adj;
}

// ---------------------------------------------------------------------------
// Pairs and splits

PairDataset generate_pairs(std::span<const int> labels, std::size_t per_instance,
                           std::size_t same_class, std::uint64_t seed,
                           std::span<const std::size_t> ids) {
  if (same_class > per_instance) throw InputError("same_class exceeds per_instance");
  std::vector<std::size_t> pool;
  if (ids.empty()) {
    pool.resize(labels.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  } else {
    pool.assign(ids.begin(), ids.end());
  }
  if (pool.empty()) throw InputError("no instances to pair");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t id : pool) {
    if (id >= labels.size()) throw InputError("instance id out of range");
    by_class[labels[id]].push_back(id);
  }
  const std::size_t different = per_instance - same_class;
  for (const auto& [label, members] : by_class) {
    if (members.size() < same_class + 1) {
      throw InputError("class " + std::to_string(label) + " has too few instances for " +
                       std::to_string(same_class) + " same-class references");
    }
    if (pool.size() - members.size() < different) {
      throw InputError("class " + std::to_string(label) + " has too few different-class references");
    }
  }

  std::mt19937_64 rng(seed);
  PairDataset out;
  out.pairs.reserve(pool.size() * per_instance);
  for (std::size_t q : pool) {
    std::vector<std::size_t> same, other;
    for (std::size_t id : pool) {
      if (id == q) continue;
      (labels[id] == labels[q] ? same : other).push_back(id);
    }
    std::shuffle(same.begin(), same.end(), rng);
    std::shuffle(other.begin(), other.end(), rng);
    for (std::size_t k = 0; k < same_class; ++k) out.pairs.push_back({q, same[k], 1});
    for (std::size_t k = 0; k < different; ++k) out.pairs.push_back({q, other[k], 0});
  }
  return out;
}

Split train_test_split(std::span<const int> labels, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InputError("train fraction must be in (0,1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split split;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

TabularSchema load_schema(const std::filesystem::path& path) {
  auto in = open_in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, "schema '" + path.string() + "': " + e.what());
  }
  if (!doc.contains("majors") || !doc["majors"].is_array()) {
    throw ParseError(0, "schema '" + path.string() + "' lacks a 'majors' array");
  }
  std::vector<MajorFeature> majors;
  for (const json& m : doc["majors"]) {
    majors.push_back({m.at("name").get<std::string>(), m.at("categories").get<std::vector<std::string>>()});
  }
  return TabularSchema(std::move(majors));
}

void save_schema(const TabularSchema& schema, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "snx-schema";
  doc["version"] = 1;
  doc["majors"] = json::array();
  for (const MajorFeature& m : schema.majors()) {
    doc["majors"].push_back({{"name", m.name}, {"categories", m.categories}});
  }
  open_out(path) << doc.dump(2) << '\n';
}

std::vector<TabularInstance> load_tabular_csv(const std::filesystem::path& data,
                                              const std::filesystem::path& schema) {
  return load_tabular_csv(data, load_schema(schema));
}

std::vector<TabularInstance> load_tabular_csv(const std::filesystem::path& data,
                                              const TabularSchema& schema) {
  auto in = open_in(data);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header row");
  ++line_no;
  const auto header = split_csv_line(line);
  if (header.size() != schema.num_majors() + 1 || header.back() != "label") {
    throw ParseError(line_no, "header must list the schema's major features followed by 'label'");
  }
  for (std::size_t i = 0; i < schema.num_majors(); ++i) {
    if (header[i] != schema.majors()[i].name) {
      throw ParseError(line_no, "header column '" + header[i] + "' does not match schema feature '" +
                                    schema.majors()[i].name + "'");
    }
  }

  std::vector<TabularInstance> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " columns, got " +
                                    std::to_string(cells.size()));
    }
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(cells.back(), &used);
      if (used != cells.back().size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ParseError(line_no, "label '" + cells.back() + "' is not an integer");
    }
    cells.pop_back();
    try {
      out.push_back(encode_one_hot(schema, cells, label));
    } catch (const SchemaError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void save_tabular_csv(const std::vector<TabularInstance>& instances, const TabularSchema& schema,
                      const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const MajorFeature& m : schema.majors()) out << m.name << ',';
  out << "label\n";
  for (const TabularInstance& inst : instances) {
    for (std::size_t i = 0; i < schema.num_majors(); ++i) {
      out << schema.majors()[i].categories.at(inst.z[i]) << ',';
    }
    out << inst.label << '\n';
  }
}

std::vector<GraphInstance> load_graph_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<GraphInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      GraphInstance g;
      g.num_nodes = rec.at("nodes").get<std::size_t>();
      if (g.num_nodes == 0) throw InputError("graph has no nodes");
      g.label = rec.at("label").get<int>();
      if (rec.contains("features")) {
        const auto rows = rec["features"].get<std::vector<std::vector<double>>>();
        if (rows.size() != g.num_nodes || rows.front().empty()) {
          throw InputError("features must have one non-empty row per node");
        }
        g.features = ad::Tensor(g.num_nodes, rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (rows[i].size() != g.features.cols) throw InputError("ragged feature rows");
          for (std::size_t c = 0; c < rows[i].size(); ++c) g.features(i, c) = rows[i][c];
        }
      } else {
        g.features = ad::Tensor(g.num_nodes, 1, 1.0);
      }
      g.x.assign(edge_vector_length(g.num_nodes), 0.0);
      for (const json& e : rec.at("edges")) {
        const auto pair = e.get<std::vector<std::size_t>>();
        if (pair.size() != 2) throw InputError("edge must have two endpoints");
        g.x[edge_index(pair[0], pair[1], g.num_nodes)] = 1.0;
      }
      out.push_back(std::move(g));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void save_graph_file(const std::vector<GraphInstance>& graphs, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const GraphInstance& g : graphs) {
    json rec;
    rec["nodes"] = g.num_nodes;
    json feats = json::array();
    for (std::size_t i = 0; i < g.features.rows; ++i) {
      json row = json::array();
      for (std::size_t c = 0; c < g.features.cols; ++c) row.push_back(g.features(i, c));
      feats.push_back(row);
    }
    rec["features"] = feats;
    json edges = json::array();
    for (const auto& [i, j] : g.edges()) edges.push_back({i, j});
    rec["edges"] = edges;
    rec["label"] = g.label;
    out << rec.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic data

TabularSchema make_synth_schema(std::size_t num_majors, std::size_t categories) {
  std::vector<MajorFeature> majors;
  for (std::size_t i = 0; i < num_majors; ++i) {
    MajorFeature m{"f" + std::to_string(i), {}};
    for (std::size_t c = 0; c < categories; ++c) m.categories.push_back("c" + std::to_string(c));
    majors.push_back(std::move(m));
  }
  return TabularSchema(std::move(majors));
}

SynthTabular synth_tabular(std::uint64_t seed, std::size_t n, const TabularSchema& schema,
                           double signal) {
  if (schema.num_majors() < 2) throw InputError("synthetic tabular data needs at least 2 major features");
  if (n < 2) throw InputError("synthetic tabular data needs at least 2 instances");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  std::shuffle(labels.begin(), labels.end(), rng);

  SynthTabular out;
  out.schema = schema;
  out.salient_majors = {0, 1};
  const auto sizes = schema.block_sizes();
  for (std::size_t i = 0; i < n; ++i) {
    TabularInstance inst;
    inst.label = labels[i];
    inst.x.assign(schema.num_minors(), 0.0);
    for (std::size_t m = 0; m < sizes.size(); ++m) {
      std::size_t c;
      const bool planted = m < 2;
      if (planted && unit(rng) < signal) {
        c = static_cast<std::size_t>(labels[i]) % sizes[m];
      } else {
        c = std::uniform_int_distribution<std::size_t>(0, sizes[m] - 1)(rng);
      }
      inst.z.push_back(c);
      inst.x[schema.offset(m) + c] = 1.0;
    }
    out.instances.push_back(std::move(inst));
  }
  return out;
}

SynthGraphs synth_graphs(std::uint64_t seed, std::size_t n, std::size_t min_nodes, std::size_t max_nodes) {
  if (min_nodes < 8 || max_nodes < min_nodes) throw InputError("node range must satisfy 8 <= min <= max");
  if (n < 2) throw InputError("synthetic graph data needs at least 2 graphs");
  std::mt19937_64 rng(seed);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  std::shuffle(labels.begin(), labels.end(), rng);

  SynthGraphs out;
  for (std::size_t gi = 0; gi < n; ++gi) {
    GraphInstance g;
    g.label = labels[gi];
    g.num_nodes = std::uniform_int_distribution<std::size_t>(min_nodes, max_nodes)(rng);
    g.x.assign(edge_vector_length(g.num_nodes), 0.0);

    // Background: a ring through the nodes in random order, so that every
    // background node has degree 2 and only the motif breaks regularity.
    std::vector<std::size_t> ring(g.num_nodes);
    std::iota(ring.begin(), ring.end(), std::size_t{0});
    std::shuffle(ring.begin(), ring.end(), rng);
    for (std::size_t k = 0; k < g.num_nodes; ++k) {
      g.x[edge_index(ring[k], ring[(k + 1) % g.num_nodes], g.num_nodes)] = 1.0;
    }

    // Motif nodes are pairwise non-adjacent on the ring: pick positions with
    // gaps of at least 2 by spreading the spare slots at random.
    const std::size_t motif_size = g.label == 0 ? 3 : 4;
    std::vector<std::size_t> gaps(motif_size, 2);
    for (std::size_t spare = g.num_nodes - 2 * motif_size; spare > 0; --spare) {
      ++gaps[std::uniform_int_distribution<std::size_t>(0, motif_size - 1)(rng)];
    }
    std::vector<std::size_t> chosen;
    std::size_t pos = std::uniform_int_distribution<std::size_t>(0, g.num_nodes - 1)(rng);
    for (std::size_t k = 0; k < motif_size; ++k) {
      chosen.push_back(ring[pos % g.num_nodes]);
      pos += gaps[k];
    }
    std::vector<std::size_t> motif;
    for (std::size_t k = 0; k < motif_size; ++k) {
      const std::size_t idx = edge_index(chosen[k], chosen[(k + 1) % motif_size], g.num_nodes);
      g.x[idx] = 1.0;
      motif.push_back(idx);
    }
    std::sort(motif.begin(), motif.end());
    out.motif_edges.push_back(std::move(motif));

    // One-hot node degree; constant features leave a GCN with almost no signal.
    std::vector<std::size_t> degree(g.num_nodes, 0);
    for (const auto& [a, b] : g.edges()) {
      ++degree[a];
      ++degree[b];
    }
    g.features = ad::Tensor(g.num_nodes, kSynthDegreeBuckets, 0.0);
    for (std::size_t v = 0; v < g.num_nodes; ++v) g.features(v, std::min(degree[v], kSynthDegreeBuckets - 1)) = 1.0;
    out.instances.push_back(std::move(g));
  }
  return out;
}

}  // namespace snx
