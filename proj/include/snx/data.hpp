#pragma once

// Tabular one-hot encoding, graph edge vectors, ingestion, synthetic data and
// query/reference pair construction.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snx/autodiff.hpp"

namespace snx {

struct MajorFeature {
  std::string name;
  std::vector<std::string> categories;
};

// Ordered major features and their minor (one-hot) expansion.
class TabularSchema {
 public:
  TabularSchema() = default;
  explicit TabularSchema(std::vector<MajorFeature> majors);

  const std::vector<MajorFeature>& majors() const noexcept { return majors_; }
  std::size_t num_majors() const noexcept { return majors_.size(); }
  std::size_t num_minors() const noexcept { return num_minors_; }
  std::size_t offset(std::size_t major) const { return offsets_.at(major); }
  std::vector<std::size_t> block_sizes() const;
  // Major feature owning the given minor index.
  std::size_t major_of(std::size_t minor) const;
  // Throws SchemaError for an unknown category.
  std::size_t category_index(std::size_t major, const std::string& value) const;

  bool operator==(const TabularSchema& other) const;

 private:
  std::vector<MajorFeature> majors_;
  std::vector<std::size_t> offsets_;
  std::size_t num_minors_ = 0;
};

struct TabularInstance {
  std::vector<std::size_t> z;  // category index per major feature
  std::vector<double> x;       // one-hot minor vector, length p
  int label = 0;
};

struct GraphInstance {
  std::size_t num_nodes = 0;
  ad::Tensor features;    // num_nodes x d
  std::vector<double> x;  // edge vector over unordered pairs, length n(n-1)/2
  int label = 0;

  // Present edges in edge-vector order.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;
  // Edge-vector indices of the present edges, same order as edges().
  std::vector<std::size_t> edge_indices() const;
  std::size_t num_edges() const;
};

struct Pair {
  std::size_t query = 0;
  std::size_t reference = 0;
  int label = 0;  // 1 iff both instances share a class label
};

struct PairDataset {
  std::vector<Pair> pairs;
  std::string split;
};

TabularInstance encode_one_hot(const TabularSchema& schema, std::span<const std::string> row,
                               int label = 0);
// Throws SchemaError if the instance breaks the one-hot/schema invariants.
void validate(const TabularSchema& schema, const TabularInstance& instance);
void validate(const GraphInstance& graph);

// Lexicographic upper-triangle index of the unordered pair (i, j), i != j.
std::size_t edge_index(std::size_t i, std::size_t j, std::size_t num_nodes);
std::pair<std::size_t, std::size_t> edge_pair(std::size_t index, std::size_t num_nodes);
std::size_t edge_vector_length(std::size_t num_nodes);

using AdjacencyMatrix = std::vector<std::vector<int>>;
std::vector<double> flatten_adjacency(const AdjacencyMatrix& adjacency);
AdjacencyMatrix unflatten_adjacency(std::span<const double> edges, std::size_t num_nodes);

PairDataset generate_pairs(std::span<const int> labels, std::size_t per_instance = 4,
                           std::size_t same_class = 2, std::uint64_t seed = 0,
                           std::span<const std::size_t> ids = {});

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
// Stratified by label.
Split train_test_split(std::span<const int> labels, double train_fraction, std::uint64_t seed);

// --- files --------------------------------------------------------------------

TabularSchema load_schema(const std::filesystem::path& path);
void save_schema(const TabularSchema& schema, const std::filesystem::path& path);
std::vector<TabularInstance> load_tabular_csv(const std::filesystem::path& data,
                                              const TabularSchema& schema);
std::vector<TabularInstance> load_tabular_csv(const std::filesystem::path& data,
                                              const std::filesystem::path& schema);
void save_tabular_csv(const std::vector<TabularInstance>& instances, const TabularSchema& schema,
                      const std::filesystem::path& path);
std::vector<GraphInstance> load_graph_file(const std::filesystem::path& path);
void save_graph_file(const std::vector<GraphInstance>& graphs, const std::filesystem::path& path);

// --- synthetic data -----------------------------------------------------------

TabularSchema make_synth_schema(std::size_t num_majors = 6, std::size_t categories = 3);

struct SynthTabular {
  TabularSchema schema;
  std::vector<TabularInstance> instances;
  std::vector<std::size_t> salient_majors;
};

// Two designated major features carry the class: with probability
// `signal` the category index equals the label.
SynthTabular synth_tabular(std::uint64_t seed, std::size_t n, const TabularSchema& schema,
                           double signal = 0.9);

struct SynthGraphs {
  std::vector<GraphInstance> instances;
  std::vector<std::vector<std::size_t>> motif_edges;  // edge-vector indices per graph
};

// Ring backgrounds with a planted triangle (label 0) or 4-cycle (label 1) on
// nodes that are pairwise non-adjacent on the ring. Node features are one-hot
// degrees in kSynthDegreeBuckets buckets. Requires 8 <= min <= max.
inline constexpr std::size_t kSynthDegreeBuckets = 6;
SynthGraphs synth_graphs(std::uint64_t seed, std::size_t n, std::size_t min_nodes = 8,
                         std::size_t max_nodes = 12);

}  // namespace snx
