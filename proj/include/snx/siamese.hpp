#pragma once

// Target Siamese networks: tabular MLP + cosine similarity, graph GCN +
// Euclidean distance. Both are differentiable through snx::ad so the
// explainers can treat them as fixed black boxes with gradients.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "snx/autodiff.hpp"
#include "snx/data.hpp"

namespace snx {

enum class Activation { kTanh, kSigmoid, kRelu };
enum class Metric { kCosine, kEuclidean };
// kAffine: (raw + 1) / 2 for cosine, exp(-raw) for euclidean.
// kSigmoid: sigmoid(raw) for cosine, 2 sigmoid(-raw) for euclidean.
enum class ProbMap { kAffine, kSigmoid };

struct MlpEncoder {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 16;
  ad::Tensor w1;  // hidden_dim x input_dim
  ad::Tensor b1;  // hidden_dim x 1
  Activation activation = Activation::kTanh;
};

struct GcnEncoder {
  std::size_t feature_dim = 1;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  ad::Tensor w1;  // feature_dim x hidden1
  ad::Tensor w2;  // hidden1 x hidden2
  Activation activation = Activation::kTanh;
};

class SiameseModel {
 public:
  static SiameseModel tabular(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed,
                              Activation activation = Activation::kTanh);
  static SiameseModel graph(std::size_t feature_dim, std::size_t hidden1, std::size_t hidden2,
                            std::uint64_t seed, Activation activation = Activation::kTanh);

  bool is_tabular() const noexcept { return std::holds_alternative<MlpEncoder>(encoder_); }
  const MlpEncoder& mlp() const { return std::get<MlpEncoder>(encoder_); }
  const GcnEncoder& gcn() const { return std::get<GcnEncoder>(encoder_); }
  MlpEncoder& mutable_mlp();
  GcnEncoder& mutable_gcn();

  Metric metric() const noexcept { return metric_; }
  ProbMap prob_map() const noexcept { return prob_map_; }
  void set_prob_map(ProbMap map);
  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }

  // Parameter tensors in a fixed order (mlp: w1, b1; gcn: w1, w2).
  std::vector<const ad::Tensor*> parameters() const;
  std::vector<ad::Tensor*> mutable_parameters();

  bool operator==(const SiameseModel& other) const;

 private:
  SiameseModel() = default;
  friend SiameseModel load_checkpoint(const std::filesystem::path& path);
  friend SiameseModel parse_checkpoint(const std::string& text);

  std::variant<MlpEncoder, GcnEncoder> encoder_;
  Metric metric_ = Metric::kCosine;
  ProbMap prob_map_ = ProbMap::kAffine;
  bool frozen_ = false;
};

// Parameters placed on a tape, either as constants (explaining) or as
// leaves named "theta0", "theta1" (training).
struct ModelVars {
  std::vector<ad::Var> params;
};
ModelVars bind_model(ad::Tape& tape, const SiameseModel& model, bool as_leaves);
ad::Bindings model_bindings(const SiameseModel& model);

// Embedding of a (possibly masked) minor-feature column.
ad::Var encode_tabular(ad::Tape& tape, const SiameseModel& model, const ModelVars& vars, ad::Var input);
// Embedding of a graph whose present edges carry the given weights
// (edge-weight column in GraphInstance::edges() order).
ad::Var encode_graph(ad::Tape& tape, const SiameseModel& model, const ModelVars& vars,
                     const GraphInstance& graph, ad::Var edge_weights);
// Raw score: cosine similarity or Euclidean distance.
ad::Var similarity(ad::Tape& tape, const SiameseModel& model, ad::Var u, ad::Var v);
ad::Var probability(ad::Tape& tape, const SiameseModel& model, ad::Var raw);

std::vector<double> embed(const SiameseModel& model, const TabularInstance& instance);
std::vector<double> embed(const SiameseModel& model, const GraphInstance& instance);
// Throws DegenerateEmbeddingError for a zero embedding under cosine.
double predict_pair(const SiameseModel& model, const TabularInstance& query,
                    const TabularInstance& reference);
double predict_pair(const SiameseModel& model, const GraphInstance& query,
                    const GraphInstance& reference);
double score_to_prob(const SiameseModel& model, double raw);

// Probability of the masked pair; masks are minor masks (tabular) or
// present-edge masks (graph). No degenerate-embedding check.
double masked_probability(const SiameseModel& model, const TabularInstance& query,
                          const TabularInstance& reference, std::span<const double> query_mask,
                          std::span<const double> reference_mask);
double masked_probability(const SiameseModel& model, const GraphInstance& query,
                          const GraphInstance& reference, std::span<const double> query_mask,
                          std::span<const double> reference_mask);

// Training losses on a raw score.
double hinge_loss(double score, int pair_label);
double contrastive_loss(double distance, int pair_label, double margin = 4.0);

struct TrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.5;
  double margin = 4.0;
};

struct TrainLog {
  std::vector<double> loss;  // mean pair loss before each epoch's update, plus final
};

// Full-batch gradient descent on the mean pair loss (hinge for cosine,
// margin contrastive for euclidean). Freezes the model on return.
TrainLog train_siamese(SiameseModel& model, const std::vector<TabularInstance>& instances,
                       const PairDataset& pairs, const TrainConfig& config);
TrainLog train_siamese(SiameseModel& model, const std::vector<GraphInstance>& instances,
                       const PairDataset& pairs, const TrainConfig& config);

std::string serialize_checkpoint(const SiameseModel& model);
SiameseModel parse_checkpoint(const std::string& text);
void save_checkpoint(const SiameseModel& model, const std::filesystem::path& path);
SiameseModel load_checkpoint(const std::filesystem::path& path);

std::string to_string(Activation a);
std::string to_string(Metric m);
std::string to_string(ProbMap p);

}  // namespace snx
