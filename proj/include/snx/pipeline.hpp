#pragma once

// Orchestration behind the command-line tool: configuration, datasets,
// training, batch explanation, evaluation, budget sweeps and attack reports.
//
// Output layout under RunConfig::out:
//   config.json, model.json, train_log.csv                 (train)
//   results/<method>/{config.json, model.json, index.json,
//                     pairs/pair_NNNN.json, pairs/pair_NNNN_trace.csv,
//                     globals/instance_NNNN.json}           (explain)
//   results/<method>/{metrics.csv, queries.csv, summary.csv} (eval)
//   results/<method>/{sweep.csv, sweep_global.csv}         (sweep)
//   attack/{config.json, attack.csv, instance_NNNN.json}   (attack)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "snx/data.hpp"
#include "snx/explain.hpp"
#include "snx/mask.hpp"
#include "snx/metrics.hpp"
#include "snx/siamese.hpp"

namespace snx {

enum class Domain { kTabular, kGraph };
std::string to_string(Domain d);
Domain parse_domain_tag(const std::string& s);

struct DataSpec {
  bool synthetic = true;
  std::size_t instances = 200;
  // Synthetic tabular.
  std::size_t majors = 6;
  std::size_t categories = 3;
  double signal = 0.9;
  // Synthetic graphs.
  std::size_t min_nodes = 10;
  std::size_t max_nodes = 10;
  // File inputs (used when synthetic is false).
  std::string csv;
  std::string schema;
  std::string graphs;
};

struct PairSpec {
  std::size_t per_instance = 4;
  std::size_t same_class = 2;
  double train_fraction = 0.7;
  std::size_t max_pairs = 50;  // explained pairs, taken from the held-out split
};

struct ModelSpec {
  std::size_t hidden = 16;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  Activation activation = Activation::kTanh;
  TrainConfig train;
};

struct AttackSpec {
  std::size_t instances = 50;
  std::size_t dimension = 8;
  double amplification = 10.0;
  std::size_t max_iter = 200;
};

struct RunConfig {
  Domain domain = Domain::kTabular;
  DataSpec data;
  PairSpec pairs;
  ModelSpec model;
  Method method = Method::kSnx;
  ExplainConfig explain;
  Budget budget = Budget::count(10);
  std::vector<Budget> sweep_budgets;
  AttackSpec attack;
  std::uint64_t seed = 7;
  std::size_t workers = 1;
  std::string out = "snx-out";

  static RunConfig defaults(Domain domain);
};

// Missing keys take the defaults of the configured domain. Unknown keys and
// out-of-range values raise InputError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Every field written explicitly.
std::string serialize_config(const RunConfig& config);
// Range checks shared by parsing and command-line overrides.
void validate_config(const RunConfig& config);

struct Dataset {
  Domain domain = Domain::kTabular;
  TabularSchema schema;
  std::vector<TabularInstance> tabular;
  std::vector<GraphInstance> graphs;
  std::vector<std::size_t> salient_majors;            // synthetic tabular only
  std::vector<std::vector<std::size_t>> motif_edges;  // synthetic graphs only
  PairDataset train_pairs;
  PairDataset explain_pairs;

  std::size_t size() const { return domain == Domain::kTabular ? tabular.size() : graphs.size(); }
  std::vector<int> labels() const;
  // Mask length of an instance: minors (tabular) or present edges (graph).
  std::size_t mask_length(std::size_t id) const;
};

Dataset build_dataset(const RunConfig& config);
SiameseModel build_and_train(const RunConfig& config, const Dataset& data, TrainLog* log = nullptr);

struct PairResult {
  std::size_t index = 0;
  Pair pair;
  Explanation explanation;
};

struct ExplainRun {
  std::map<std::size_t, GlobalMask> globals;  // by instance id
  std::vector<PairResult> results;
};

// Stage 1 for every instance in the explained pairs (computed once per id),
// then Stage 2 per pair. Work is spread over config.workers threads.
ExplainRun run_explain(const RunConfig& config, const SiameseModel& model, const Dataset& data);

// Calls fn(i) for i in [0, n) on up to `workers` threads. If any call throws,
// the exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct PairMetrics {
  std::size_t index = 0;
  std::size_t query = 0;
  std::size_t reference = 0;
  int label = 0;
  double faithfulness = 0.0;    // decoded binary masks
  double counterfactual = 0.0;  // decoded binary masks
  double conformity = 0.0;      // Jaccard of decoded query global and local masks
  double violation_ratio = 0.0;
};

struct MetricReport {
  Method method = Method::kSnx;
  Budget budget;
  std::vector<PairMetrics> pairs;
  std::map<std::size_t, double> query_conformity;
  std::map<std::size_t, double> query_diversity;
  Summary faithfulness;
  Summary counterfactual;
  Summary conformity;  // over queries
  Summary diversity;   // over queries
  Summary violation_ratio;
  Summary bound_faithfulness;
  Summary bound_counterfactual;
};

// Decodes every local mask and the global masks of both instances at
// `budget` (Pick-all always selects everything) and scores the binary masks.
MetricReport evaluate_results(const SiameseModel& model, const Dataset& data, const std::vector<PairResult>& results,
                              const std::map<std::size_t, std::vector<double>>& globals, Method method, Budget budget,
                              Distance distance = Distance::kJaccard);
std::map<std::size_t, std::vector<double>> global_values(const std::map<std::size_t, GlobalMask>& globals);

std::vector<SweepItem> local_sweep_items(const SiameseModel& model, const Dataset& data,
                                         const std::vector<PairResult>& results);
std::vector<SweepItem> global_sweep_items(const SiameseModel& model, const Dataset& data,
                                          const std::map<std::size_t, std::vector<double>>& globals);

std::string metrics_csv(const MetricReport& report);
std::string queries_csv(const MetricReport& report);
// Includes the Pick-all bound: FA and CF of all-ones masks on the same pairs.
std::string summary_csv(const MetricReport& report);
std::string result_document(const RunConfig& config, const PairResult& result, const std::string& trace_file);

// --- commands -------------------------------------------------------------------
// Each validates its inputs before writing anything and logs key=value lines.

struct CommandLog {
  std::ostream* stream = nullptr;
  void operator()(const std::string& event, const std::vector<std::pair<std::string, std::string>>& fields) const;
};

void cmd_train(const RunConfig& config, const CommandLog& log = {});
// Returns the results directory.
std::filesystem::path cmd_explain(const RunConfig& config, const CommandLog& log = {});
struct EvalOptions {
  std::optional<Budget> budget;
  Distance distance = Distance::kJaccard;
};
MetricReport cmd_eval(const std::filesystem::path& results_dir, const EvalOptions& options = {},
                      const CommandLog& log = {});
std::vector<SweepRow> cmd_sweep(const std::filesystem::path& results_dir, std::vector<Budget> budgets = {},
                                const CommandLog& log = {});
void cmd_attack(const RunConfig& config, const CommandLog& log = {});

// Default sweep budgets: top-k {2, 4, 6, 8, 10, 12} plus 100% of minors, or
// {10, 25, 50, 75, 100} percent of edges.
std::vector<Budget> default_sweep_budgets(Domain domain);

}  // namespace snx
