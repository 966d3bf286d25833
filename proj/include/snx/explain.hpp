#pragma once

// Stage 1 (global invariant masks) and Stage 2 (local masks) explainers for
// tabular and graph Siamese networks, plus the baselines they are compared
// against.
//
// Masks are sigmoid(logits); every optimizer works on logits starting at 0.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snx/autodiff.hpp"
#include "snx/data.hpp"
#include "snx/gda.hpp"
#include "snx/mask.hpp"
#include "snx/siamese.hpp"

namespace snx {

enum class Method { kSnx, kSnxKl, kSnxUc, kSnxGlobal, kSaliency, kPickAll, kInter, kUnion };

std::string to_string(Method m);
Method parse_method(const std::string& s);
const std::vector<Method>& all_methods();
bool method_supports_graphs(Method m);

struct ExplainConfig {
  // Stage 1
  double global_gamma = 1e-3;
  double global_lr = 1e-1;
  std::size_t global_iters = 50;
  double global_eta2 = 1e-3;
  double epsilon = 0.25;  // graph connectivity slack
  // Stage 2
  double gamma = 1e-3;
  double beta = 1.0;
  double eta1 = 1e-1;
  double eta2 = 1e-3;
  std::size_t pre_iter = 50;
  std::size_t max_iter = 100;
  bool init_from_global = false;  // graph Stage 2 starts from the global logits
  std::uint64_t seed = 0;

  static ExplainConfig tabular_defaults();
  static ExplainConfig graph_defaults();
};

struct GlobalMask {
  std::vector<double> values;  // M in [0,1], minor (tabular) or present-edge (graph) indexed
  GdaTrace trace;
};

struct Explanation {
  Method method = Method::kSnx;
  MaskDomain domain = MaskDomain::kTabularMinor;
  // Soft local masks. For tabular data both hold the same shared mask.
  std::vector<double> query_mask;
  std::vector<double> reference_mask;
  // Global masks the local masks were constrained/regularized by (may be empty).
  std::vector<double> query_global;
  std::vector<double> reference_global;
  // Major-level aggregates n = a(m) and N = a(M^s) (tabular only).
  std::vector<double> local_major;
  std::vector<double> global_major;
  GdaTrace trace;
  ExplainConfig config;
  double objective = 0.0;        // g0 at the final masks
  double violation_ratio = 0.0;  // against a(m) <= a(M) constraints
};

// --- objectives ---------------------------------------------------------------

// A constrained problem whose objective, constraints and gradients come from
// a tape with leaves "m" (primal logits) and "lambda" (dual).
class TapeProblem {
 public:
  TapeProblem(std::shared_ptr<ad::Tape> tape, std::size_t dimension, std::size_t num_constraints,
              ad::Var objective, std::optional<ad::Var> constraints);

  ConstrainedProblem problem() const;
  ProblemEval evaluate(std::span<const double> m, std::span<const double> lambda) const;
  ad::Tape& tape() const { return *tape_; }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t num_constraints() const noexcept { return num_constraints_; }

 private:
  std::shared_ptr<ad::Tape> tape_;
  std::size_t dimension_;
  std::size_t num_constraints_;
  ad::Var objective_;
  std::optional<ad::Var> constraints_;
};

// Stage 1, tabular: BCE(f(x,x), f(x, M x)) + gamma ||a(M)||_1, no constraints.
TapeProblem global_tabular_problem(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& x,
                                   double gamma);
// Stage 1, graph: BCE + gamma ||M||_1 with |M_j - M_k| - epsilon <= 0 for
// present edges sharing a node. Pairs that cannot bind (epsilon >= 1) are dropped.
TapeProblem global_graph_problem(const SiameseModel& model, const GraphInstance& g, double gamma,
                                 double epsilon);
// Adjacent present-edge pairs (positions into GraphInstance::edges()).
std::vector<std::pair<std::size_t, std::size_t>> adjacent_edge_pairs(const GraphInstance& g);

struct LocalTerms {
  double gamma = 1e-3;
  double beta = 0.0;         // KL weight; 0 disables the term
  bool constrained = false;  // add a(m) - a(M) <= 0 constraints
};

// Stage 2, tabular: shared mask m over both instances. `global_major` is N = a(M^s).
TapeProblem local_tabular_problem(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                                  const TabularInstance& reference, std::span<const double> global_major,
                                  const LocalTerms& terms);
// Stage 2, graph: primal [m^s; m^t] over present edges of each graph.
TapeProblem local_graph_problem(const SiameseModel& model, const GraphInstance& query,
                                const GraphInstance& reference, std::span<const double> query_global,
                                std::span<const double> reference_global, const LocalTerms& terms);

// --- explainers -----------------------------------------------------------------

GlobalMask explain_global_tabular(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& x,
                                  const ExplainConfig& config);
GlobalMask explain_global_graph(const SiameseModel& model, const GraphInstance& g, const ExplainConfig& config);

// `global_query` is M^s (minor mask). Throws InputError if it is missing.
Explanation explain_local_snx(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                              const TabularInstance& reference, std::span<const double> global_query,
                              const ExplainConfig& config);
Explanation explain_local_snx(const SiameseModel& model, const GraphInstance& query,
                              const GraphInstance& reference, std::span<const double> global_query,
                              std::span<const double> global_reference, const ExplainConfig& config);

Explanation explain_local_kl(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                             const TabularInstance& reference, std::span<const double> global_query,
                             const ExplainConfig& config);
Explanation explain_local_kl(const SiameseModel& model, const GraphInstance& query,
                             const GraphInstance& reference, std::span<const double> global_query,
                             std::span<const double> global_reference, const ExplainConfig& config);

// Baseline SNX-UC. Global masks, when given, are only used to report the
// violation ratio.
Explanation explain_local_unconstrained(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                                        const TabularInstance& reference, const ExplainConfig& config,
                                        std::span<const double> global_query = {});
Explanation explain_local_unconstrained(const SiameseModel& model, const GraphInstance& query,
                                        const GraphInstance& reference, const ExplainConfig& config,
                                        std::span<const double> global_query = {},
                                        std::span<const double> global_reference = {});

// Baseline SM: |d loss_SN / d x^s| scaled by its maximum.
Explanation explain_saliency_map(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                                 const TabularInstance& reference, int pair_label,
                                 std::span<const double> global_query = {});
Explanation explain_saliency_map(const SiameseModel& model, const GraphInstance& query,
                                 const GraphInstance& reference, int pair_label,
                                 std::span<const double> global_query = {},
                                 std::span<const double> global_reference = {});
// Scales absolute gradient values by their maximum; all-zero stays all-zero.
std::vector<double> normalize_saliency(std::span<const double> gradient);

Explanation explain_pick_all(std::size_t query_length, std::size_t reference_length, MaskDomain domain);

// Baseline SNX-global: the local mask is the query's global mask.
Explanation explain_global_only(std::span<const double> global_query, std::span<const double> global_reference,
                                MaskDomain domain);

// SNX with the element-wise min / max of M^s and M^t (tabular only).
Explanation explain_inter(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query, const TabularInstance& reference,
                          std::span<const double> global_query, std::span<const double> global_reference,
                          const ExplainConfig& config);
Explanation explain_union(const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query, const TabularInstance& reference,
                          std::span<const double> global_query, std::span<const double> global_reference,
                          const ExplainConfig& config);

// Dispatch by method tag; global masks must be supplied for methods that use them.
Explanation explain(Method method, const SiameseModel& model, const TabularSchema& schema, const TabularInstance& query,
                    const TabularInstance& reference, int pair_label, std::span<const double> global_query,
                    std::span<const double> global_reference, const ExplainConfig& config);
Explanation explain(Method method, const SiameseModel& model, const GraphInstance& query,
                    const GraphInstance& reference, int pair_label, std::span<const double> global_query,
                    std::span<const double> global_reference, const ExplainConfig& config);

}  // namespace snx
