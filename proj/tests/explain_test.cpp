#include "snx/explain.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "snx/errors.hpp"
#include "snx/metrics.hpp"

namespace snx {
namespace {

std::vector<int> labels_of(const std::vector<TabularInstance>& xs) {
  std::vector<int> out;
  for (const auto& x : xs) out.push_back(x.label);
  return out;
}

std::vector<int> labels_of(const std::vector<GraphInstance>& gs) {
  std::vector<int> out;
  for (const auto& g : gs) out.push_back(g.label);
  return out;
}

// One trained tabular and one trained graph model shared by the suite.
class ExplainTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tab_ = new SynthTabular(synth_tabular(7, 120, make_synth_schema(6, 3)));
    tab_pairs_ = new PairDataset(generate_pairs(labels_of(tab_->instances), 4, 2, 8));
    tab_model_ = new SiameseModel(SiameseModel::tabular(tab_->schema.num_minors(), 16, 11));
    train_siamese(*tab_model_, tab_->instances, *tab_pairs_, TrainConfig{200, 0.5, 4.0});

    graphs_ = new SynthGraphs(synth_graphs(7, 40, 10, 10));
    graph_pairs_ = new PairDataset(generate_pairs(labels_of(graphs_->instances), 4, 2, 8));
    graph_model_ = new SiameseModel(SiameseModel::graph(kSynthDegreeBuckets, 32, 16, 11));
    train_siamese(*graph_model_, graphs_->instances, *graph_pairs_, TrainConfig{200, 0.5, 4.0});
  }
  static void TearDownTestSuite() {
    delete tab_;
    delete tab_pairs_;
    delete tab_model_;
    delete graphs_;
    delete graph_pairs_;
    delete graph_model_;
  }

  static const TabularInstance& tx(std::size_t i) { return tab_->instances[i]; }
  static const TabularSchema& schema() { return tab_->schema; }

  static SynthTabular* tab_;
  static PairDataset* tab_pairs_;
  static SiameseModel* tab_model_;
  static SynthGraphs* graphs_;
  static PairDataset* graph_pairs_;
  static SiameseModel* graph_model_;
};

SynthTabular* ExplainTest::tab_ = nullptr;
PairDataset* ExplainTest::tab_pairs_ = nullptr;
SiameseModel* ExplainTest::tab_model_ = nullptr;
SynthGraphs* ExplainTest::graphs_ = nullptr;
PairDataset* ExplainTest::graph_pairs_ = nullptr;
SiameseModel* ExplainTest::graph_model_ = nullptr;

std::vector<std::size_t> active(const TabularInstance& x) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < x.x.size(); ++i) {
    if (x.x[i] == 1.0) out.push_back(i);
  }
  return out;
}

TEST(ExplainMethodTest, TagsRoundTrip) {
  for (Method m : all_methods()) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("gnnexplainer"), InputError);
  EXPECT_FALSE(method_supports_graphs(Method::kInter));
  EXPECT_FALSE(method_supports_graphs(Method::kUnion));
  EXPECT_TRUE(method_supports_graphs(Method::kSnx));
}

TEST(ExplainMethodTest, PaperHyperparameters) {
  const ExplainConfig t = ExplainConfig::tabular_defaults();
  EXPECT_EQ(t.gamma, 1e-3);
  EXPECT_EQ(t.eta1, 1e-1);
  EXPECT_EQ(t.eta2, 1e-3);
  EXPECT_EQ(t.pre_iter, 50u);
  EXPECT_EQ(t.max_iter, 100u);
  EXPECT_EQ(t.beta, 1.0);
  EXPECT_EQ(t.global_lr, 1e-1);
  EXPECT_EQ(t.global_iters, 50u);
  const ExplainConfig g = ExplainConfig::graph_defaults();
  EXPECT_EQ(g.pre_iter, 0u);
  EXPECT_EQ(g.max_iter, 400u);
  EXPECT_EQ(g.gamma, 1e-1);
  EXPECT_FALSE(g.init_from_global);
}

TEST_F(ExplainTest, AllOnesGlobalMaskIsExactlyFaithful) {
  for (std::size_t i = 0; i < 20; ++i) {
    // The cosine denominator floor keeps this a few ulps above zero.
    EXPECT_LT(global_faithfulness(*tab_model_, tx(i), std::vector<double>(tx(i).x.size(), 1.0)), 1e-9);
  }
}

TEST_F(ExplainTest, GlobalTabularMaskShape) {
  ExplainConfig c;
  const GlobalMask g = explain_global_tabular(*tab_model_, schema(), tx(0), c);
  ASSERT_EQ(g.values.size(), schema().num_minors());
  for (double v : g.values) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(g.trace.iterations.size(), c.global_iters);
}

TEST_F(ExplainTest, DecodedGlobalMaskRecoversActiveMinors) {
  // Six active minors out of eighteen: a top-10 decoding keeps every one.
  std::size_t covered = 0;
  double worst_fa = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    const GlobalMask g = explain_global_tabular(*tab_model_, schema(), tx(i), ExplainConfig{});
    const auto sel = topk_decode(g.values, Budget::count(10)).selected;
    const auto act = active(tx(i));
    covered += std::all_of(act.begin(), act.end(), [&](std::size_t j) { return sel.count(j) > 0; });
    worst_fa = std::max(worst_fa, global_faithfulness(*tab_model_, tx(i), to_binary({sel}, schema().num_minors())));
  }
  EXPECT_EQ(covered, 40u);
  EXPECT_LT(worst_fa, 0.005);
}

TEST_F(ExplainTest, DecodedGlobalMaskCoversPlantedMajors) {
  std::size_t hits = 0;
  const std::size_t n = 40;
  for (std::size_t i = 0; i < n; ++i) {
    const GlobalMask g = explain_global_tabular(*tab_model_, schema(), tx(i), ExplainConfig{});
    const auto sel = topk_decode(g.values, Budget::count(10)).selected;
    bool ok = true;
    for (std::size_t major : tab_->salient_majors) {
      const std::size_t minor = schema().offset(major) + tx(i).z[major];
      ok = ok && sel.count(minor) > 0;
    }
    hits += ok;
  }
  EXPECT_GE(hits, (9 * n + 9) / 10);
}

TEST(ExplainGraphTest, TriangleHasThreeAdjacencyConstraints) {
  GraphInstance g;
  g.num_nodes = 3;
  g.features = ad::Tensor(3, 1, 1.0);
  g.x = flatten_adjacency({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}});
  EXPECT_EQ(adjacent_edge_pairs(g).size(), 3u);
  SiameseModel m = SiameseModel::graph(1, 4, 3, 2);
  m.freeze();
  EXPECT_EQ(global_graph_problem(m, g, 1e-1, 0.25).num_constraints(), 3u);
  EXPECT_EQ(global_graph_problem(m, g, 1e-1, 1.0).num_constraints(), 0u);
}

TEST_F(ExplainTest, VacuousConnectivityMatchesPlainDescent) {
  const GraphInstance& g = graphs_->instances[0];
  ExplainConfig c = ExplainConfig::graph_defaults();
  c.epsilon = 1.0;
  const GlobalMask got = explain_global_graph(*graph_model_, g, c);
  // Reference: plain descent on the unconstrained objective, taken from the
  // binding problem with the dual held at zero.
  const TapeProblem tight = global_graph_problem(*graph_model_, g, c.global_gamma, 0.25);
  ASSERT_GT(tight.num_constraints(), 0u);
  const std::vector<double> zero(tight.num_constraints(), 0.0);
  std::vector<double> m(g.num_edges(), 0.0);
  for (std::size_t t = 0; t < c.global_iters; ++t) {
    const ProblemEval e = tight.evaluate(m, zero);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] -= c.global_lr * e.lagrangian_grad[i];
  }
  const double ref = tight.evaluate(m, zero).objective;
  EXPECT_NEAR(got.trace.iterations.back().objective, ref, 1e-6);
}

TEST_F(ExplainTest, DecodedGraphGlobalMaskContainsMotif) {
  std::size_t hits = 0;
  const std::size_t n = 20;
  for (std::size_t i = 0; i < n; ++i) {
    const GraphInstance& g = graphs_->instances[i];
    const GlobalMask m = explain_global_graph(*graph_model_, g, ExplainConfig::graph_defaults());
    const auto sel = topk_decode(m.values, Budget::percent(75)).selected;
    const auto idx = g.edge_indices();
    bool ok = true;
    for (std::size_t e : graphs_->motif_edges[i]) {
      const std::size_t pos = std::find(idx.begin(), idx.end(), e) - idx.begin();
      ok = ok && sel.count(pos) > 0;
    }
    hits += ok;
  }
  EXPECT_GE(hits, (9 * n + 9) / 10);
}

TEST_F(ExplainTest, MissingGlobalMaskIsAnInputError) {
  EXPECT_THROW(explain_local_snx(*tab_model_, schema(), tx(0), tx(1), {}, ExplainConfig{}), InputError);
  EXPECT_THROW(explain_local_kl(*tab_model_, schema(), tx(0), tx(1), {}, ExplainConfig{}), InputError);
  const auto& g = graphs_->instances;
  EXPECT_THROW(explain_local_snx(*graph_model_, g[0], g[1], {}, {}, ExplainConfig::graph_defaults()), InputError);
  EXPECT_THROW(explain_global_only({}, {}, MaskDomain::kTabularMinor), InputError);
}

TEST_F(ExplainTest, AllOnesGlobalMatchesUnconstrained) {
  const std::vector<double> ones(schema().num_minors(), 1.0);
  for (std::size_t k = 0; k < 5; ++k) {
    const Pair& p = tab_pairs_->pairs[k];
    const Explanation a = explain_local_snx(*tab_model_, schema(), tx(p.query), tx(p.reference), ones, ExplainConfig{});
    const Explanation b = explain_local_unconstrained(*tab_model_, schema(), tx(p.query), tx(p.reference), ExplainConfig{});
    EXPECT_NEAR(a.objective, b.objective, 1e-8);
  }
}

TEST_F(ExplainTest, AllZeroGlobalPushesMasksDown) {
  // a(m) <= 0 cannot hold for sigmoid masks, so every constraint stays
  // violated; the dual instead drives the aggregates below the free run.
  const std::vector<double> zeros(schema().num_minors(), 0.0);
  const Pair& p = tab_pairs_->pairs[0];
  const Explanation c = explain_local_snx(*tab_model_, schema(), tx(p.query), tx(p.reference), zeros, ExplainConfig{});
  const Explanation u = explain_local_unconstrained(*tab_model_, schema(), tx(p.query), tx(p.reference), ExplainConfig{});
  EXPECT_EQ(c.violation_ratio, 1.0);
  for (std::size_t i = 0; i < c.local_major.size(); ++i) EXPECT_LT(c.local_major[i], u.local_major[i]);
}

TEST_F(ExplainTest, TabularMasksAreShared) {
  const Pair& p = tab_pairs_->pairs[3];
  const GlobalMask gs = explain_global_tabular(*tab_model_, schema(), tx(p.query), ExplainConfig{});
  const GlobalMask gt = explain_global_tabular(*tab_model_, schema(), tx(p.reference), ExplainConfig{});
  for (Method m : all_methods()) {
    const Explanation e = m == Method::kPickAll
                              ? explain_pick_all(schema().num_minors(), schema().num_minors(), MaskDomain::kTabularMinor)
                              : explain(m, *tab_model_, schema(), tx(p.query), tx(p.reference), p.label, gs.values,
                                        gt.values, ExplainConfig{});
    EXPECT_EQ(e.query_mask, e.reference_mask) << to_string(m);
    EXPECT_EQ(e.method, m);
    for (double v : e.query_mask) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST_F(ExplainTest, KlWithZeroWeightIsUnconstrained) {
  ExplainConfig c;
  c.beta = 0.0;
  const Pair& p = tab_pairs_->pairs[1];
  const GlobalMask g = explain_global_tabular(*tab_model_, schema(), tx(p.query), c);
  const Explanation kl = explain_local_kl(*tab_model_, schema(), tx(p.query), tx(p.reference), g.values, c);
  const Explanation uc = explain_local_unconstrained(*tab_model_, schema(), tx(p.query), tx(p.reference), c);
  EXPECT_EQ(kl.query_mask, uc.query_mask);
}

TEST_F(ExplainTest, LargeKlWeightPullsAggregatesToGlobal) {
  ExplainConfig c;
  c.beta = 1e4;
  // A step small enough for the stiff KL term.
  c.eta1 = 1e-5;
  c.pre_iter = 0;
  c.max_iter = 2000;
  const Pair& p = tab_pairs_->pairs[2];
  const GlobalMask g = explain_global_tabular(*tab_model_, schema(), tx(p.query), ExplainConfig{});
  const Explanation e = explain_local_kl(*tab_model_, schema(), tx(p.query), tx(p.reference), g.values, c);
  for (std::size_t i = 0; i < e.local_major.size(); ++i) EXPECT_NEAR(e.local_major[i], e.global_major[i], 0.05);
}

TEST_F(ExplainTest, GlobalOnlyAndPickAll) {
  const std::vector<double> gs = {0.1, 0.9, 0.4};
  const Explanation e = explain_global_only(gs, {}, MaskDomain::kTabularMinor);
  EXPECT_EQ(e.query_mask, gs);
  EXPECT_EQ(e.reference_mask, gs);
  const Explanation a = explain_pick_all(3, 5, MaskDomain::kGraphEdge);
  EXPECT_EQ(a.query_mask, std::vector<double>(3, 1.0));
  EXPECT_EQ(a.reference_mask, std::vector<double>(5, 1.0));
}

TEST_F(ExplainTest, InterAndUnionUseCombinedGlobals) {
  const Pair& p = tab_pairs_->pairs[4];
  const GlobalMask gs = explain_global_tabular(*tab_model_, schema(), tx(p.query), ExplainConfig{});
  const GlobalMask gt = explain_global_tabular(*tab_model_, schema(), tx(p.reference), ExplainConfig{});
  const auto lo = combine_masks(gs.values, gt.values, CombineMode::kInter);
  const Explanation inter = explain_inter(*tab_model_, schema(), tx(p.query), tx(p.reference), gs.values, gt.values,
                                          ExplainConfig{});
  const Explanation direct = explain_local_snx(*tab_model_, schema(), tx(p.query), tx(p.reference), lo, ExplainConfig{});
  EXPECT_EQ(inter.query_mask, direct.query_mask);
  EXPECT_EQ(inter.method, Method::kInter);
  const auto hi = combine_masks(gs.values, gt.values, CombineMode::kUnion);
  const Explanation uni = explain_union(*tab_model_, schema(), tx(p.query), tx(p.reference), gs.values, gt.values,
                                        ExplainConfig{});
  EXPECT_EQ(uni.query_mask,
            explain_local_snx(*tab_model_, schema(), tx(p.query), tx(p.reference), hi, ExplainConfig{}).query_mask);
}

TEST_F(ExplainTest, SaliencyMatchesFiniteDifferenceOfTrainingLoss) {
  const Pair& p = tab_pairs_->pairs[5];
  const TabularInstance& q = tx(p.query);
  const TabularInstance& r = tx(p.reference);
  const Explanation e = explain_saliency_map(*tab_model_, schema(), q, r, p.label);
  std::vector<double> fd(q.x.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < q.x.size(); ++i) {
    TabularInstance up = q, down = q;
    up.x[i] += h;
    down.x[i] -= h;
    fd[i] = std::fabs(hinge_loss(predict_pair(*tab_model_, up, r), p.label) -
                      hinge_loss(predict_pair(*tab_model_, down, r), p.label)) /
            (2 * h);
  }
  const double peak = *std::max_element(fd.begin(), fd.end());
  ASSERT_GT(peak, 0.0);
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_NEAR(e.query_mask[i], fd[i] / peak, 1e-5);
}

TEST(ExplainSaliencyTest, NormalizeSaliency) {
  EXPECT_EQ(normalize_saliency(std::vector<double>{-2.0, 1.0, 0.0}), (std::vector<double>{1.0, 0.5, 0.0}));
  EXPECT_EQ(normalize_saliency(std::vector<double>{0.0, 0.0}), (std::vector<double>{0.0, 0.0}));
}

TEST_F(ExplainTest, RelaxationDominance) {
  // SNX under vacuous globals never ends with a larger objective than SNX
  // under the instance's own (tighter) global mask.
  const std::vector<double> ones(schema().num_minors(), 1.0);
  std::size_t violations = 0;
  const std::size_t n = std::min<std::size_t>(50, tab_pairs_->pairs.size());
  for (std::size_t k = 0; k < n; ++k) {
    const Pair& p = tab_pairs_->pairs[k];
    const GlobalMask g = explain_global_tabular(*tab_model_, schema(), tx(p.query), ExplainConfig{});
    const double loose =
        explain_local_snx(*tab_model_, schema(), tx(p.query), tx(p.reference), ones, ExplainConfig{}).objective;
    const double tight =
        explain_local_snx(*tab_model_, schema(), tx(p.query), tx(p.reference), g.values, ExplainConfig{}).objective;
    violations += loose > tight;
  }
  EXPECT_EQ(violations, 0u);
}

TEST_F(ExplainTest, SparsityPressureIsMonotone) {
  std::size_t violations = 0;
  for (std::size_t k = 0; k < 10; ++k) {
    const Pair& p = tab_pairs_->pairs[k];
    double prev = std::numeric_limits<double>::infinity();
    for (double gamma : {1e-4, 1e-3, 1e-2, 1e-1}) {
      ExplainConfig c;
      c.gamma = gamma;
      const Explanation e = explain_local_unconstrained(*tab_model_, schema(), tx(p.query), tx(p.reference), c);
      double l1 = 0.0;
      for (double v : e.query_mask) l1 += v;
      violations += l1 > prev;
      prev = l1;
    }
  }
  EXPECT_EQ(violations, 0u);
}

TEST_F(ExplainTest, ExplanationsAreDeterministic) {
  const Pair& p = tab_pairs_->pairs[6];
  const GlobalMask g = explain_global_tabular(*tab_model_, schema(), tx(p.query), ExplainConfig{});
  const Explanation a = explain_local_snx(*tab_model_, schema(), tx(p.query), tx(p.reference), g.values, ExplainConfig{});
  const Explanation b = explain_local_snx(*tab_model_, schema(), tx(p.query), tx(p.reference), g.values, ExplainConfig{});
  EXPECT_EQ(a.query_mask, b.query_mask);
  EXPECT_EQ(a.objective, b.objective);
  const auto& gs = graphs_->instances;
  const GlobalMask g0 = explain_global_graph(*graph_model_, gs[0], ExplainConfig::graph_defaults());
  const GlobalMask g1 = explain_global_graph(*graph_model_, gs[0], ExplainConfig::graph_defaults());
  EXPECT_EQ(g0.values, g1.values);
}

TEST_F(ExplainTest, GraphLocalMasksCoverPresentEdges) {
  const Pair& p = graph_pairs_->pairs[0];
  const auto& q = graphs_->instances[p.query];
  const auto& r = graphs_->instances[p.reference];
  ExplainConfig c = ExplainConfig::graph_defaults();
  c.max_iter = 50;
  const GlobalMask gq = explain_global_graph(*graph_model_, q, c);
  const GlobalMask gr = explain_global_graph(*graph_model_, r, c);
  const Explanation e = explain_local_snx(*graph_model_, q, r, gq.values, gr.values, c);
  EXPECT_EQ(e.query_mask.size(), q.num_edges());
  EXPECT_EQ(e.reference_mask.size(), r.num_edges());
  EXPECT_EQ(e.trace.iterations.size(), 50u);
  EXPECT_EQ(e.domain, MaskDomain::kGraphEdge);
}

// Finite-difference checks of every objective at random logits and duals.
class ObjectiveGradientTest : public ExplainTest {
 protected:
  static void check(const TapeProblem& tp, std::mt19937_64& rng, double& worst) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> m(tp.dimension()), lambda(tp.num_constraints());
    for (double& v : m) v = n(rng);
    for (double& v : lambda) v = u(rng);
    tp.evaluate(m, lambda);
    worst = std::max(worst, ad::finite_diff_check(tp.tape(), "m"));
  }
};

TEST_F(ObjectiveGradientTest, GlobalTabular) {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (std::size_t i = 0; i < 20; ++i) check(global_tabular_problem(*tab_model_, schema(), tx(i), 1e-2), rng, worst);
  EXPECT_LT(worst, 1e-4);
}

TEST_F(ObjectiveGradientTest, GlobalGraph) {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    check(global_graph_problem(*graph_model_, graphs_->instances[i], 1e-1, 0.25), rng, worst);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST_F(ObjectiveGradientTest, LocalTabular) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  double worst = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    const Pair& p = tab_pairs_->pairs[k];
    std::vector<double> big_n(schema().num_majors());
    for (double& v : big_n) v = u(rng);
    for (const LocalTerms& terms : {LocalTerms{1e-3, 0.0, false}, LocalTerms{1e-3, 1.0, false}, LocalTerms{1e-3, 0.0, true}}) {
      check(local_tabular_problem(*tab_model_, schema(), tx(p.query), tx(p.reference), big_n, terms), rng, worst);
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST_F(ObjectiveGradientTest, LocalGraph) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  double worst = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    const Pair& p = graph_pairs_->pairs[k];
    const auto& q = graphs_->instances[p.query];
    const auto& r = graphs_->instances[p.reference];
    std::vector<double> gq(q.num_edges()), gr(r.num_edges());
    for (double& v : gq) v = u(rng);
    for (double& v : gr) v = u(rng);
    for (const LocalTerms& terms : {LocalTerms{1e-1, 0.0, false}, LocalTerms{1e-1, 1.0, false}, LocalTerms{1e-1, 0.0, true}}) {
      check(local_graph_problem(*graph_model_, q, r, gq, gr, terms), rng, worst);
    }
  }
  EXPECT_LT(worst, 1e-4);
}

}  // namespace
}  // namespace snx
