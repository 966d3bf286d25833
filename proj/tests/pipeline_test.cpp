#include "snx/pipeline.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "snx/errors.hpp"

namespace snx {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(SNX_TEST_TMP) / "pipeline" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_tabular(const fs::path& out) {
  RunConfig c = RunConfig::defaults(Domain::kTabular);
  c.data.instances = 40;
  c.pairs.max_pairs = 6;
  c.model.train.epochs = 40;
  c.explain.max_iter = 20;
  c.explain.pre_iter = 5;
  c.out = out.string();
  return c;
}

RunConfig small_graph(const fs::path& out) {
  RunConfig c = RunConfig::defaults(Domain::kGraph);
  c.data.instances = 24;
  c.pairs.max_pairs = 4;
  c.model.train.epochs = 20;
  c.explain.max_iter = 20;
  c.explain.global_iters = 20;
  c.out = out.string();
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SNX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(PipelineConfigTest, SerializationRoundTrips) {
  for (Domain d : {Domain::kTabular, Domain::kGraph}) {
    const RunConfig c = RunConfig::defaults(d);
    const std::string text = serialize_config(c);
    EXPECT_EQ(serialize_config(parse_config(text)), text);
  }
}

TEST(PipelineConfigTest, DefaultsFollowTheDomain) {
  const RunConfig t = RunConfig::defaults(Domain::kTabular);
  EXPECT_EQ(t.budget.describe(), "top10");
  EXPECT_EQ(t.explain.pre_iter, 50u);
  const RunConfig g = RunConfig::defaults(Domain::kGraph);
  EXPECT_EQ(g.budget.describe(), "top75pct");
  EXPECT_EQ(g.explain.max_iter, 400u);
  EXPECT_EQ(default_sweep_budgets(Domain::kGraph).size(), 5u);
}

TEST(PipelineConfigTest, MissingKeysTakeDomainDefaults) {
  const RunConfig c = parse_config(R"({"domain": "graph", "seed": 3})");
  EXPECT_EQ(c.domain, Domain::kGraph);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.explain.seed, 3u);
  EXPECT_EQ(c.explain.max_iter, 400u);
}

TEST(PipelineConfigTest, RejectsBadConfigs) {
  EXPECT_THROW(parse_config(R"({"domain": "tabular", "colour": 1})"), InputError);
  EXPECT_THROW(parse_config(R"({"data": {"instances": 3}})"), InputError);
  EXPECT_THROW(parse_config(R"({"domain": "graph", "method": "inter"})"), InputError);
  EXPECT_THROW(parse_config(R"({"explain": {"eta2": 0}})"), InputError);
  EXPECT_THROW(parse_config("[1, 2"), InputError);
  RunConfig c = RunConfig::defaults(Domain::kTabular);
  c.pairs.train_fraction = 1.0;
  EXPECT_THROW(validate_config(c), InputError);
}

TEST(PipelineParallelTest, RunsEveryIndexAndRethrowsLowestFailure) {
  std::atomic<int> sum{0};
  parallel_for(100, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
  EXPECT_EQ(sum.load(), 4950);
  try {
    parallel_for(50, 3, [](std::size_t i) {
      if (i == 17 || i == 31) throw InputError("fail " + std::to_string(i));
    });
    FAIL() << "expected an exception";
  } catch (const InputError& e) {
    EXPECT_EQ(std::string(e.what()), "fail 17");
  }
}

TEST(PipelineCommandTest, TrainIsByteIdentical) {
  const fs::path a = scratch("train_a"), b = scratch("train_b");
  cmd_train(small_tabular(a));
  cmd_train(small_tabular(b));
  EXPECT_EQ(slurp(a / "model.json"), slurp(b / "model.json"));
  EXPECT_EQ(slurp(a / "train_log.csv"), slurp(b / "train_log.csv"));
  EXPECT_TRUE(fs::exists(a / "config.json"));
}

TEST(PipelineCommandTest, InvalidConfigWritesNothing) {
  const fs::path out = scratch("invalid");
  RunConfig c = small_tabular(out);
  c.data.instances = 2;
  EXPECT_THROW(cmd_train(c), InputError);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_THROW(cmd_explain(small_tabular(out)), MissingInputError);
  EXPECT_FALSE(fs::exists(out));
}

TEST(PipelineCommandTest, EvalOfEmptyDirectoryIsAnError) {
  const fs::path empty = scratch("empty");
  fs::create_directories(empty);
  EXPECT_THROW(cmd_eval(empty), InputError);
  EXPECT_FALSE(fs::exists(empty / "metrics.csv"));
  EXPECT_THROW(cmd_eval(scratch("absent")), MissingInputError);
}

TEST(PipelineCommandTest, PickAllMatchesItsBound) {
  const fs::path out = scratch("pickall");
  RunConfig c = small_tabular(out);
  c.method = Method::kPickAll;
  cmd_train(c);
  const fs::path dir = cmd_explain(c);
  const MetricReport r = cmd_eval(dir);
  EXPECT_EQ(r.faithfulness.mean, r.bound_faithfulness.mean);
  EXPECT_EQ(r.counterfactual.mean, r.bound_counterfactual.mean);
  EXPECT_EQ(r.conformity.mean, 1.0);
  const std::string summary = slurp(dir / "summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "method,budget,metric,mean,std,count");
  EXPECT_NE(summary.find("pick_all_faithfulness"), std::string::npos);
}

TEST(PipelineCommandTest, GlobalOnlyIsFullyConformant) {
  const fs::path out = scratch("global");
  RunConfig c = small_tabular(out);
  c.method = Method::kSnxGlobal;
  cmd_train(c);
  const MetricReport r = cmd_eval(cmd_explain(c));
  EXPECT_EQ(r.conformity.mean, 1.0);
}

TEST(PipelineCommandTest, ExplainWritesIndexedDocuments) {
  const fs::path out = scratch("docs");
  const RunConfig c = small_tabular(out);
  cmd_train(c);
  const fs::path dir = cmd_explain(c);
  EXPECT_EQ(dir, out / "results" / "snx");
  const auto index = nlohmann::json::parse(slurp(dir / "index.json"));
  EXPECT_EQ(index.at("format"), "snx-index");
  ASSERT_EQ(index.at("pairs").size(), 6u);
  const auto doc = nlohmann::json::parse(slurp(dir / "pairs" / "pair_0000.json"));
  EXPECT_EQ(doc.at("format"), "snx-result");
  EXPECT_EQ(doc.at("version"), 1);
  for (const char* key : {"gamma", "beta", "epsilon", "eta1", "eta2", "pre_iter", "max_iter"}) {
    EXPECT_TRUE(doc.at("hyperparameters").contains(key)) << key;
  }
  EXPECT_TRUE(fs::exists(dir / "pairs" / "pair_0000_trace.csv"));
  const auto rows = cmd_sweep(dir, {Budget::count(2), Budget::count(4)});
  EXPECT_EQ(rows.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "sweep.csv"));
  EXPECT_TRUE(fs::exists(dir / "sweep_global.csv"));
}

TEST(PipelineCommandTest, GraphRunIsDeterministicAcrossWorkerCounts) {
  const fs::path a = scratch("graph_a"), b = scratch("graph_b");
  RunConfig ca = small_graph(a), cb = small_graph(b);
  cb.workers = 3;
  for (const RunConfig* c : {&ca, &cb}) {
    cmd_train(*c);
    cmd_eval(cmd_explain(*c));
  }
  for (const char* f : {"metrics.csv", "queries.csv", "summary.csv", "pairs/pair_0003.json"}) {
    EXPECT_EQ(slurp(a / "results" / "snx" / f), slurp(b / "results" / "snx" / f)) << f;
  }
}

TEST(PipelineCommandTest, AttackReports) {
  const fs::path out = scratch("attack");
  RunConfig c = small_tabular(out);
  c.attack.instances = 5;
  cmd_attack(c);
  const std::string csv = slurp(out / "attack" / "attack.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "instance,seed,drift,alignment,orthogonality,iterations");
  EXPECT_TRUE(fs::exists(out / "attack" / "instance_0004.json"));
}

TEST(PipelineCommandTest, LogLinesAreKeyValue) {
  std::ostringstream ss;
  const CommandLog log{&ss};
  log("demo", {{"a", "1"}, {"b", "x y"}});
  EXPECT_EQ(ss.str().substr(0, 13), "event=demo a=");
}

TEST(CliTest, ExitCodes) {
  const fs::path out = scratch("cli");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("train --bogus"), 1);
  EXPECT_EQ(run_cli("eval " + (out / "nowhere").string()), 1);
  EXPECT_EQ(run_cli("explain --domain graph --method inter --out " + out.string()), 1);
  EXPECT_FALSE(fs::exists(out));
  const fs::path cfg = fs::path(SNX_TEST_TMP) / "pipeline" / "cli.json";
  RunConfig c = small_tabular(out);
  {
    std::ofstream f(cfg);
    f << serialize_config(c);
  }
  EXPECT_EQ(run_cli("train --config " + cfg.string()), 0);
  EXPECT_EQ(run_cli("explain --config " + cfg.string() + " --domain graph"), 1);
  // The sparsity term overflows to infinity.
  EXPECT_EQ(run_cli("explain --config " + cfg.string() + " --method snx-uc --gamma 1e308"), 2);
  EXPECT_EQ(run_cli("explain --config " + cfg.string() + " --method sm --topk 3"), 0);
  EXPECT_EQ(run_cli("eval " + (out / "results" / "sm").string() + " --distance hamming"), 0);
  EXPECT_TRUE(fs::exists(out / "results" / "sm" / "metrics.csv"));
}

}  // namespace
}  // namespace snx
