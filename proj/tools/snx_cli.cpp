// Command-line front end: train, explain, eval, sweep, attack and run (all of
// the first four in sequence). Exit codes: 0 success, 1 usage or validation
// error, 2 numerical divergence.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "snx/errors.hpp"
#include "snx/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string domain;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<double> gamma, beta, epsilon, eta1, eta2;
  std::optional<std::size_t> pre_iters, max_iters, topk, workers;
  std::optional<double> top_percent;
  std::optional<std::string> out;
};

void add_config_flags(CLI::App* cmd, Overrides& o, bool with_method) {
  cmd->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--domain", o.domain, "tabular or graph (when no config file is given)")
      ->check(CLI::IsMember({"tabular", "graph"}));
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "output directory");
  if (!with_method) return;
  cmd->add_option("--method", o.method, "explainer")
      ->check(CLI::IsMember({"snx", "snx-kl", "snx-uc", "snx-global", "sm", "pick-all", "inter", "union"}));
  cmd->add_option("--gamma", o.gamma, "local sparsity weight");
  cmd->add_option("--beta", o.beta, "KL weight");
  cmd->add_option("--epsilon", o.epsilon, "graph connectivity slack");
  cmd->add_option("--eta1", o.eta1, "primal step size");
  cmd->add_option("--eta2", o.eta2, "dual step size");
  cmd->add_option("--pre-iters", o.pre_iters, "unconstrained iterations before GDA");
  cmd->add_option("--max-iters", o.max_iters, "GDA iterations");
  auto* k = cmd->add_option("--topk", o.topk, "decode the top N entries")->check(CLI::PositiveNumber);
  auto* p = cmd->add_option("--top-percent", o.top_percent, "decode the top P percent")->check(CLI::Range(0.0, 100.0));
  k->excludes(p);
}

snx::RunConfig resolve(const Overrides& o) {
  snx::RunConfig c;
  if (!o.config.empty()) {
    if (!o.domain.empty()) throw snx::InputError("--domain conflicts with --config");
    c = snx::load_config(o.config);
  } else {
    c = snx::RunConfig::defaults(snx::parse_domain_tag(o.domain.empty() ? "tabular" : o.domain));
  }
  if (o.seed) c.seed = *o.seed;
  c.explain.seed = c.seed;
  if (o.method) c.method = snx::parse_method(*o.method);
  if (o.gamma) c.explain.gamma = *o.gamma;
  if (o.beta) c.explain.beta = *o.beta;
  if (o.epsilon) c.explain.epsilon = *o.epsilon;
  if (o.eta1) c.explain.eta1 = *o.eta1;
  if (o.eta2) c.explain.eta2 = *o.eta2;
  if (o.pre_iters) c.explain.pre_iter = *o.pre_iters;
  if (o.max_iters) c.explain.max_iter = *o.max_iters;
  if (o.topk) c.budget = snx::Budget::count(*o.topk);
  if (o.top_percent) c.budget = snx::parse_budget("percent", *o.top_percent);
  if (o.workers) c.workers = *o.workers;
  if (o.out) c.out = *o.out;
  snx::validate_config(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Siamese network explanations with global invariant masks"};
  app.require_subcommand(1);

  Overrides train_o, explain_o, run_o, attack_o;
  auto* train = app.add_subcommand("train", "train the Siamese model and write a checkpoint");
  add_config_flags(train, train_o, false);

  auto* explain = app.add_subcommand("explain", "explain the held-out pairs with one method");
  add_config_flags(explain, explain_o, true);

  std::string results_dir, distance = "jaccard";
  std::optional<std::size_t> eval_topk;
  std::optional<double> eval_percent;
  auto* eval = app.add_subcommand("eval", "score a results directory");
  eval->add_option("results", results_dir, "results directory")->required();
  auto* ek = eval->add_option("--topk", eval_topk, "decode the top N entries")->check(CLI::PositiveNumber);
  eval->add_option("--top-percent", eval_percent, "decode the top P percent")
      ->check(CLI::Range(0.0, 100.0))
      ->excludes(ek);
  eval->add_option("--distance", distance, "diversity distance")
      ->check(CLI::IsMember({"jaccard", "hamming", "cosine"}));

  std::string sweep_dir;
  std::vector<std::size_t> sweep_topk;
  std::vector<double> sweep_percent;
  auto* sweep = app.add_subcommand("sweep", "faithfulness and counterfactual loss across budgets");
  sweep->add_option("results", sweep_dir, "results directory")->required();
  sweep->add_option("--topk", sweep_topk, "top-N budgets")->check(CLI::PositiveNumber);
  sweep->add_option("--top-percent", sweep_percent, "top-percent budgets")->check(CLI::Range(0.0, 100.0));

  auto* attack = app.add_subcommand("attack", "saliency manipulation on random linear Siamese models");
  add_config_flags(attack, attack_o, false);

  auto* run = app.add_subcommand("run", "train, explain, eval and sweep in one go");
  add_config_flags(run, run_o, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const snx::CommandLog log{&std::cerr};
  try {
    if (*train) {
      snx::cmd_train(resolve(train_o), log);
    } else if (*explain) {
      snx::cmd_explain(resolve(explain_o), log);
    } else if (*eval) {
      snx::EvalOptions opts;
      if (eval_topk) opts.budget = snx::Budget::count(*eval_topk);
      if (eval_percent) opts.budget = snx::parse_budget("percent", *eval_percent);
      opts.distance = snx::parse_distance(distance);
      snx::cmd_eval(results_dir, opts, log);
    } else if (*sweep) {
      std::vector<snx::Budget> budgets;
      for (std::size_t k : sweep_topk) budgets.push_back(snx::Budget::count(k));
      for (double p : sweep_percent) budgets.push_back(snx::parse_budget("percent", p));
      snx::cmd_sweep(sweep_dir, budgets, log);
    } else if (*attack) {
      snx::cmd_attack(resolve(attack_o), log);
    } else if (*run) {
      const snx::RunConfig c = resolve(run_o);
      snx::cmd_train(c, log);
      const auto dir = snx::cmd_explain(c, log);
      snx::cmd_eval(dir, {}, log);
      snx::cmd_sweep(dir, {}, log);
    }
  } catch (const snx::DivergenceError& e) {
    std::cerr << "event=error kind=divergence message=\"" << e.what() << "\"\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "event=error kind=validation message=\"" << e.what() << "\"\n";
    return 1;
  }
  return 0;
}
