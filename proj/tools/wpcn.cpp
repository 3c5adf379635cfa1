// Command-line front end: train, eval, baseline, oracle, aggregate, selftest.

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "support/criteria.hpp"
#include "wpcn/runner.hpp"

namespace {

using namespace wpcn;
using runner::ExperimentConfig;
using runner::Policy;

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::size_t> cells;
  std::optional<std::string> eh_model;
  std::optional<std::string> policy;
  std::optional<std::string> seed;
  std::optional<std::size_t> train_slots;
  std::optional<std::string> out_dir;
  bool greedy_eval = false;
  bool parallel = false;
  std::size_t jobs = 1;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value config file");
    app->add_option("--set", sets, "extra key=value override (repeatable)");
    app->add_option("--n-cells", cells, "number of cells N");
    app->add_option("--eh-model", eh_model, "linear or nonlinear");
    app->add_option("--policy", policy, "madrl, naive, pgd or oracle");
    app->add_option("--seed", seed, "seed or range a..b");
    app->add_option("--train-slots", train_slots, "training slots per seed");
    app->add_option("--out-dir", out_dir, "output directory");
    app->add_flag("--greedy-eval", greedy_eval, "argmax actions at test time");
    app->add_flag("--parallel-agents", parallel, "one thread per agent inside a slot");
    app->add_option("--jobs", jobs, "seeds run concurrently")->check(CLI::PositiveNumber);
  }

  ExperimentConfig build() const {
    ExperimentConfig c = config_file.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(config_file);
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (cells) c.cells = *cells;
    if (eh_model) c.set("eh_model", *eh_model);
    if (policy) c.policy = runner::parse_policy(*policy);
    if (seed) c.set("seeds", *seed);
    if (train_slots) c.train_slots = *train_slots;
    if (out_dir) c.out_dir = *out_dir;
    if (greedy_eval) c.greedy_eval = true;
    if (parallel) c.parallel_agents = true;
    c.validate();
    return c;
  }
};

std::filesystem::path checkpoint_dir(const ExperimentConfig& c, std::uint64_t seed) {
  return std::filesystem::path(c.out_dir) / "checkpoints" / ("seed_" + std::to_string(seed));
}

// Runs fn(seed) for every configured seed on up to `jobs` threads.
template <typename F>
void for_each_seed(const ExperimentConfig& c, std::size_t jobs, F&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < c.seeds.size(); k = next++) {
      try {
        fn(c.seeds[k]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(jobs, c.seeds.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

int cmd_train(const CommonOptions& opt) {
  const ExperimentConfig c = opt.build();
  std::mutex print;
  std::atomic<bool> failed{false};
  for_each_seed(c, opt.jobs, [&](std::uint64_t seed) {
    runner::MetricsWriter writer(runner::metrics_path(c.out_dir, Policy::madrl, seed), c);
    const runner::TrainResult r =
        runner::train(c, seed, [&](const runner::MetricsRow& row) { writer.write(row); }, checkpoint_dir(c, seed));
    writer.close();
    if (r.failed) failed = true;
    std::lock_guard lock(print);
    std::printf("seed %llu: %zu slots, mean sum rate %.6g nats/s, final MA %.6g, skipped %zu/%zu updates, "
                "EH violations %zu%s\n",
                static_cast<unsigned long long>(seed), r.slots, r.mean_sum_rate, r.final_ma_sum_rate,
                r.skipped_updates, r.updates, r.eh_violations, r.failed ? " FAILED" : "");
  });
  return failed ? 1 : 0;
}

int cmd_eval(const CommonOptions& opt) {
  const ExperimentConfig c = opt.build();
  std::mutex print;
  for_each_seed(c, opt.jobs, [&](std::uint64_t seed) {
    const runner::EvalSummary s = runner::evaluate(c, seed, checkpoint_dir(c, seed));
    const auto path = std::filesystem::path(c.out_dir) / ("eval_" + runner::to_string(s.policy) + "_seed_" +
                                                          std::to_string(seed) + ".csv");
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    out << "slot,sum_rate\n";
    for (std::size_t t = 0; t < s.sum_rates.size(); ++t) out << t << ',' << s.sum_rates[t] << '\n';
    std::lock_guard lock(print);
    std::printf("seed %llu: %s mean test sum rate %.6g nats/s over %zu slots, naive %.6g (ratio %.4f)\n",
                static_cast<unsigned long long>(seed), runner::to_string(s.policy).c_str(), s.mean_sum_rate,
                s.slots, s.naive_mean_sum_rate, s.mean_sum_rate / s.naive_mean_sum_rate);
  });
  return 0;
}

int cmd_baseline(const CommonOptions& opt, std::optional<std::size_t> slots, std::optional<Policy> forced) {
  ExperimentConfig c = opt.build();
  if (forced) c.policy = *forced;
  if (c.policy == Policy::madrl) c.policy = Policy::naive;
  const std::size_t n = slots.value_or(c.train_slots);
  std::mutex print;
  for_each_seed(c, opt.jobs, [&](std::uint64_t seed) {
    runner::MetricsWriter writer(runner::metrics_path(c.out_dir, c.policy, seed), c);
    const runner::BaselineResult r =
        runner::run_baseline(c, seed, c.policy, n, [&](const runner::MetricsRow& row) { writer.write(row); });
    writer.close();
    std::lock_guard lock(print);
    std::printf("seed %llu: %s mean sum rate %.6g nats/s over %zu slots, %.3g s per solve\n",
                static_cast<unsigned long long>(seed), runner::to_string(r.policy).c_str(), r.mean_sum_rate,
                r.slots, r.mean_solve_seconds);
  });
  return 0;
}

int cmd_aggregate(const std::vector<std::string>& files, const std::string& output) {
  std::vector<runner::MetricsFile> parsed;
  for (const auto& f : files) parsed.push_back(runner::read_metrics(f));
  const auto rows = runner::aggregate(parsed);
  if (output.empty() || output == "-") {
    runner::write_aggregate(std::cout, rows);
  } else {
    std::ofstream out(output);
    if (!out) throw ConfigError("cannot write " + output);
    runner::write_aggregate(out, rows);
  }
  return 0;
}

int cmd_selftest(bool full) {
  using namespace wpcn::testing;
  const Budget b = full ? Budget::full : Budget::quick;
  std::vector<CriterionResult> results{gradient_suite(b), physics_equivalence(b), eh_safety(b),
                                       bandit_sanity(b), pgd_dominance(b), determinism(b)};
  int failures = 0;
  for (const auto& r : results) {
    std::printf("%s\n", format_result(r).c_str());
    failures += !r.pass;
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-cell wireless powered network simulator with distributed actor-critic agents"};
  app.require_subcommand(1);

  CommonOptions train_opt, eval_opt, base_opt, oracle_opt;
  auto* train = app.add_subcommand("train", "train MADRL agents and write metrics and checkpoints");
  train_opt.attach(train);
  auto* eval = app.add_subcommand("eval", "evaluate trained checkpoints on the test channel stream");
  eval_opt.attach(eval);
  std::optional<std::size_t> base_slots, oracle_slots;
  auto* base = app.add_subcommand("baseline", "run a centralized baseline (naive, pgd, oracle)");
  base_opt.attach(base);
  base->add_option("--slots", base_slots, "slots per seed (default: train slots)");
  auto* oracle = app.add_subcommand("oracle", "run the brute-force grid oracle");
  oracle_opt.attach(oracle);
  oracle->add_option("--slots", oracle_slots, "slots per seed (default: train slots)");
  std::vector<std::string> agg_files;
  std::string agg_output;
  auto* agg = app.add_subcommand("aggregate", "per-slot mean and sd across metrics files");
  agg->add_option("files", agg_files, "metrics CSV files")->required()->check(CLI::ExistingFile);
  agg->add_option("-o,--output", agg_output, "output CSV (default stdout)");
  bool selftest_full = false;
  auto* self = app.add_subcommand("selftest", "run the invariant suites");
  self->add_flag("--full", selftest_full, "full sample counts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_opt);
    if (*eval) return cmd_eval(eval_opt);
    if (*base) return cmd_baseline(base_opt, base_slots, std::nullopt);
    if (*oracle) return cmd_baseline(oracle_opt, oracle_slots, Policy::oracle);
    if (*agg) return cmd_aggregate(agg_files, agg_output);
    if (*self) return cmd_selftest(selftest_full);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
