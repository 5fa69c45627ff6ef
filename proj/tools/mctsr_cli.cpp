#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "mctsr/bench.hpp"
#include "mctsr/errors.hpp"
#include "mctsr/llm_client.hpp"
#include "mctsr/mock_policy.hpp"
#include "mctsr/search.hpp"
#include "mctsr/serialize.hpp"

using namespace mctsr;

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

// Flags that override the config file. Unset flags leave the file's value.
struct Overrides {
  std::optional<int> max_children, reward_samples, parent_resamples, threshold, constant, max_depth;
  std::optional<double> exploration_c, epsilon;
  std::optional<std::string> selection, root, early_stop;
  std::optional<std::uint64_t> seed;

  std::optional<std::string> base_url, api_key_env, model;
  std::optional<double> temperature, grade_temperature;
  std::optional<int> max_tokens, timeout, max_retries, backoff_ms, max_in_flight;

  std::optional<std::string> config_file, prompts_dir;
  std::string log_level = "warn";
};

void add_common_options(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_file, "JSON file with \"search\" and \"client\" sections");
  app.add_option("--prompts", o.prompts_dir, "Directory with draft/feedback/refine/reward .txt templates");
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off");

  app.add_option("--max-children", o.max_children, "Children before a node can be fully expanded")->group("Search");
  app.add_option("--exploration-c", o.exploration_c, "UCT exploration constant")->group("Search");
  app.add_option("--epsilon", o.epsilon, "UCT divide-by-zero guard")->group("Search");
  app.add_option("--reward-samples", o.reward_samples, "Grades per node visit")->group("Search");
  app.add_option("--parent-resamples", o.parent_resamples, "Extra parent grades per child evaluation")->group("Search");
  app.add_option("--full-score-threshold", o.threshold, "Raw scores above this are suppressed (100 = off)")->group("Search");
  app.add_option("--suppression-constant", o.constant, "Amount subtracted from suppressed scores")->group("Search");
  app.add_option("--selection", o.selection, "greedy or importance")->group("Search");
  app.add_option("--root", o.root, "dummy or naive")->group("Search");
  app.add_option("--early-stop", o.early_stop, "off or repeat(k)")->group("Search");
  app.add_option("--max-depth", o.max_depth, "Stop once a node reaches this depth")->group("Search");
  app.add_option("--seed", o.seed, "Search RNG seed")->group("Search");

  app.add_option("--base-url", o.base_url, "Endpoint prefix before /chat/completions")->group("Client");
  app.add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key")->group("Client");
  app.add_option("--model", o.model, "Model name")->group("Client");
  app.add_option("--temperature", o.temperature, "Sampling temperature for draft/critique/rewrite")->group("Client");
  app.add_option("--grade-temperature", o.grade_temperature, "Sampling temperature for grading")->group("Client");
  app.add_option("--max-tokens", o.max_tokens, "Completion token limit")->group("Client");
  app.add_option("--timeout", o.timeout, "Per-request timeout in seconds")->group("Client");
  app.add_option("--max-retries", o.max_retries, "Retries for transport errors, 5xx and 429")->group("Client");
  app.add_option("--backoff-ms", o.backoff_ms, "Backoff base in milliseconds")->group("Client");
  app.add_option("--max-in-flight", o.max_in_flight, "Concurrent request cap")->group("Client");
}

struct Settings {
  SearchConfig search;
  ClientConfig client;
  PromptBundle prompts = PromptBundle::defaults();
};

template <typename T>
void apply(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

Settings resolve(const Overrides& o) {
  Settings s;
  if (o.config_file) {
    const auto doc = read_json(*o.config_file);
    if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, value] : doc.items()) {
      if (key == "search") s.search = value.get<SearchConfig>();
      else if (key == "client") s.client = value.get<ClientConfig>();
      else throw ConfigError("unknown config section '" + key + "'");
    }
  }
  apply(o.max_children, s.search.max_children);
  apply(o.exploration_c, s.search.exploration_c);
  apply(o.epsilon, s.search.epsilon);
  apply(o.reward_samples, s.search.reward_samples_per_visit);
  apply(o.parent_resamples, s.search.parent_resample_count);
  apply(o.threshold, s.search.full_score_threshold);
  apply(o.constant, s.search.suppression_constant);
  if (o.selection) s.search.selection_mode = parse_selection_mode(*o.selection);
  if (o.root) s.search.root_mode = parse_root_mode(*o.root);
  if (o.early_stop) s.search.early_stop_repeat = parse_early_stop(*o.early_stop);
  if (o.max_depth) s.search.max_depth = *o.max_depth;
  apply(o.seed, s.search.rng_seed);

  apply(o.base_url, s.client.base_url);
  apply(o.api_key_env, s.client.api_key_env);
  apply(o.model, s.client.model_name);
  apply(o.temperature, s.client.temperature);
  apply(o.grade_temperature, s.client.grade_temperature);
  apply(o.max_tokens, s.client.max_tokens);
  apply(o.timeout, s.client.timeout_seconds);
  apply(o.max_retries, s.client.max_retries);
  apply(o.backoff_ms, s.client.backoff_base_ms);
  apply(o.max_in_flight, s.client.max_in_flight);

  if (o.prompts_dir) s.prompts = PromptBundle::from_directory(*o.prompts_dir);
  s.prompts.validate();
  return s;
}

void configure_logging(const std::string& level) {
  auto logger = spdlog::stderr_color_mt("mctsr");
  logger->set_level(spdlog::level::from_str(level));
  spdlog::set_default_logger(logger);
}

int run_solve(const Overrides& o, std::string question, const std::string& mode_text, int rollouts,
              const std::optional<std::string>& mock_file, const std::optional<std::string>& dump_tree) {
  Settings s = resolve(o);
  if (question.starts_with("@")) question = read_text(question.substr(1));
  const BenchMode mode = parse_bench_mode(mode_text);
  s.search.max_rollouts = rollouts;
  s.search.validate();

  std::unique_ptr<Policy> policy;
  if (mock_file) {
    policy = mock_policy(read_json(*mock_file).get<MockScript>());
  } else {
    policy = live_policy(s.client, s.prompts);
  }

  std::string answer;
  nlohmann::json summary;
  if (mode == BenchMode::zero_shot) {
    answer = zero_shot(question, *policy);
  } else if (mode == BenchMode::one_turn) {
    answer = one_turn_self_refine(question, *policy);
  } else {
    const SearchResult result = run_search(question, *policy, s.search);
    answer = result.best_answer;
    summary = result.telemetry;
    summary["best_node_id"] = result.best_node_id;
    summary["nodes"] = result.tree.size();
    if (dump_tree) {
      std::ofstream(*dump_tree, std::ios::binary) << serialize_tree(result.tree, s.search);
    }
  }
  std::cout << answer << "\n";
  try {
    const ExtractedAnswer extracted = extract_final_answer(answer);
    std::cout << "final answer: " << extracted.text << (extracted.used_fallback ? " (fallback)" : "")
              << "\n";
  } catch (const ExtractionError&) {
    std::cout << "final answer: (none)\n";
  }
  if (!summary.is_null()) spdlog::info("telemetry: {}", summary.dump());
  return 0;
}

int run_bench(const Overrides& o, const std::string& dataset, const std::string& path,
              const std::string& mode_text, int rollouts, std::optional<int> limit,
              const std::string& out_dir, int workers, bool dump_trees,
              const std::optional<std::string>& mock_file) {
  Settings s = resolve(o);
  LoadResult loaded = load_dataset(parse_dataset_kind(dataset), path);
  for (const auto& w : loaded.warnings) spdlog::warn("{}", w);
  if (limit && *limit >= 0 && static_cast<std::size_t>(*limit) < loaded.records.size()) {
    loaded.records.resize(static_cast<std::size_t>(*limit));
  }

  BenchOptions options;
  options.mode = parse_bench_mode(mode_text);
  options.rollouts = rollouts;
  options.config = s.search;
  options.out_dir = out_dir;
  options.workers = workers;
  options.dump_trees = dump_trees;

  PolicyFactory factory;
  if (mock_file) {
    // Object mapping record id to its script.
    auto scripts = read_json(*mock_file).get<std::map<std::string, MockScript>>();
    factory = [scripts = std::move(scripts)](const DatasetRecord& r) -> std::shared_ptr<Policy> {
      const auto it = scripts.find(r.record_id);
      if (it == scripts.end()) throw PolicyError("no mock script for record " + r.record_id);
      return std::make_shared<MockPolicy>(it->second);
    };
  } else {
    std::shared_ptr<Policy> shared = live_policy(s.client, s.prompts);
    factory = [shared](const DatasetRecord&) { return shared; };
  }

  const RunReport report = run_benchmark(loaded.records, options, factory);
  std::cout << render_report(report);
  std::cout << report.executed << " run, " << report.resumed << " resumed, " << loaded.skipped
            << " skipped while loading\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo tree self-refine search for math word problems"};
  app.require_subcommand(1);

  Overrides solve_flags;
  std::string question, solve_mode = "mctsr";
  int solve_rollouts = 8;
  std::optional<std::string> solve_mock, dump_tree;
  CLI::App* solve = app.add_subcommand("solve", "Answer one question");
  solve->add_option("--question", question, "Question text, or @file to read it")->required();
  solve->add_option("--mode", solve_mode, "zero-shot, one-turn or mctsr");
  solve->add_option("--rollouts", solve_rollouts, "Rollout budget for mctsr");
  solve->add_option("--dump-tree", dump_tree, "Write the search tree as JSON to this path");
  solve->add_option("--mock-script", solve_mock, "Use a scripted mock policy from this JSON file");
  add_common_options(*solve, solve_flags);

  Overrides bench_flags;
  std::string dataset, data_path, bench_mode = "mctsr", out_dir = "bench-out";
  int bench_rollouts = 8, workers = 4;
  std::optional<int> limit;
  bool dump_trees = false;
  std::optional<std::string> bench_mock;
  CLI::App* bench = app.add_subcommand("bench", "Run a dataset and report success rates");
  bench->add_option("--dataset", dataset, "gsm8k, math or jsonl")->required();
  bench->add_option("--path", data_path, "Dataset file or directory")->required();
  bench->add_option("--mode", bench_mode, "zero-shot, one-turn or mctsr");
  bench->add_option("--rollouts", bench_rollouts, "Rollout budget for mctsr");
  bench->add_option("--limit", limit, "Only the first K records");
  bench->add_option("--out", out_dir, "Directory for results.jsonl and report.txt");
  bench->add_option("--workers", workers, "Records processed in parallel");
  bench->add_flag("--dump-trees", dump_trees, "Write trees/<record_id>.json");
  bench->add_option("--mock-scripts", bench_mock, "JSON object of record id to mock script");
  add_common_options(*bench, bench_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      configure_logging(solve_flags.log_level);
      return run_solve(solve_flags, question, solve_mode, solve_rollouts, solve_mock, dump_tree);
    }
    configure_logging(bench_flags.log_level);
    return run_bench(bench_flags, dataset, data_path, bench_mode, bench_rollouts, limit, out_dir,
                     workers, dump_trees, bench_mock);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
