#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/logger.h>

#include "json.hpp"
#include "mctsr/config.hpp"
#include "mctsr/policy.hpp"
#include "mctsr/search.hpp"

namespace mctsr {

// ---------------------------------------------------------------------------
// Datasets

struct DatasetRecord {
  std::string record_id;
  std::string question;
  // Normalized final answer.
  std::string gold_answer;
  // Difficulty bucket such as "level-3", when the dataset has one.
  std::optional<std::string> level;
};

struct LoadResult {
  std::vector<DatasetRecord> records;
  int skipped = 0;
  std::vector<std::string> warnings;
};

enum class DatasetKind { gsm8k, math, jsonl };

DatasetKind parse_dataset_kind(std::string_view text);

// JSON lines with "question" and "answer"; the gold answer follows the last
// "#### " marker with commas removed. Malformed lines are skipped and counted.
LoadResult load_gsm8k(const std::filesystem::path& path);

// MATH records with "problem", "solution" and "level". Accepts a JSON array,
// JSON lines, or a directory of one-object JSON files. The gold answer is the
// content of the last \boxed{...} in the solution.
LoadResult load_math(const std::filesystem::path& path);

// Generic JSON lines with "question" and "answer" (optional "id", "level").
LoadResult load_jsonl(const std::filesystem::path& path);

LoadResult load_dataset(DatasetKind kind, const std::filesystem::path& path);

// Content of the last \boxed{...} with nested braces matched, if any.
std::optional<std::string> last_boxed(std::string_view text);

// ---------------------------------------------------------------------------
// Grading

// Trims and strips $, commas, trailing periods and a wrapping \boxed{}.
std::string normalize_answer(std::string_view text);

// Equal after normalization; otherwise equal as exact rationals (integers,
// a/b, finite decimals, \frac{a}{b}); otherwise, when either side is written
// as a decimal, equal within relative tolerance 1e-6.
bool grade_answer(std::string_view candidate, std::string_view gold);

// ---------------------------------------------------------------------------
// Benchmark runs

enum class BenchMode { zero_shot, one_turn, mctsr };

std::string_view to_string(BenchMode mode);
BenchMode parse_bench_mode(std::string_view text);

struct RecordOutcome {
  std::string record_id;
  BenchMode mode = BenchMode::mctsr;
  int rollouts = 0;
  std::string answer;
  std::string gold;
  bool correct = false;
  bool extraction_fallback = false;
  PolicyCallCounts calls;
  double wall_ms = 0.0;
  std::optional<std::string> level;
  std::string error;
  int rollouts_executed = 0;
  nlohmann::json telemetry;
};

void to_json(nlohmann::json& j, const RecordOutcome& outcome);
void from_json(const nlohmann::json& j, RecordOutcome& outcome);

struct Aggregate {
  std::string label;
  int solved = 0;
  int total = 0;
};

struct RunReport {
  BenchMode mode = BenchMode::mctsr;
  int rollouts = 0;
  std::vector<RecordOutcome> outcomes;
  Aggregate overall;
  // Sorted by level name.
  std::vector<Aggregate> levels;
  // Records processed by this invocation and records taken from an earlier run.
  int executed = 0;
  int resumed = 0;

  // Column heading, e.g. "8-rollouts MCTSr".
  std::string label() const;
};

RunReport make_report(BenchMode mode, int rollouts, std::vector<RecordOutcome> outcomes);

struct BenchOptions {
  BenchMode mode = BenchMode::mctsr;
  int rollouts = 8;
  SearchConfig config;
  std::filesystem::path out_dir;
  int workers = 4;
  bool dump_trees = false;
};

// Policy used for one record. Called from worker threads.
using PolicyFactory = std::function<std::shared_ptr<Policy>(const DatasetRecord&)>;

// Runs every record not already present in out_dir/results.jsonl for this
// mode and rollout budget, appending one JSON line per record as it finishes,
// then writes out_dir/report.txt. A record whose policy fails is recorded as
// incorrect with an error note.
RunReport run_benchmark(std::span<const DatasetRecord> records, const BenchOptions& options,
                        const PolicyFactory& policies,
                        std::shared_ptr<spdlog::logger> logger = nullptr);

// All outcomes stored in a results file; unreadable lines are skipped.
std::vector<RecordOutcome> read_results(const std::filesystem::path& results_file);

// Percentage rounded half-up to two decimals, e.g. "24.36%".
std::string format_percent(int solved, int total);

// One column per report, one row per level plus "Overall".
std::string render_report(std::span<const RunReport> reports);
std::string render_report(const RunReport& report);

}  // namespace mctsr
