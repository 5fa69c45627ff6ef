#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "mctsr/bench.hpp"
#include "mctsr/errors.hpp"
#include "mctsr/serialize.hpp"

namespace mctsr {

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string file_safe(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "record" : out;
}

std::string outcome_key(std::string_view record_id, BenchMode mode, int rollouts) {
  return std::string(to_string(mode)) + "/" + std::to_string(rollouts) + "/" + std::string(record_id);
}

// Appends newline-terminated lines; the first write repairs a missing final
// newline left by an interrupted run.
class ResultsWriter {
 public:
  explicit ResultsWriter(const std::filesystem::path& path) {
    bool needs_newline = false;
    if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
      std::ifstream in(path, std::ios::binary);
      in.seekg(-1, std::ios::end);
      char last = '\n';
      in.get(last);
      needs_newline = last != '\n';
    }
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw ConfigError("cannot open " + path.string() + " for appending");
    if (needs_newline) out_ << '\n';
  }

  void append(const nlohmann::json& line) {
    std::lock_guard lock(mutex_);
    out_ << line.dump() << '\n';
    out_.flush();
  }

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

RecordOutcome run_record(const DatasetRecord& record, const BenchOptions& options,
                         const PolicyFactory& policies) {
  RecordOutcome outcome;
  outcome.record_id = record.record_id;
  outcome.mode = options.mode;
  outcome.rollouts = options.mode == BenchMode::mctsr ? options.rollouts : 0;
  outcome.gold = record.gold_answer;
  outcome.level = record.level;

  const auto started = std::chrono::steady_clock::now();
  std::shared_ptr<Policy> policy;
  std::optional<CountingPolicy> counted;
  try {
    policy = policies(record);
    if (!policy) throw PolicyError("policy factory returned nothing");
    counted.emplace(*policy);
    std::string response;
    switch (options.mode) {
      case BenchMode::zero_shot:
        response = zero_shot(record.question, *counted);
        break;
      case BenchMode::one_turn:
        response = one_turn_self_refine(record.question, *counted);
        break;
      case BenchMode::mctsr: {
        SearchConfig config = options.config;
        config.max_rollouts = options.rollouts;
        config.rng_seed = options.config.rng_seed ^ fnv1a(record.record_id);
        SearchResult result = run_search(record.question, *counted, config);
        response = result.best_answer;
        outcome.rollouts_executed = result.telemetry.rollouts_executed;
        outcome.telemetry = {{"rollouts_executed", result.telemetry.rollouts_executed},
                             {"successful_rollouts", result.telemetry.successful_rollouts()},
                             {"degraded", result.telemetry.degraded},
                             {"stop_reason", result.telemetry.stop_reason},
                             {"dropped_grade_samples", result.telemetry.dropped_grade_samples},
                             {"best_node_id", result.best_node_id},
                             {"nodes", result.tree.size()}};
        if (options.dump_trees) {
          const auto dir = options.out_dir / "trees";
          std::filesystem::create_directories(dir);
          std::ofstream tree_out(dir / (file_safe(record.record_id) + ".json"), std::ios::binary);
          tree_out << serialize_tree(result.tree, config);
        }
        break;
      }
    }
    const ExtractedAnswer extracted = extract_final_answer(response);
    outcome.answer = extracted.text;
    outcome.extraction_fallback = extracted.used_fallback;
    outcome.correct = grade_answer(outcome.answer, record.gold_answer);
  } catch (const std::exception& e) {
    outcome.correct = false;
    outcome.error = e.what();
  }
  if (counted) outcome.calls = counted->counts();
  outcome.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return outcome;
}

}  // namespace

std::string_view to_string(BenchMode mode) {
  switch (mode) {
    case BenchMode::zero_shot:
      return "zero-shot";
    case BenchMode::one_turn:
      return "one-turn";
    case BenchMode::mctsr:
      return "mctsr";
  }
  return "mctsr";
}

BenchMode parse_bench_mode(std::string_view text) {
  if (text == "zero-shot" || text == "zero_shot") return BenchMode::zero_shot;
  if (text == "one-turn" || text == "one_turn") return BenchMode::one_turn;
  if (text == "mctsr") return BenchMode::mctsr;
  throw ConfigError("unknown mode '" + std::string(text) + "' (zero-shot, one-turn, mctsr)");
}

void to_json(nlohmann::json& j, const RecordOutcome& o) {
  j = nlohmann::json{{"record_id", o.record_id},
                     {"mode", to_string(o.mode)},
                     {"rollouts", o.rollouts},
                     {"answer", o.answer},
                     {"gold", o.gold},
                     {"correct", o.correct},
                     {"extraction_fallback", o.extraction_fallback},
                     {"calls", o.calls},
                     {"wall_ms", o.wall_ms},
                     {"level", o.level ? nlohmann::json(*o.level) : nlohmann::json(nullptr)},
                     {"error", o.error},
                     {"rollouts_executed", o.rollouts_executed},
                     {"telemetry", o.telemetry}};
}

void from_json(const nlohmann::json& j, RecordOutcome& o) {
  j.at("record_id").get_to(o.record_id);
  o.mode = parse_bench_mode(j.at("mode").get<std::string>());
  j.at("rollouts").get_to(o.rollouts);
  j.at("answer").get_to(o.answer);
  o.gold = j.value("gold", std::string{});
  j.at("correct").get_to(o.correct);
  o.extraction_fallback = j.value("extraction_fallback", false);
  if (j.contains("calls")) {
    const auto& c = j.at("calls");
    o.calls = {c.value("draft", std::int64_t{0}), c.value("critique", std::int64_t{0}),
               c.value("rewrite", std::int64_t{0}), c.value("grade", std::int64_t{0}),
               c.value("failures", std::int64_t{0})};
  }
  o.wall_ms = j.value("wall_ms", 0.0);
  if (j.contains("level") && !j.at("level").is_null()) o.level = j.at("level").get<std::string>();
  o.error = j.value("error", std::string{});
  o.rollouts_executed = j.value("rollouts_executed", 0);
  o.telemetry = j.value("telemetry", nlohmann::json{});
}

std::string RunReport::label() const {
  switch (mode) {
    case BenchMode::zero_shot:
      return "Zero-Shot CoT";
    case BenchMode::one_turn:
      return "One-turn Self-refine";
    case BenchMode::mctsr:
      return std::to_string(rollouts) + "-rollouts MCTSr";
  }
  return {};
}

RunReport make_report(BenchMode mode, int rollouts, std::vector<RecordOutcome> outcomes) {
  RunReport report;
  report.mode = mode;
  report.rollouts = rollouts;
  report.overall.label = "Overall";
  std::map<std::string, Aggregate> levels;
  for (const auto& o : outcomes) {
    ++report.overall.total;
    report.overall.solved += o.correct ? 1 : 0;
    if (o.level) {
      Aggregate& a = levels[*o.level];
      a.label = *o.level;
      ++a.total;
      a.solved += o.correct ? 1 : 0;
    }
  }
  for (auto& [name, a] : levels) report.levels.push_back(a);
  report.outcomes = std::move(outcomes);
  return report;
}

std::vector<RecordOutcome> read_results(const std::filesystem::path& results_file) {
  std::vector<RecordOutcome> out;
  std::ifstream in(results_file, std::ios::binary);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<RecordOutcome>());
    } catch (const std::exception& e) {
      spdlog::warn("skipping unreadable results line: {}", e.what());
    }
  }
  return out;
}

RunReport run_benchmark(std::span<const DatasetRecord> records, const BenchOptions& options,
                        const PolicyFactory& policies, std::shared_ptr<spdlog::logger> logger) {
  if (!logger) logger = spdlog::default_logger();
  if (options.mode == BenchMode::mctsr) {
    if (options.rollouts < 0) throw ConfigError("rollouts must be non-negative");
    options.config.validate();
  }
  std::filesystem::create_directories(options.out_dir);
  const auto results_path = options.out_dir / "results.jsonl";
  const int rollouts = options.mode == BenchMode::mctsr ? options.rollouts : 0;

  std::map<std::string, RecordOutcome> done;
  for (auto& o : read_results(results_path)) {
    if (o.mode == options.mode && o.rollouts == rollouts) {
      const std::string key = outcome_key(o.record_id, o.mode, o.rollouts);
      done.insert_or_assign(key, std::move(o));
    }
  }

  std::vector<std::size_t> pending;
  std::set<std::string> seen;
  int resumed = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string key = outcome_key(records[i].record_id, options.mode, rollouts);
    if (!seen.insert(key).second) {
      logger->warn("duplicate record id {} ignored", records[i].record_id);
      continue;
    }
    if (done.count(key)) {
      ++resumed;
    } else {
      pending.push_back(i);
    }
  }
  logger->info("{} record(s): {} already done, {} to run", seen.size(), resumed, pending.size());

  ResultsWriter writer(results_path);
  std::mutex done_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t slot = next++; slot < pending.size(); slot = next++) {
      const DatasetRecord& record = records[pending[slot]];
      RecordOutcome outcome = run_record(record, options, policies);
      if (!outcome.error.empty()) logger->warn("record {} failed: {}", record.record_id, outcome.error);
      writer.append(outcome);
      std::lock_guard lock(done_mutex);
      done.insert_or_assign(outcome_key(record.record_id, options.mode, rollouts), std::move(outcome));
    }
  };
  {
    const int count = std::clamp<int>(options.workers, 1, std::max<int>(1, static_cast<int>(pending.size())));
    std::vector<std::jthread> pool;
    for (int i = 0; i < count; ++i) pool.emplace_back(worker);
  }

  std::vector<RecordOutcome> ordered;
  seen.clear();
  for (const auto& record : records) {
    const std::string key = outcome_key(record.record_id, options.mode, rollouts);
    if (!seen.insert(key).second) continue;
    ordered.push_back(done.at(key));
  }
  RunReport report = make_report(options.mode, rollouts, std::move(ordered));
  report.executed = static_cast<int>(pending.size());
  report.resumed = resumed;

  std::ofstream(options.out_dir / "report.txt", std::ios::binary) << render_report(report);
  return report;
}

std::string format_percent(int solved, int total) {
  if (total <= 0) return "0.00%";
  // Basis points rounded half-up in integer arithmetic.
  const long long bp = (20000LL * solved + total) / (2LL * total);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%02lld%%", bp / 100, bp % 100);
  return buf;
}

std::string render_report(std::span<const RunReport> reports) {
  std::vector<std::string> row_labels;
  std::set<std::string> level_names;
  for (const auto& r : reports) {
    for (const auto& a : r.levels) level_names.insert(a.label);
  }
  row_labels.assign(level_names.begin(), level_names.end());
  row_labels.push_back("Overall");

  auto cell = [](const Aggregate& a) {
    return std::to_string(a.solved) + "/" + std::to_string(a.total) + " " + format_percent(a.solved, a.total);
  };
  auto find = [](const RunReport& r, const std::string& label) -> Aggregate {
    if (label == "Overall") return r.overall;
    for (const auto& a : r.levels) {
      if (a.label == label) return a;
    }
    return Aggregate{label, 0, 0};
  };

  std::vector<std::vector<std::string>> table;
  table.push_back({"Level"});
  for (const auto& r : reports) table.front().push_back(r.label());
  for (const auto& label : row_labels) {
    std::vector<std::string> row{label};
    for (const auto& r : reports) row.push_back(cell(find(r, label)));
    table.push_back(std::move(row));
  }

  std::vector<std::size_t> width(table.front().size(), 0);
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c ? " | " : "") << row[c];
      if (c + 1 < row.size()) out << std::string(width[c] - row[c].size(), ' ');
    }
    out << '\n';
  };
  emit(table.front());
  for (std::size_t c = 0; c < width.size(); ++c) out << (c ? "-+-" : "") << std::string(width[c], '-');
  out << '\n';
  for (std::size_t r = 1; r < table.size(); ++r) emit(table[r]);
  return out.str();
}

std::string render_report(const RunReport& report) {
  return render_report(std::span<const RunReport>(&report, 1));
}

}  // namespace mctsr
