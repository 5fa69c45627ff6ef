#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "mctsr/bench.hpp"
#include "mctsr/config.hpp"
#include "mctsr/mock_policy.hpp"
#include "mctsr/policy.hpp"
#include "mctsr/tree.hpp"

namespace mctsr::testing {

// Policy that replays queued grades and texts. A queued grade of
// kFailGrade throws PolicyError instead. Empty queues fall back to defaults.
class ScriptedPolicy final : public Policy {
 public:
  static constexpr int kFailGrade = 1000;

  std::deque<int> grades;
  std::deque<std::string> rewrites;
  std::string draft_text = "draft";
  std::string critique_text = "critique";
  int default_grade = 0;
  bool fail_critique = false;
  bool fail_rewrite = false;
  bool fail_draft = false;

  std::string draft(std::string_view problem) override;
  std::string critique(std::string_view problem, std::string_view answer) override;
  std::string rewrite(std::string_view problem, std::string_view answer,
                      std::string_view feedback) override;
  int grade(std::string_view problem, std::string_view answer) override;

 private:
  std::mutex mutex_;
};

// Wraps another policy and makes grade calls fail with probability
// `fail_rate`, drawn from its own seeded stream.
class FlakyPolicy final : public Policy {
 public:
  FlakyPolicy(Policy& inner, double fail_rate, std::uint64_t seed, double rewrite_fail_rate = 0.0)
      : inner_(inner), fail_rate_(fail_rate), rewrite_fail_rate_(rewrite_fail_rate), rng_(seed) {}

  std::string draft(std::string_view problem) override { return inner_.draft(problem); }
  std::string critique(std::string_view problem, std::string_view answer) override {
    return inner_.critique(problem, answer);
  }
  std::string rewrite(std::string_view problem, std::string_view answer,
                      std::string_view feedback) override;
  int grade(std::string_view problem, std::string_view answer) override;

 private:
  bool roll(double rate);

  Policy& inner_;
  double fail_rate_;
  double rewrite_fail_rate_;
  std::mutex mutex_;
  std::mt19937_64 rng_;
};

struct RecordedRequest {
  std::string path;
  std::string body;
  std::string authorization;
};

// Local HTTP server on an ephemeral port. The handler receives the 0-based
// request index and fills the response.
class StubServer {
 public:
  using Handler = std::function<void(int index, const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Handler handler);
  ~StubServer();
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  std::string base_url() const;
  std::vector<RecordedRequest> requests() const;
  int request_count() const;

 private:
  httplib::Server server_;
  Handler handler_;
  int port_ = 0;
  mutable std::mutex mutex_;
  std::vector<RecordedRequest> requests_;
  std::thread thread_;
};

// Chat-completion response body carrying `content`.
std::string completion_body(const std::string& content);

// Random tree grown through the public API with random rewards.
SearchTree random_tree(std::mt19937_64& rng, int max_nodes, int max_branch = 4);

// Tree with arbitrary (not necessarily consistent) q_eff values.
SearchTree random_tree_with_arbitrary_q(std::mt19937_64& rng, int max_nodes);

// Direct scan of the candidate definition over every node.
std::vector<NodeId> brute_force_candidates(const SearchTree& tree, int max_children);

// Refine-formatted answer for revision `step` of script `script`.
std::string step_text(int script, int step, int value);

// Scripts whose target sits `distance` rewrites from the start.
MockScript make_script(int index, int distance, int noise, std::uint64_t seed);

// Search settings for mock-driven runs: the mock grades the target 100, so
// suppression is switched off (threshold 100) to keep its score intact.
SearchConfig mock_search_config(std::uint64_t seed);

// Bundled ten-record GSM8K-format file.
std::filesystem::path gsm8k_fixture();

// One mock per record. The first `reachable` records get a script whose
// target states the gold answer; the rest converge on a wrong answer.
// `created` counts policies handed out, i.e. records actually run.
PolicyFactory reachable_factory(std::span<const DatasetRecord> records, int reachable,
                                std::atomic<int>* created = nullptr);

// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

}  // namespace mctsr::testing
