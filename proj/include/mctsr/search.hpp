#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mctsr/config.hpp"
#include "mctsr/policy.hpp"
#include "mctsr/tree.hpp"

namespace mctsr {

struct PolicyCallCounts {
  std::int64_t draft = 0;
  std::int64_t critique = 0;
  std::int64_t rewrite = 0;
  // Successful grade calls; each one became a reward sample.
  std::int64_t grade = 0;
  // Calls of any kind that threw.
  std::int64_t failures = 0;

  std::int64_t total() const { return draft + critique + rewrite + grade + failures; }
};

void to_json(nlohmann::json& j, const PolicyCallCounts& counts);

// Forwards to another policy and counts calls. Safe for concurrent use if the
// wrapped policy is.
class CountingPolicy final : public Policy {
 public:
  explicit CountingPolicy(Policy& inner) : inner_(inner) {}

  std::string draft(std::string_view problem) override;
  std::string critique(std::string_view problem, std::string_view answer) override;
  std::string rewrite(std::string_view problem, std::string_view answer,
                      std::string_view feedback) override;
  int grade(std::string_view problem, std::string_view answer) override;

  PolicyCallCounts counts() const;

 private:
  Policy& inner_;
  std::atomic<std::int64_t> draft_{0}, critique_{0}, rewrite_{0}, grade_{0}, failures_{0};
};

struct RolloutRecord {
  int index = 0;
  NodeId selected = 0;
  // Candidate set the selection was made from.
  std::vector<NodeId> candidates;
  // Node appended by this rollout; empty when the rollout failed.
  std::optional<NodeId> created;
  int reward_samples = 0;
  int parent_samples = 0;
  int dropped_samples = 0;
  double best_q_eff = 0.0;
  int attempts = 0;
  bool failed = false;
  std::string error;
};

struct Telemetry {
  int rollouts_executed = 0;
  std::vector<RolloutRecord> rollouts;
  PolicyCallCounts calls;
  int dropped_grade_samples = 0;
  // No rollout succeeded; the result is the root.
  bool degraded = false;
  std::string stop_reason;
  std::vector<std::string> warnings;

  int successful_rollouts() const;
};

void to_json(nlohmann::json& j, const RolloutRecord& record);
void to_json(nlohmann::json& j, const Telemetry& telemetry);

struct SearchResult {
  NodeId best_node_id = 0;
  std::string best_answer;
  SearchTree tree;
  Telemetry telemetry;
};

using SearchRng = std::mt19937_64;

// Creates and grades the root. In dummy mode the root answer is drawn
// uniformly from config.dummy_answers with `rng`; in naive mode it is the
// policy's draft. Throws InitializationError if the draft or every root
// grade fails.
SearchTree init_tree(std::string_view problem, Policy& policy, const SearchConfig& config,
                     SearchRng& rng, Telemetry* telemetry = nullptr);
SearchTree init_tree(std::string_view problem, Policy& policy, const SearchConfig& config);

// UCT-based choice among candidate_set(tree). Greedy takes the maximum with
// ties going to the lowest id; importance mode samples candidates with
// weight UCT - min(UCT) + 1.
NodeId select_node(const SearchTree& tree, const SearchConfig& config, SearchRng& rng);

// UCT of `id` as used by select_node. The root has no parent and scores n_parent = 0.
double node_uct(const SearchTree& tree, NodeId id, const SearchConfig& config);

// Critiques and rewrites the node's answer and appends the result as a new,
// unsampled child. The tree is untouched if either policy call throws.
// Throws PreconditionError if the node already sits at max_depth.
NodeId expand(SearchTree& tree, NodeId node_id, std::string_view problem, Policy& policy,
              const SearchConfig& config);

struct EvaluationOutcome {
  int samples = 0;
  int dropped = 0;
  int parent_samples = 0;
  int parent_dropped = 0;
};

// Draws reward_samples_per_visit grades for the node and
// parent_resample_count grades for its parent, applies suppression, and
// restores the backup rule along the root path. Individual failed grades are
// dropped; if all of the node's grades fail, nothing is modified and
// EvaluationError is thrown.
EvaluationOutcome evaluate(SearchTree& tree, NodeId node_id, std::string_view problem,
                           Policy& policy, const SearchConfig& config);

bool check_termination(const SearchTree& tree, const Telemetry& telemetry,
                       const SearchConfig& config);

// Node with the highest q_eff, excluding a dummy root unless it is the only
// node. Ties prefer the deeper node, then the lower id.
NodeId best_answer(const SearchTree& tree, const SearchConfig& config);

// Called after every rollout, failed or not, with the tree as it stands.
using RolloutObserver = std::function<void(const SearchTree&, const RolloutRecord&)>;

SearchResult run_search(std::string_view problem, Policy& policy, const SearchConfig& config,
                        const RolloutObserver& observer = {});

// Single draft.
std::string zero_shot(std::string_view problem, Policy& policy);
// Draft, critique, rewrite; returns the rewrite.
std::string one_turn_self_refine(std::string_view problem, Policy& policy);

// Collapses whitespace runs to one space and trims the ends.
std::string normalize_whitespace(std::string_view text);

}  // namespace mctsr
