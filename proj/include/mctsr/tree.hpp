#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mctsr {

using NodeId = std::int64_t;

// Tolerance used to decide whether a recomputed Q value actually changed.
inline constexpr double kQTolerance = 1e-12;

inline constexpr int kMinReward = -100;
inline constexpr int kMaxReward = 100;

struct RewardSample {
  int raw = 0;
  int adjusted = 0;

  friend bool operator==(const RewardSample&, const RewardSample&) = default;
};

// Full-score suppression: raw > threshold is lowered by `constant` and
// clamped to the reward range. Throws std::domain_error for raw outside
// [-100, 100].
int suppress_reward(int raw, int threshold, int constant);

RewardSample make_reward_sample(int raw, int threshold, int constant);

// Average of the minimum and the mean of the samples. Throws
// PreconditionError on an empty list.
double compute_q_naive(std::span<const int> rewards);
double compute_q_naive(std::span<const RewardSample> rewards);

// Mean of the node's own value and its best child; the node's own value when
// it has no children.
double compute_q_eff(double q_naive, std::span<const double> child_q_effs);

// q + c * sqrt(ln(n_parent + 1) / (n_self + eps)). The exploration term is
// zero whenever ln(n_parent + 1) is zero, so a root scores its Q.
double uct_value(double q, std::int64_t n_parent, std::int64_t n_self, double c,
                 double eps);

struct AnswerNode {
  NodeId id = 0;
  std::string answer_text;
  // Critique that produced this answer. Empty for the root.
  std::string feedback_text;
  std::vector<RewardSample> rewards;
  double q_naive = 0.0;
  double q_eff = 0.0;
  std::optional<NodeId> parent_id;
  std::vector<NodeId> children_ids;
  int depth = 0;

  // N(a): one reward sample per visit.
  std::int64_t visits() const { return static_cast<std::int64_t>(rewards.size()); }
  bool sampled() const { return !rewards.empty(); }
  bool is_leaf() const { return children_ids.empty(); }
};

// Id-indexed node store. Ids are handed out in creation order and never
// reused, including ids of discarded nodes. Nodes without reward samples are
// ignored when a parent takes the max over its children.
class SearchTree {
 public:
  SearchTree() = default;

  // Creates the single root. Throws PreconditionError if one exists.
  NodeId add_root(std::string answer_text);
  // Appends an unsampled child. Throws std::out_of_range for an unknown parent.
  NodeId add_child(NodeId parent, std::string answer_text, std::string feedback_text);
  // Removes a childless, unsampled, non-root node. Used to roll back a
  // rollout whose evaluation failed.
  void discard_leaf(NodeId id);

  // Appends samples, recomputes q_naive, and recomputes q_eff of this node
  // from its children. Ancestors are left alone; call propagate() next.
  void add_rewards(NodeId id, std::span<const RewardSample> samples);

  // Recomputes q_eff of each ancestor of `start`, walking toward the root and
  // stopping at the first ancestor whose value did not change. Returns the
  // ids whose q_eff changed, nearest first.
  std::vector<NodeId> propagate(NodeId start);

  const AnswerNode& node(NodeId id) const;
  bool contains(NodeId id) const { return nodes_.count(id) != 0; }
  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  NodeId root_id() const;
  NodeId next_id() const { return next_id_; }

  // Nodes in ascending id order.
  const std::map<NodeId, AnswerNode>& nodes() const { return nodes_; }

  std::vector<double> child_q_effs(NodeId id) const;
  // Sum of N(a) over the tree.
  std::int64_t total_visits() const;

  // Empty when the tree satisfies every structural invariant (single root,
  // mutual links, depths, no cycles, monotone ids); otherwise a description
  // of the first violation.
  std::optional<std::string> check_links() const;
  // Same for the value invariants: q_naive matches the samples and q_eff
  // matches its children within `tolerance`.
  std::optional<std::string> check_values(double tolerance = kQTolerance) const;

  // Reassembles a tree from already computed nodes, validating links. Used by
  // deserialization.
  static SearchTree from_nodes(std::vector<AnswerNode> nodes, NodeId root_id,
                               NodeId next_id);

 private:
  AnswerNode& mutable_node(NodeId id);
  double recompute_q_eff(const AnswerNode& node) const;

  std::map<NodeId, AnswerNode> nodes_;
  std::optional<NodeId> root_;
  NodeId next_id_ = 0;
};

// A node is fully expanded when it has at least `max_children` children and
// at least one of them has a strictly higher q_eff.
bool is_fully_expanded(const AnswerNode& node, const SearchTree& tree, int max_children);

// Leaves plus nodes that are not fully expanded, ordered by (depth, id).
// Computed by a level-order walk from the root.
std::vector<NodeId> candidate_set(const SearchTree& tree, int max_children);

}  // namespace mctsr
