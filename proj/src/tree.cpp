#include "mctsr/tree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mctsr/errors.hpp"

namespace mctsr {

int suppress_reward(int raw, int threshold, int constant) {
  if (raw < kMinReward || raw > kMaxReward) {
    throw std::domain_error("reward " + std::to_string(raw) + " outside [-100, 100]");
  }
  if (raw <= threshold) return raw;
  return std::clamp(raw - constant, kMinReward, kMaxReward);
}

RewardSample make_reward_sample(int raw, int threshold, int constant) {
  return RewardSample{raw, suppress_reward(raw, threshold, constant)};
}

double compute_q_naive(std::span<const int> rewards) {
  if (rewards.empty()) {
    throw PreconditionError("Q requested for a node without reward samples");
  }
  // Integer sums are exact; the only rounding happens in the final divisions.
  const auto sum = std::accumulate(rewards.begin(), rewards.end(), std::int64_t{0});
  const int lowest = *std::min_element(rewards.begin(), rewards.end());
  const double mean = static_cast<double>(sum) / static_cast<double>(rewards.size());
  return 0.5 * (static_cast<double>(lowest) + mean);
}

double compute_q_naive(std::span<const RewardSample> rewards) {
  std::vector<int> adjusted;
  adjusted.reserve(rewards.size());
  for (const auto& r : rewards) adjusted.push_back(r.adjusted);
  return compute_q_naive(std::span<const int>(adjusted));
}

double compute_q_eff(double q_naive, std::span<const double> child_q_effs) {
  if (child_q_effs.empty()) return q_naive;
  return 0.5 * (q_naive + *std::max_element(child_q_effs.begin(), child_q_effs.end()));
}

double uct_value(double q, std::int64_t n_parent, std::int64_t n_self, double c,
                 double eps) {
  const double log_term = std::log(static_cast<double>(n_parent) + 1.0);
  if (log_term == 0.0 || c == 0.0) return q;
  return q + c * std::sqrt(log_term / (static_cast<double>(n_self) + eps));
}

NodeId SearchTree::add_root(std::string answer_text) {
  if (root_) throw PreconditionError("tree already has a root");
  AnswerNode node;
  node.id = next_id_++;
  node.answer_text = std::move(answer_text);
  root_ = node.id;
  nodes_.emplace(node.id, std::move(node));
  return *root_;
}

NodeId SearchTree::add_child(NodeId parent, std::string answer_text,
                             std::string feedback_text) {
  AnswerNode& p = mutable_node(parent);
  AnswerNode node;
  node.id = next_id_++;
  node.answer_text = std::move(answer_text);
  node.feedback_text = std::move(feedback_text);
  node.parent_id = parent;
  node.depth = p.depth + 1;
  p.children_ids.push_back(node.id);
  const NodeId id = node.id;
  nodes_.emplace(id, std::move(node));
  return id;
}

void SearchTree::discard_leaf(NodeId id) {
  const AnswerNode& n = node(id);
  if (!n.parent_id) throw PreconditionError("cannot discard the root");
  if (!n.is_leaf() || n.sampled()) {
    throw PreconditionError("only unsampled leaves can be discarded");
  }
  auto& siblings = mutable_node(*n.parent_id).children_ids;
  siblings.erase(std::remove(siblings.begin(), siblings.end(), id), siblings.end());
  nodes_.erase(id);
}

void SearchTree::add_rewards(NodeId id, std::span<const RewardSample> samples) {
  AnswerNode& n = mutable_node(id);
  n.rewards.insert(n.rewards.end(), samples.begin(), samples.end());
  if (!n.sampled()) return;
  n.q_naive = compute_q_naive(std::span<const RewardSample>(n.rewards));
  n.q_eff = recompute_q_eff(n);
}

std::vector<NodeId> SearchTree::propagate(NodeId start) {
  std::vector<NodeId> updated;
  auto parent = node(start).parent_id;
  while (parent) {
    AnswerNode& p = mutable_node(*parent);
    if (!p.sampled()) break;
    const double next = recompute_q_eff(p);
    if (std::abs(next - p.q_eff) <= kQTolerance) {
      p.q_eff = next;
      break;
    }
    p.q_eff = next;
    updated.push_back(p.id);
    parent = p.parent_id;
  }
  return updated;
}

const AnswerNode& SearchTree::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("unknown node id " + std::to_string(id));
  return it->second;
}

AnswerNode& SearchTree::mutable_node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("unknown node id " + std::to_string(id));
  return it->second;
}

NodeId SearchTree::root_id() const {
  if (!root_) throw std::out_of_range("tree has no root");
  return *root_;
}

std::vector<double> SearchTree::child_q_effs(NodeId id) const {
  std::vector<double> out;
  for (NodeId c : node(id).children_ids) {
    const AnswerNode& child = node(c);
    if (child.sampled()) out.push_back(child.q_eff);
  }
  return out;
}

double SearchTree::recompute_q_eff(const AnswerNode& n) const {
  const auto children = child_q_effs(n.id);
  return compute_q_eff(n.q_naive, children);
}

std::int64_t SearchTree::total_visits() const {
  std::int64_t total = 0;
  for (const auto& [id, n] : nodes_) total += n.visits();
  return total;
}

std::optional<std::string> SearchTree::check_links() const {
  if (nodes_.empty()) {
    if (root_) return "root id set on an empty tree";
    return std::nullopt;
  }
  if (!root_ || !nodes_.count(*root_)) return "root id does not resolve";
  int roots = 0;
  for (const auto& [id, n] : nodes_) {
    if (n.id != id) return "node stored under id " + std::to_string(id) + " claims id " + std::to_string(n.id);
    if (id >= next_id_) return "node id " + std::to_string(id) + " not below next_id";
    if (!n.parent_id) {
      ++roots;
      if (id != *root_) return "parentless node " + std::to_string(id) + " is not the root";
      if (n.depth != 0) return "root depth is not zero";
      continue;
    }
    auto pit = nodes_.find(*n.parent_id);
    if (pit == nodes_.end()) return "parent of node " + std::to_string(id) + " does not resolve";
    const auto& siblings = pit->second.children_ids;
    if (std::count(siblings.begin(), siblings.end(), id) != 1) {
      return "node " + std::to_string(id) + " not listed exactly once by its parent";
    }
    if (n.depth != pit->second.depth + 1) return "depth mismatch at node " + std::to_string(id);
    if (*n.parent_id >= id) return "child " + std::to_string(id) + " older than its parent";
  }
  if (roots != 1) return "expected exactly one root, found " + std::to_string(roots);
  for (const auto& [id, n] : nodes_) {
    for (NodeId c : n.children_ids) {
      auto cit = nodes_.find(c);
      if (cit == nodes_.end()) return "child " + std::to_string(c) + " does not resolve";
      if (cit->second.parent_id != id) return "child " + std::to_string(c) + " points elsewhere";
    }
  }
  // Every node reaches the root, so the parent graph has no cycles.
  std::set<NodeId> reached;
  std::deque<NodeId> frontier{*root_};
  while (!frontier.empty()) {
    const NodeId id = frontier.front();
    frontier.pop_front();
    if (!reached.insert(id).second) return "node " + std::to_string(id) + " reached twice";
    for (NodeId c : nodes_.at(id).children_ids) frontier.push_back(c);
  }
  if (reached.size() != nodes_.size()) return "some nodes are unreachable from the root";
  return std::nullopt;
}

std::optional<std::string> SearchTree::check_values(double tolerance) const {
  for (const auto& [id, n] : nodes_) {
    if (!n.sampled()) continue;
    for (const auto& r : n.rewards) {
      if (r.raw < kMinReward || r.raw > kMaxReward || r.adjusted < kMinReward ||
          r.adjusted > kMaxReward) {
        return "reward out of range at node " + std::to_string(id);
      }
    }
    const double naive = compute_q_naive(std::span<const RewardSample>(n.rewards));
    if (std::abs(naive - n.q_naive) > tolerance) {
      return "q_naive stale at node " + std::to_string(id);
    }
    const double eff = recompute_q_eff(n);
    if (std::abs(eff - n.q_eff) > tolerance) {
      return "q_eff violates the backup rule at node " + std::to_string(id);
    }
  }
  return std::nullopt;
}

SearchTree SearchTree::from_nodes(std::vector<AnswerNode> nodes, NodeId root_id,
                                  NodeId next_id) {
  SearchTree tree;
  for (auto& n : nodes) {
    const NodeId id = n.id;
    if (!tree.nodes_.emplace(id, std::move(n)).second) {
      throw PreconditionError("duplicate node id " + std::to_string(id));
    }
  }
  tree.root_ = root_id;
  tree.next_id_ = next_id;
  if (auto problem = tree.check_links()) throw PreconditionError("invalid tree: " + *problem);
  return tree;
}

bool is_fully_expanded(const AnswerNode& node, const SearchTree& tree, int max_children) {
  if (static_cast<int>(node.children_ids.size()) < max_children) return false;
  for (NodeId c : node.children_ids) {
    const AnswerNode& child = tree.node(c);
    if (child.sampled() && child.q_eff > node.q_eff) return true;
  }
  return false;
}

std::vector<NodeId> candidate_set(const SearchTree& tree, int max_children) {
  std::vector<NodeId> out;
  if (tree.empty()) return out;
  std::vector<NodeId> level{tree.root_id()};
  while (!level.empty()) {
    std::sort(level.begin(), level.end());
    std::vector<NodeId> next;
    for (NodeId id : level) {
      const AnswerNode& n = tree.node(id);
      if (n.is_leaf() || !is_fully_expanded(n, tree, max_children)) out.push_back(id);
      next.insert(next.end(), n.children_ids.begin(), n.children_ids.end());
    }
    level = std::move(next);
  }
  return out;
}

}  // namespace mctsr
