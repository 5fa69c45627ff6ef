#include "mctsr/search.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "mctsr/errors.hpp"

namespace mctsr {

namespace {

template <typename F>
auto counted_call(std::atomic<std::int64_t>& ok, std::atomic<std::int64_t>& failed, F&& f) {
  try {
    auto out = f();
    ++ok;
    return out;
  } catch (...) {
    ++failed;
    throw;
  }
}

struct SampleBatch {
  std::vector<RewardSample> samples;
  int dropped = 0;
  std::string last_error;
};

// Grades are issued one after another so a seeded policy sees a fixed call
// order. Failed or out-of-range grades are dropped.
SampleBatch draw_samples(std::string_view problem, std::string_view answer, int count,
                         Policy& policy, const SearchConfig& config) {
  SampleBatch batch;
  for (int i = 0; i < count; ++i) {
    try {
      const int raw = policy.grade(problem, answer);
      batch.samples.push_back(
          make_reward_sample(raw, config.full_score_threshold, config.suppression_constant));
    } catch (const PolicyError& e) {
      ++batch.dropped;
      batch.last_error = e.what();
    } catch (const std::domain_error& e) {
      ++batch.dropped;
      batch.last_error = e.what();
    }
  }
  return batch;
}

}  // namespace

void to_json(nlohmann::json& j, const PolicyCallCounts& c) {
  j = nlohmann::json{{"draft", c.draft},   {"critique", c.critique}, {"rewrite", c.rewrite},
                     {"grade", c.grade},   {"failures", c.failures}, {"total", c.total()}};
}

std::string CountingPolicy::draft(std::string_view problem) {
  return counted_call(draft_, failures_, [&] { return inner_.draft(problem); });
}

std::string CountingPolicy::critique(std::string_view problem, std::string_view answer) {
  return counted_call(critique_, failures_, [&] { return inner_.critique(problem, answer); });
}

std::string CountingPolicy::rewrite(std::string_view problem, std::string_view answer,
                                    std::string_view feedback) {
  return counted_call(rewrite_, failures_,
                      [&] { return inner_.rewrite(problem, answer, feedback); });
}

int CountingPolicy::grade(std::string_view problem, std::string_view answer) {
  return counted_call(grade_, failures_, [&] {
    const int raw = inner_.grade(problem, answer);
    if (raw < kMinReward || raw > kMaxReward) {
      throw PolicyError("policy returned out-of-range grade " + std::to_string(raw));
    }
    return raw;
  });
}

PolicyCallCounts CountingPolicy::counts() const {
  return {draft_.load(), critique_.load(), rewrite_.load(), grade_.load(), failures_.load()};
}

int Telemetry::successful_rollouts() const {
  return static_cast<int>(std::count_if(rollouts.begin(), rollouts.end(),
                                        [](const RolloutRecord& r) { return !r.failed; }));
}

void to_json(nlohmann::json& j, const RolloutRecord& r) {
  j = nlohmann::json{{"index", r.index},
                     {"selected", r.selected},
                     {"candidates", r.candidates},
                     {"created", r.created ? nlohmann::json(*r.created) : nlohmann::json(nullptr)},
                     {"reward_samples", r.reward_samples},
                     {"parent_samples", r.parent_samples},
                     {"dropped_samples", r.dropped_samples},
                     {"best_q_eff", r.best_q_eff},
                     {"attempts", r.attempts},
                     {"failed", r.failed},
                     {"error", r.error}};
}

void to_json(nlohmann::json& j, const Telemetry& t) {
  j = nlohmann::json{{"rollouts_executed", t.rollouts_executed},
                     {"successful_rollouts", t.successful_rollouts()},
                     {"rollouts", t.rollouts},
                     {"calls", t.calls},
                     {"dropped_grade_samples", t.dropped_grade_samples},
                     {"degraded", t.degraded},
                     {"stop_reason", t.stop_reason},
                     {"warnings", t.warnings}};
}

SearchTree init_tree(std::string_view problem, Policy& policy, const SearchConfig& config,
                     SearchRng& rng, Telemetry* telemetry) {
  config.validate();
  SearchTree tree;
  std::string answer;
  if (config.root_mode == RootMode::dummy) {
    std::uniform_int_distribution<std::size_t> pick(0, config.dummy_answers.size() - 1);
    answer = config.dummy_answers[pick(rng)];
  } else {
    try {
      answer = policy.draft(problem);
    } catch (const PolicyError& e) {
      throw InitializationError(std::string("root draft failed: ") + e.what());
    }
  }
  const NodeId root = tree.add_root(std::move(answer));
  SampleBatch batch = draw_samples(problem, tree.node(root).answer_text,
                                   config.reward_samples_per_visit, policy, config);
  if (batch.samples.empty()) {
    throw InitializationError("every root grade failed: " + batch.last_error);
  }
  tree.add_rewards(root, batch.samples);
  if (telemetry) {
    telemetry->dropped_grade_samples += batch.dropped;
    if (batch.dropped) {
      telemetry->warnings.push_back("root kept " + std::to_string(batch.samples.size()) +
                                    " of " + std::to_string(config.reward_samples_per_visit) +
                                    " grades: " + batch.last_error);
    }
  }
  return tree;
}

SearchTree init_tree(std::string_view problem, Policy& policy, const SearchConfig& config) {
  SearchRng rng(config.rng_seed);
  return init_tree(problem, policy, config, rng);
}

double node_uct(const SearchTree& tree, NodeId id, const SearchConfig& config) {
  const AnswerNode& n = tree.node(id);
  const std::int64_t parent_visits = n.parent_id ? tree.node(*n.parent_id).visits() : 0;
  return uct_value(n.q_eff, parent_visits, n.visits(), config.exploration_c, config.epsilon);
}

NodeId select_node(const SearchTree& tree, const SearchConfig& config, SearchRng& rng) {
  const auto candidates = candidate_set(tree, config.max_children);
  if (candidates.empty()) throw SelectionError("candidate set is empty");

  std::vector<double> ucts;
  ucts.reserve(candidates.size());
  for (NodeId id : candidates) ucts.push_back(node_uct(tree, id, config));

  if (config.selection_mode == SelectionMode::greedy) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      if (ucts[i] > ucts[best] || (ucts[i] == ucts[best] && candidates[i] < candidates[best])) {
        best = i;
      }
    }
    return candidates[best];
  }

  const double lowest = *std::min_element(ucts.begin(), ucts.end());
  std::vector<double> weights;
  weights.reserve(ucts.size());
  for (double u : ucts) weights.push_back(u - lowest + 1.0);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  return candidates[pick(rng)];
}

NodeId expand(SearchTree& tree, NodeId node_id, std::string_view problem, Policy& policy,
              const SearchConfig& config) {
  const AnswerNode& parent = tree.node(node_id);
  if (config.max_depth && parent.depth >= *config.max_depth) {
    throw PreconditionError("node " + std::to_string(node_id) + " is already at max_depth");
  }
  const std::string answer = parent.answer_text;
  std::string feedback = policy.critique(problem, answer);
  std::string refined = policy.rewrite(problem, answer, feedback);
  return tree.add_child(node_id, std::move(refined), std::move(feedback));
}

EvaluationOutcome evaluate(SearchTree& tree, NodeId node_id, std::string_view problem,
                           Policy& policy, const SearchConfig& config) {
  const AnswerNode& target = tree.node(node_id);
  SampleBatch own = draw_samples(problem, target.answer_text, config.reward_samples_per_visit,
                                 policy, config);
  if (own.samples.empty()) {
    throw EvaluationError("every grade of node " + std::to_string(node_id) +
                          " failed: " + own.last_error);
  }
  EvaluationOutcome outcome;
  outcome.samples = static_cast<int>(own.samples.size());
  outcome.dropped = own.dropped;
  tree.add_rewards(node_id, own.samples);

  // Propagation starts above the deepest node whose q_eff is already current.
  NodeId settled = node_id;
  if (const auto parent = tree.node(node_id).parent_id; parent && config.parent_resample_count > 0) {
    SampleBatch extra = draw_samples(problem, tree.node(*parent).answer_text,
                                     config.parent_resample_count, policy, config);
    outcome.parent_samples = static_cast<int>(extra.samples.size());
    outcome.parent_dropped = extra.dropped;
    if (!extra.samples.empty()) {
      tree.add_rewards(*parent, extra.samples);
      settled = *parent;
    }
  }
  tree.propagate(settled);
  return outcome;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

namespace {

std::string termination_reason(const SearchTree& tree, const Telemetry& telemetry,
                               const SearchConfig& config) {
  if (telemetry.rollouts_executed >= config.max_rollouts) return "rollout_budget";
  if (config.max_depth) {
    for (const auto& [id, n] : tree.nodes()) {
      if (n.depth >= *config.max_depth) return "max_depth";
    }
  }
  if (config.early_stop_repeat) {
    const int k = *config.early_stop_repeat;
    std::vector<NodeId> recent;
    for (auto it = telemetry.rollouts.rbegin();
         it != telemetry.rollouts.rend() && static_cast<int>(recent.size()) < k; ++it) {
      if (it->created && tree.contains(*it->created)) recent.push_back(*it->created);
    }
    if (static_cast<int>(recent.size()) == k) {
      const bool repeated = std::all_of(recent.begin(), recent.end(), [&](NodeId id) {
        const AnswerNode& child = tree.node(id);
        return normalize_whitespace(child.answer_text) ==
               normalize_whitespace(tree.node(*child.parent_id).answer_text);
      });
      if (repeated) return "repeated_answers";
    }
  }
  return {};
}

}  // namespace

bool check_termination(const SearchTree& tree, const Telemetry& telemetry,
                       const SearchConfig& config) {
  return !termination_reason(tree, telemetry, config).empty();
}

NodeId best_answer(const SearchTree& tree, const SearchConfig& config) {
  const NodeId root = tree.root_id();
  const bool skip_root = config.root_mode == RootMode::dummy && tree.size() > 1;
  std::optional<NodeId> best;
  for (const auto& [id, n] : tree.nodes()) {
    if ((skip_root && id == root) || !n.sampled()) continue;
    if (!best) {
      best = id;
      continue;
    }
    const AnswerNode& b = tree.node(*best);
    // Ids iterate in ascending order, so equal keys keep the earlier node.
    if (n.q_eff > b.q_eff || (n.q_eff == b.q_eff && n.depth > b.depth)) best = id;
  }
  return best.value_or(root);
}

SearchResult run_search(std::string_view problem, Policy& policy, const SearchConfig& config,
                        const RolloutObserver& observer) {
  config.validate();
  CountingPolicy counted(policy);
  SearchRng rng(config.rng_seed);
  SearchResult result;
  Telemetry& telemetry = result.telemetry;
  SearchTree& tree = result.tree;
  try {
    tree = init_tree(problem, counted, config, rng, &telemetry);
  } catch (const PolicyError& e) {
    throw InitializationError(e.what());
  }

  while (true) {
    if (std::string reason = termination_reason(tree, telemetry, config); !reason.empty()) {
      telemetry.stop_reason = std::move(reason);
      break;
    }
    RolloutRecord record;
    record.index = telemetry.rollouts_executed;
    // One retry per rollout before it is skipped.
    for (int attempt = 1; attempt <= 2 && !record.created; ++attempt) {
      record.attempts = attempt;
      record.candidates = candidate_set(tree, config.max_children);
      record.selected = select_node(tree, config, rng);
      try {
        const NodeId child = expand(tree, record.selected, problem, counted, config);
        try {
          const EvaluationOutcome outcome = evaluate(tree, child, problem, counted, config);
          record.reward_samples = outcome.samples;
          record.parent_samples = outcome.parent_samples;
          record.dropped_samples += outcome.dropped + outcome.parent_dropped;
        } catch (...) {
          tree.discard_leaf(child);
          throw;
        }
        record.created = child;
        record.error.clear();
      } catch (const PolicyError& e) {
        record.error = e.what();
      } catch (const EvaluationError& e) {
        record.error = e.what();
        record.dropped_samples += config.reward_samples_per_visit;
      }
    }
    record.failed = !record.created;
    telemetry.dropped_grade_samples += record.dropped_samples;
    if (record.failed) {
      telemetry.warnings.push_back("rollout " + std::to_string(record.index) +
                                   " skipped: " + record.error);
    } else if (record.dropped_samples > 0) {
      telemetry.warnings.push_back("rollout " + std::to_string(record.index) + " dropped " +
                                   std::to_string(record.dropped_samples) + " grade sample(s)");
    }
    record.best_q_eff = tree.node(best_answer(tree, config)).q_eff;
    ++telemetry.rollouts_executed;
    telemetry.rollouts.push_back(record);
    if (observer) observer(tree, telemetry.rollouts.back());
  }

  telemetry.degraded = telemetry.rollouts_executed > 0 && telemetry.successful_rollouts() == 0;
  result.best_node_id = telemetry.degraded ? tree.root_id() : best_answer(tree, config);
  result.best_answer = tree.node(result.best_node_id).answer_text;
  telemetry.calls = counted.counts();
  return result;
}

std::string zero_shot(std::string_view problem, Policy& policy) { return policy.draft(problem); }

std::string one_turn_self_refine(std::string_view problem, Policy& policy) {
  const std::string answer = policy.draft(problem);
  const std::string feedback = policy.critique(problem, answer);
  return policy.rewrite(problem, answer, feedback);
}

}  // namespace mctsr
