#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "mctsr/errors.hpp"
#include "mctsr/mock_policy.hpp"
#include "mctsr/search.hpp"
#include "mctsr/serialize.hpp"
#include "support.hpp"

using namespace mctsr;
using testing::ScriptedPolicy;

namespace {

MockScript three_step_script(int noise = 0, std::uint64_t seed = 0) {
  MockScript script;
  script.steps = {"s0", "s1", "target"};
  script.start_answer = "s0";
  script.target_answer = "target";
  script.noise_amplitude = noise;
  script.rng_seed = seed;
  return script;
}

void add_sampled(SearchTree& tree, NodeId id, int value) {
  const std::vector<RewardSample> r{{value, value}};
  tree.add_rewards(id, r);
  tree.propagate(id);
}

AnswerNode make_node(NodeId id, std::optional<NodeId> parent, int depth, double q) {
  AnswerNode n;
  n.id = id;
  n.answer_text = "n" + std::to_string(id);
  n.parent_id = parent;
  n.depth = depth;
  n.q_naive = n.q_eff = q;
  n.rewards = {{static_cast<int>(q), static_cast<int>(q)}};
  return n;
}

std::vector<std::vector<int>> reward_trace(const SearchTree& tree) {
  std::vector<std::vector<int>> out;
  for (const auto& [id, n] : tree.nodes()) {
    std::vector<int> raws;
    for (const auto& r : n.rewards) raws.push_back(r.raw);
    out.push_back(raws);
  }
  return out;
}

}  // namespace

TEST_SUITE("search") {

TEST_CASE("init_tree with a dummy root") {
  MockPolicy policy(three_step_script());
  SearchConfig config = testing::mock_search_config(3);
  const SearchTree tree = init_tree("p", policy, config);
  REQUIRE(tree.size() == 1);
  const auto& root = tree.node(tree.root_id());
  const auto& dummies = default_dummy_answers();
  CHECK(dummies.size() == 6);
  CHECK(std::find(dummies.begin(), dummies.end(), root.answer_text) != dummies.end());
  CHECK(root.visits() == config.reward_samples_per_visit);

  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    config.rng_seed = seed;
    seen.insert(init_tree("p", policy, config).node(0).answer_text);
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("init_tree with a naive root") {
  MockScript script;
  script.steps = {"s0", "s1", "s2", "target"};
  script.start_answer = "s0";
  script.target_answer = "target";
  MockPolicy policy(script);
  SearchConfig config;
  config.root_mode = RootMode::naive;
  const SearchTree tree = init_tree("p", policy, config);
  const auto& root = tree.node(0);
  CHECK(root.answer_text == "s0");
  REQUIRE(root.rewards.size() == 3);
  for (const auto& r : root.rewards) CHECK(r.adjusted == 70);
  CHECK(root.q_naive == doctest::Approx(70).epsilon(1e-12));
}

TEST_CASE("init_tree failures") {
  ScriptedPolicy failing_draft;
  failing_draft.fail_draft = true;
  SearchConfig naive;
  naive.root_mode = RootMode::naive;
  CHECK_THROWS_AS(init_tree("p", failing_draft, naive), InitializationError);

  ScriptedPolicy failing_grades;
  failing_grades.grades = {ScriptedPolicy::kFailGrade, ScriptedPolicy::kFailGrade,
                           ScriptedPolicy::kFailGrade};
  CHECK_THROWS_AS(init_tree("p", failing_grades, SearchConfig{}), InitializationError);

  ScriptedPolicy partial;
  partial.grades = {ScriptedPolicy::kFailGrade, 40, ScriptedPolicy::kFailGrade};
  Telemetry telemetry;
  SearchRng rng(1);
  const SearchTree tree = init_tree("p", partial, SearchConfig{}, rng, &telemetry);
  CHECK(tree.node(0).visits() == 1);
  CHECK_FALSE(telemetry.warnings.empty());
}

TEST_CASE("select_node examples") {
  SearchConfig config;
  SearchRng rng(1);
  SearchTree single;
  add_sampled(single, single.add_root("r"), 0);
  CHECK(select_node(single, config, rng) == 0);

  SearchTree tree;
  add_sampled(tree, tree.add_root("r"), 0);
  const NodeId low = tree.add_child(0, "low", "f");
  add_sampled(tree, low, 10);
  const NodeId high = tree.add_child(0, "high", "f");
  add_sampled(tree, high, 50);
  CHECK(candidate_set(tree, config.max_children) == std::vector<NodeId>{low, high});
  CHECK(select_node(tree, config, rng) == high);

  SearchTree tied;
  add_sampled(tied, tied.add_root("r"), 0);
  const NodeId first = tied.add_child(0, "a", "f");
  add_sampled(tied, first, 30);
  const NodeId second = tied.add_child(0, "b", "f");
  add_sampled(tied, second, 30);
  CHECK(select_node(tied, config, rng) == first);
}

TEST_CASE("importance selection samples from the candidates") {
  SearchTree tree;
  add_sampled(tree, tree.add_root("r"), 0);
  const NodeId a = tree.add_child(0, "a", "f");
  add_sampled(tree, a, 10);
  const NodeId b = tree.add_child(0, "b", "f");
  add_sampled(tree, b, 12);
  SearchConfig config;
  config.selection_mode = SelectionMode::importance;
  SearchRng rng(9);
  // Weights are UCT - min + 1: 1 for a and 3 for b.
  int picked_b = 0;
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    const NodeId s = select_node(tree, config, rng);
    REQUIRE((s == a || s == b));
    picked_b += s == b;
  }
  CHECK(static_cast<double>(picked_b) / draws == doctest::Approx(0.75).epsilon(0.05));
}

TEST_CASE("greedy selection without exploration picks a best-valued candidate") {
  std::mt19937_64 gen(41);
  SearchConfig config;
  config.exploration_c = 0.0;
  SearchRng rng(1);
  for (int i = 0; i < 200; ++i) {
    const SearchTree tree = testing::random_tree(gen, 40);
    const auto candidates = candidate_set(tree, config.max_children);
    double best = -1e9;
    for (NodeId id : candidates) best = std::max(best, tree.node(id).q_eff);
    REQUIRE(tree.node(select_node(tree, config, rng)).q_eff == best);
  }
}

TEST_CASE("expand follows the mock rewrite and is transactional") {
  MockPolicy policy(three_step_script());
  SearchConfig config = testing::mock_search_config(0);
  config.root_mode = RootMode::naive;
  SearchTree tree = init_tree("p", policy, config);
  const NodeId child = expand(tree, 0, "p", policy, config);
  CHECK(tree.node(child).answer_text == "s1");
  CHECK(tree.node(child).feedback_text == kMockCritique);
  CHECK(tree.node(child).depth == 1);
  CHECK_FALSE(tree.node(child).sampled());

  config.max_depth = 1;
  CHECK_THROWS_AS(expand(tree, child, "p", policy, config), PreconditionError);

  ScriptedPolicy broken;
  broken.fail_rewrite = true;
  const auto before = serialize_tree(tree, config);
  const NodeId next = tree.next_id();
  CHECK_THROWS_AS(expand(tree, 0, "p", broken, config), PolicyError);
  broken.fail_rewrite = false;
  broken.fail_critique = true;
  CHECK_THROWS_AS(expand(tree, 0, "p", broken, config), PolicyError);
  CHECK(serialize_tree(tree, config) == before);
  CHECK(tree.next_id() == next);
}

TEST_CASE("evaluate at the target") {
  MockPolicy policy(three_step_script());
  SearchConfig config = testing::mock_search_config(0);
  config.root_mode = RootMode::naive;
  SearchTree tree = init_tree("p", policy, config);
  const NodeId s1 = expand(tree, 0, "p", policy, config);
  evaluate(tree, s1, "p", policy, config);
  const NodeId target = expand(tree, s1, "p", policy, config);
  const auto parent_before = tree.node(s1).visits();
  const auto outcome = evaluate(tree, target, "p", policy, config);
  CHECK(outcome.samples == 3);
  CHECK(outcome.parent_samples == 1);
  const auto& node = tree.node(target);
  CHECK(node.rewards == std::vector<RewardSample>(3, RewardSample{100, 100}));
  CHECK(node.q_naive == 100.0);
  CHECK(tree.node(s1).visits() == parent_before + 1);
  CHECK_FALSE(tree.check_values());

  // Under the default threshold the same grades are suppressed.
  SearchConfig suppressing;
  suppressing.root_mode = RootMode::naive;
  SearchTree other = init_tree("p", policy, suppressing);
  const NodeId a = expand(other, 0, "p", policy, suppressing);
  evaluate(other, a, "p", policy, suppressing);
  const NodeId b = expand(other, a, "p", policy, suppressing);
  evaluate(other, b, "p", policy, suppressing);
  CHECK(other.node(b).rewards == std::vector<RewardSample>(3, RewardSample{100, 50}));
}

TEST_CASE("evaluate applies suppression before the naive value") {
  ScriptedPolicy policy;
  policy.grades = {0, 98, 40, 10};
  SearchConfig config;
  config.reward_samples_per_visit = 1;
  SearchTree tree = init_tree("p", policy, config);
  config.reward_samples_per_visit = 2;
  const NodeId child = expand(tree, 0, "p", policy, config);
  evaluate(tree, child, "p", policy, config);
  const auto& node = tree.node(child);
  CHECK(node.rewards == std::vector<RewardSample>{{98, 48}, {40, 40}});
  CHECK(node.q_naive == doctest::Approx(42).epsilon(1e-12));
  CHECK(tree.node(0).visits() == 2);
}

TEST_CASE("parent resampling adds exactly the configured count") {
  for (int count : {0, 1, 3}) {
    MockPolicy policy(three_step_script());
    SearchConfig config = testing::mock_search_config(5);
    config.parent_resample_count = count;
    SearchTree tree = init_tree("p", policy, config);
    SearchRng rng(count);
    for (int i = 0; i < 5; ++i) {
      const NodeId parent = select_node(tree, config, rng);
      const auto before = tree.node(parent).visits();
      const NodeId child = expand(tree, parent, "p", policy, config);
      evaluate(tree, child, "p", policy, config);
      REQUIRE(tree.node(parent).visits() == before + count);
    }
  }
}

TEST_CASE("evaluate failure modes") {
  ScriptedPolicy policy;
  SearchConfig config;
  SearchTree tree = init_tree("p", policy, config);
  const NodeId child = expand(tree, 0, "p", policy, config);
  const auto before = serialize_tree(tree, config);
  policy.grades = {ScriptedPolicy::kFailGrade, ScriptedPolicy::kFailGrade,
                   ScriptedPolicy::kFailGrade};
  CHECK_THROWS_AS(evaluate(tree, child, "p", policy, config), EvaluationError);
  CHECK(serialize_tree(tree, config) == before);

  policy.grades = {ScriptedPolicy::kFailGrade, 20, ScriptedPolicy::kFailGrade,
                   ScriptedPolicy::kFailGrade};
  const auto outcome = evaluate(tree, child, "p", policy, config);
  CHECK(outcome.samples == 1);
  CHECK(outcome.dropped == 2);
  CHECK(outcome.parent_dropped == 1);
  CHECK(tree.node(child).visits() == 1);
  CHECK(tree.node(0).visits() == 3);
}

TEST_CASE("check_termination") {
  SearchConfig config;
  SearchTree tree;
  add_sampled(tree, tree.add_root("r"), 0);
  Telemetry telemetry;
  CHECK_FALSE(check_termination(tree, telemetry, config));
  telemetry.rollouts_executed = config.max_rollouts;
  CHECK(check_termination(tree, telemetry, config));

  // A fixed point at the target repeats the parent's answer.
  MockScript script;
  script.start_answer = "s0";
  script.target_answer = "target";
  MockPolicy policy(script);
  SearchConfig repeat = testing::mock_search_config(0);
  repeat.root_mode = RootMode::naive;
  repeat.max_rollouts = 16;
  repeat.exploration_c = 0.0;
  repeat.early_stop_repeat = 2;
  const auto result = run_search("p", policy, repeat);
  CHECK(result.telemetry.stop_reason == "repeated_answers");
  CHECK(result.telemetry.rollouts_executed < 16);
  CHECK(check_termination(result.tree, result.telemetry, repeat));
  const auto& last = result.telemetry.rollouts.back();
  CHECK(result.tree.node(*last.created).answer_text == "target");
  CHECK(result.best_answer == "target");

  SearchConfig deep = testing::mock_search_config(0);
  deep.max_depth = 2;
  deep.max_rollouts = 50;
  deep.exploration_c = 0.0;
  MockPolicy walker(three_step_script());
  const auto bounded = run_search("p", walker, deep);
  CHECK(bounded.telemetry.stop_reason == "max_depth");
  for (const auto& [id, n] : bounded.tree.nodes()) CHECK(n.depth <= 2);
}

TEST_CASE("best_answer examples") {
  SearchConfig naive;
  naive.root_mode = RootMode::naive;
  SearchTree single;
  add_sampled(single, single.add_root("r"), 5);
  CHECK(best_answer(single, naive) == 0);
  CHECK(best_answer(single, SearchConfig{}) == 0);

  auto root = make_node(0, std::nullopt, 0, 80);
  auto child = make_node(1, 0, 1, 70);
  root.children_ids = {1};
  const SearchTree inflated = SearchTree::from_nodes({root, child}, 0, 2);
  CHECK(best_answer(inflated, SearchConfig{}) == 1);
  CHECK(best_answer(inflated, naive) == 0);

  auto r = make_node(0, std::nullopt, 0, 0);
  auto d1 = make_node(1, 0, 1, 60);
  auto d2 = make_node(2, 1, 2, 60);
  auto other = make_node(3, 0, 1, 60);
  r.children_ids = {1, 3};
  d1.children_ids = {2};
  const SearchTree tied = SearchTree::from_nodes({r, d1, d2, other}, 0, 4);
  CHECK(best_answer(tied, SearchConfig{}) == 2);
}

TEST_CASE("run_search grows one node per rollout") {
  MockPolicy policy(three_step_script());
  const auto result = run_search("p", policy, testing::mock_search_config(1));
  CHECK(result.tree.size() == 9);
  CHECK(result.telemetry.rollouts_executed == 8);
  CHECK(result.telemetry.stop_reason == "rollout_budget");
  CHECK_FALSE(result.telemetry.degraded);
  CHECK(result.tree.total_visits() == result.telemetry.calls.grade);
  CHECK(result.telemetry.calls.rewrite == 8);
}

TEST_CASE("run_search reaches a target two rewrites away") {
  // Selection trace and winner from an independent simulation of the loop.
  MockPolicy policy(three_step_script());
  std::vector<NodeId> selected;
  const auto observe = [&](const SearchTree&, const RolloutRecord& r) { selected.push_back(r.selected); };
  const auto result = run_search("p", policy, testing::mock_search_config(1), observe);
  CHECK(selected == std::vector<NodeId>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(result.best_node_id == 8);
  CHECK(result.best_answer == "target");
}

TEST_CASE("default suppression holds a perfect target below its parent") {
  MockPolicy policy(three_step_script());
  std::vector<NodeId> selected;
  const auto observe = [&](const SearchTree&, const RolloutRecord& r) { selected.push_back(r.selected); };
  const auto result = run_search("p", policy, SearchConfig{}, observe);
  CHECK(selected == std::vector<NodeId>{0, 1, 2, 1, 4, 1, 6, 1});
  CHECK(result.best_answer == "s1");
}

TEST_CASE("zero rollouts return the root") {
  MockPolicy policy(three_step_script());
  SearchConfig config = testing::mock_search_config(1);
  config.max_rollouts = 0;
  config.root_mode = RootMode::naive;
  const auto result = run_search("p", policy, config);
  CHECK(result.best_answer == "s0");
  CHECK(result.telemetry.rollouts.empty());
  CHECK(result.tree.size() == 1);
}

TEST_CASE("failed rollouts are skipped and the run degrades gracefully") {
  ScriptedPolicy policy;
  policy.grades = {10, 10, 10};
  for (int i = 0; i < 12; ++i) policy.grades.push_back(ScriptedPolicy::kFailGrade);
  SearchConfig config;
  config.max_rollouts = 2;
  const auto result = run_search("p", policy, config);
  CHECK(result.telemetry.degraded);
  CHECK(result.tree.size() == 1);
  CHECK(result.best_node_id == 0);
  CHECK(result.telemetry.rollouts.size() == 2);
  for (const auto& r : result.telemetry.rollouts) {
    CHECK(r.failed);
    CHECK(r.attempts == 2);
  }
  CHECK(result.tree.next_id() == 5);
}

TEST_CASE("invariants hold after every rollout under failures") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    MockPolicy mock(testing::make_script(static_cast<int>(seed), 1 + seed % 3, 10, seed));
    testing::FlakyPolicy flaky(mock, 0.3, seed, 0.1);
    SearchConfig config = testing::mock_search_config(seed);
    config.max_rollouts = 1 + static_cast<int>(seed % 16);
    config.selection_mode = seed % 2 ? SelectionMode::importance : SelectionMode::greedy;
    int successes = 0;
    const auto observe = [&](const SearchTree& tree, const RolloutRecord& r) {
      successes += r.created.has_value();
      REQUIRE(std::find(r.candidates.begin(), r.candidates.end(), r.selected) != r.candidates.end());
      REQUIRE(static_cast<int>(tree.size()) == 1 + successes);
      REQUIRE_FALSE(tree.check_links());
      REQUIRE_FALSE(tree.check_values());
    };
    SearchResult result;
    try {
      result = run_search("p", flaky, config, observe);
    } catch (const InitializationError&) {
      continue;
    }
    CHECK(static_cast<int>(result.tree.size()) <= 1 + config.max_rollouts);
    CHECK(result.tree.total_visits() == result.telemetry.calls.grade);
  }
}

TEST_CASE("same seed replays byte for byte; other seeds differ") {
  const auto script = testing::make_script(1, 3, 10, 77);
  auto run = [&](std::uint64_t seed, std::uint64_t noise_seed) {
    auto s = script;
    s.rng_seed = noise_seed;
    MockPolicy policy(s);
    SearchConfig config = testing::mock_search_config(seed);
    return run_search("p", policy, config);
  };
  const auto a = run(5, 77), b = run(5, 77);
  CHECK(serialize_tree(a.tree, testing::mock_search_config(5)) ==
        serialize_tree(b.tree, testing::mock_search_config(5)));
  const auto c = run(6, 78);
  CHECK(reward_trace(a.tree) != reward_trace(c.tree));
}

TEST_CASE("baselines with the mock") {
  MockPolicy policy(three_step_script());
  CHECK(zero_shot("p", policy) == "s0");
  CHECK(one_turn_self_refine("p", policy) == "s1");
}

TEST_CASE("config validation and JSON") {
  SearchConfig config;
  CHECK_NOTHROW(config.validate());
  config.max_children = 0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = SearchConfig{};
  config.full_score_threshold = 101;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = SearchConfig{};
  config.dummy_answers.clear();
  CHECK_THROWS_AS(config.validate(), ConfigError);

  CHECK(parse_early_stop("off") == std::nullopt);
  CHECK(parse_early_stop("repeat(3)") == 3);
  CHECK(parse_early_stop("2") == 2);
  CHECK_THROWS_AS(parse_early_stop("sometimes"), ConfigError);

  config = SearchConfig{};
  config.early_stop_repeat = 4;
  config.selection_mode = SelectionMode::importance;
  nlohmann::json j = config;
  const auto back = j.get<SearchConfig>();
  CHECK(back.early_stop_repeat == 4);
  CHECK(back.selection_mode == SelectionMode::importance);
  j["unknown_field"] = true;
  CHECK_THROWS(j.get<SearchConfig>());
}

}  // TEST_SUITE
