#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <map>

#include "json.hpp"
#include "mctsr/errors.hpp"

namespace mctsr::testing {

std::string ScriptedPolicy::draft(std::string_view) {
  if (fail_draft) throw PolicyError("scripted draft failure");
  return draft_text;
}

std::string ScriptedPolicy::critique(std::string_view, std::string_view) {
  if (fail_critique) throw PolicyError("scripted critique failure");
  return critique_text;
}

std::string ScriptedPolicy::rewrite(std::string_view, std::string_view answer, std::string_view) {
  if (fail_rewrite) throw PolicyError("scripted rewrite failure");
  std::lock_guard lock(mutex_);
  if (rewrites.empty()) return std::string(answer) + "'";
  std::string next = rewrites.front();
  rewrites.pop_front();
  return next;
}

int ScriptedPolicy::grade(std::string_view, std::string_view) {
  std::lock_guard lock(mutex_);
  if (grades.empty()) return default_grade;
  const int g = grades.front();
  grades.pop_front();
  if (g == kFailGrade) throw PolicyError("scripted grade failure");
  return g;
}

bool FlakyPolicy::roll(double rate) {
  std::lock_guard lock(mutex_);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < rate;
}

std::string FlakyPolicy::rewrite(std::string_view problem, std::string_view answer,
                                 std::string_view feedback) {
  if (roll(rewrite_fail_rate_)) throw PolicyError("flaky rewrite");
  return inner_.rewrite(problem, answer, feedback);
}

int FlakyPolicy::grade(std::string_view problem, std::string_view answer) {
  if (roll(fail_rate_)) throw PolicyError("flaky grade");
  return inner_.grade(problem, answer);
}

StubServer::StubServer(Handler handler) : handler_(std::move(handler)) {
  server_.Post(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    int index = 0;
    {
      std::lock_guard lock(mutex_);
      index = static_cast<int>(requests_.size());
      requests_.push_back({req.path, req.body, req.get_header_value("Authorization")});
    }
    handler_(index, req, res);
  });
  port_ = server_.bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { server_.listen_after_bind(); });
  server_.wait_until_ready();
}

StubServer::~StubServer() {
  server_.stop();
  if (thread_.joinable()) thread_.join();
}

std::string StubServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

std::vector<RecordedRequest> StubServer::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

int StubServer::request_count() const {
  std::lock_guard lock(mutex_);
  return static_cast<int>(requests_.size());
}

std::string completion_body(const std::string& content) {
  nlohmann::json body = {
      {"id", "stub"},
      {"object", "chat.completion"},
      {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}};
  return body.dump();
}

SearchTree random_tree(std::mt19937_64& rng, int max_nodes, int max_branch) {
  std::uniform_int_distribution<int> reward(kMinReward, kMaxReward);
  std::uniform_int_distribution<int> sample_count(1, 4);
  auto samples = [&] {
    std::vector<RewardSample> out(static_cast<std::size_t>(sample_count(rng)));
    for (auto& s : out) s.raw = s.adjusted = reward(rng);
    return out;
  };
  SearchTree tree;
  const NodeId root = tree.add_root("root");
  tree.add_rewards(root, samples());
  const int target = std::uniform_int_distribution<int>(1, max_nodes)(rng);
  std::vector<NodeId> open{root};
  while (static_cast<int>(tree.size()) < target) {
    const NodeId parent = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
    const NodeId child = tree.add_child(parent, "n" + std::to_string(tree.next_id()), "f");
    tree.add_rewards(child, samples());
    tree.propagate(child);
    if (static_cast<int>(tree.node(parent).children_ids.size()) >= max_branch) {
      open.erase(std::find(open.begin(), open.end(), parent));
    }
    open.push_back(child);
  }
  return tree;
}

SearchTree random_tree_with_arbitrary_q(std::mt19937_64& rng, int max_nodes) {
  const int count = std::uniform_int_distribution<int>(1, max_nodes)(rng);
  // Few distinct values so that ties and equal-to-parent children occur.
  std::uniform_int_distribution<int> q(-3, 3);
  std::vector<AnswerNode> nodes(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto& n = nodes[static_cast<std::size_t>(i)];
    n.id = i;
    n.answer_text = "n" + std::to_string(i);
    n.q_naive = n.q_eff = 10.0 * q(rng);
    n.rewards = {RewardSample{static_cast<int>(n.q_naive), static_cast<int>(n.q_naive)}};
    if (i > 0) {
      const int parent = std::uniform_int_distribution<int>(0, i - 1)(rng);
      n.parent_id = parent;
      n.depth = nodes[static_cast<std::size_t>(parent)].depth + 1;
      nodes[static_cast<std::size_t>(parent)].children_ids.push_back(i);
    }
  }
  return SearchTree::from_nodes(std::move(nodes), 0, count);
}

std::vector<NodeId> brute_force_candidates(const SearchTree& tree, int max_children) {
  std::vector<const AnswerNode*> picked;
  for (const auto& [id, node] : tree.nodes()) {
    bool child_better = false;
    for (NodeId c : node.children_ids) {
      const AnswerNode& child = tree.node(c);
      child_better |= child.sampled() && child.q_eff > node.q_eff;
    }
    const bool full = static_cast<int>(node.children_ids.size()) >= max_children && child_better;
    if (node.children_ids.empty() || !full) picked.push_back(&node);
  }
  std::sort(picked.begin(), picked.end(), [](const AnswerNode* a, const AnswerNode* b) {
    return std::pair(a->depth, a->id) < std::pair(b->depth, b->id);
  });
  std::vector<NodeId> out;
  for (const auto* n : picked) out.push_back(n->id);
  return out;
}

std::string step_text(int script, int step, int value) {
  return "Problem " + std::to_string(script) + ", revision " + std::to_string(step) +
         ": working through the arithmetic.\n[Final Answer] The answer is " + std::to_string(value);
}

MockScript make_script(int index, int distance, int noise, std::uint64_t seed) {
  MockScript script;
  for (int step = 0; step <= distance; ++step) {
    script.steps.push_back(step_text(index, step, 1000 * (index + 1) + step));
  }
  script.start_answer = script.steps.front();
  script.target_answer = script.steps.back();
  script.noise_amplitude = noise;
  script.rng_seed = seed;
  return script;
}

SearchConfig mock_search_config(std::uint64_t seed) {
  SearchConfig config;
  config.full_score_threshold = 100;
  config.rng_seed = seed;
  return config;
}

std::filesystem::path gsm8k_fixture() {
  return std::filesystem::path(MCTSR_TEST_DATA) / "gsm8k_fixture.jsonl";
}

PolicyFactory reachable_factory(std::span<const DatasetRecord> records, int reachable,
                                std::atomic<int>* created) {
  std::map<std::string, MockScript> scripts;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const bool hit = static_cast<int>(i) < reachable;
    MockScript script;
    script.steps = {"First pass at " + r.record_id + ".\nThe answer is 0",
                    "Second pass at " + r.record_id + ".\nThe answer is 1"};
    if (i % 2) script.steps.pop_back();
    script.steps.push_back("Checked " + r.record_id + ".\n[Final Answer] The answer is " +
                           (hit ? r.gold_answer : "not " + r.gold_answer));
    script.start_answer = script.steps.front();
    script.target_answer = script.steps.back();
    scripts.emplace(r.record_id, std::move(script));
  }
  return [scripts = std::move(scripts), created](const DatasetRecord& r) -> std::shared_ptr<Policy> {
    if (created) ++*created;
    return std::make_shared<MockPolicy>(scripts.at(r.record_id));
  };
}

std::filesystem::path temp_dir(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  const auto dir = std::filesystem::temp_directory_path() /
                   ("mctsr-" + name + "-" + std::to_string(rng() % 1000000007));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mctsr::testing
