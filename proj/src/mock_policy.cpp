#include "mctsr/mock_policy.hpp"

#include <algorithm>
#include <set>

#include "mctsr/errors.hpp"
#include "mctsr/tree.hpp"

namespace mctsr {

void to_json(nlohmann::json& j, const MockScript& s) {
  j = nlohmann::json{{"target_answer", s.target_answer}, {"start_answer", s.start_answer},
                     {"steps", s.steps}, {"noise_amplitude", s.noise_amplitude},
                     {"rng_seed", s.rng_seed}};
}

void from_json(const nlohmann::json& j, MockScript& s) {
  j.at("target_answer").get_to(s.target_answer);
  j.at("start_answer").get_to(s.start_answer);
  s.steps = j.value("steps", std::vector<std::string>{});
  s.noise_amplitude = j.value("noise_amplitude", 0);
  s.rng_seed = j.value("rng_seed", std::uint64_t{0});
}

MockPolicy::MockPolicy(MockScript script) : script_(std::move(script)) {
  auto& steps = script_.steps;
  if (steps.empty()) {
    steps.push_back(script_.start_answer);
    if (script_.target_answer != script_.start_answer) steps.push_back(script_.target_answer);
  }
  if (steps.front() != script_.start_answer || steps.back() != script_.target_answer) {
    throw PreconditionError("mock steps must run from start_answer to target_answer");
  }
  if (std::set<std::string>(steps.begin(), steps.end()).size() != steps.size()) {
    throw PreconditionError("mock steps must be distinct");
  }
  if (script_.noise_amplitude < 0) throw PreconditionError("noise_amplitude must be non-negative");
  noise_rng_.seed(script_.rng_seed);
}

int MockPolicy::distance(std::string_view answer) const {
  const auto& steps = script_.steps;
  auto it = std::find(steps.begin(), steps.end(), answer);
  if (it == steps.end()) return static_cast<int>(steps.size()) + 1;
  return static_cast<int>(steps.end() - it) - 1;
}

std::string MockPolicy::draft(std::string_view) { return script_.start_answer; }

std::string MockPolicy::critique(std::string_view, std::string_view) {
  return std::string(kMockCritique);
}

std::string MockPolicy::rewrite(std::string_view, std::string_view answer, std::string_view) {
  const auto& steps = script_.steps;
  auto it = std::find(steps.begin(), steps.end(), answer);
  if (it == steps.end()) return steps.front();
  if (std::next(it) == steps.end()) return *it;
  return *std::next(it);
}

int MockPolicy::grade(std::string_view, std::string_view answer) {
  int noise = 0;
  if (script_.noise_amplitude > 0) {
    std::lock_guard lock(noise_mutex_);
    std::uniform_int_distribution<int> dist(-script_.noise_amplitude, script_.noise_amplitude);
    noise = dist(noise_rng_);
  }
  return std::clamp(100 - 10 * distance(answer) - noise, kMinReward, kMaxReward);
}

std::unique_ptr<MockPolicy> mock_policy(MockScript script) {
  return std::make_unique<MockPolicy>(std::move(script));
}

}  // namespace mctsr
