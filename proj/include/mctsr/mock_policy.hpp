#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "mctsr/policy.hpp"

namespace mctsr {

// Deterministic stand-in for a model. Answers move one step along `steps`
// per rewrite, and grades fall by 10 points per step of distance from the
// target, plus optional uniform noise.
struct MockScript {
  std::string target_answer;
  std::string start_answer;
  // Answers from start_answer to target_answer inclusive. Left empty, it is
  // filled with {start_answer, target_answer}.
  std::vector<std::string> steps;
  int noise_amplitude = 0;
  std::uint64_t rng_seed = 0;
};

void to_json(nlohmann::json& j, const MockScript& script);
void from_json(const nlohmann::json& j, MockScript& script);

inline constexpr std::string_view kMockCritique = "[mock critique] tighten the argument";

class MockPolicy final : public Policy {
 public:
  // Throws PreconditionError if steps do not run from start to target or
  // contain duplicates.
  explicit MockPolicy(MockScript script);

  std::string draft(std::string_view problem) override;
  std::string critique(std::string_view problem, std::string_view answer) override;
  std::string rewrite(std::string_view problem, std::string_view answer,
                      std::string_view feedback) override;
  int grade(std::string_view problem, std::string_view answer) override;

  // Steps remaining to the target; off-script answers are |steps| + 1 away.
  int distance(std::string_view answer) const;
  const MockScript& script() const { return script_; }

 private:
  MockScript script_;
  std::mutex noise_mutex_;
  std::mt19937_64 noise_rng_;
};

std::unique_ptr<MockPolicy> mock_policy(MockScript script);

}  // namespace mctsr
