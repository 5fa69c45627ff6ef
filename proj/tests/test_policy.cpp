#include <random>

#include "doctest.h"
#include "mctsr/errors.hpp"
#include "mctsr/mock_policy.hpp"
#include "mctsr/policy.hpp"
#include "support.hpp"

using namespace mctsr;

namespace {

std::string joined(const Conversation& conversation) {
  std::string out;
  for (const auto& m : conversation) out += m.content + "\n";
  return out;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("feedback prompt carries the critique instruction") {
  const auto bundle = PromptBundle::defaults();
  const auto messages = render_feedback_prompt("2+2?", "5", bundle);
  REQUIRE_FALSE(messages.empty());
  CHECK(messages.back().content.find("Analyze this Answer Strictly and Critic") != std::string::npos);
  CHECK(joined(messages).find("2+2?") != std::string::npos);
  for (const auto& m : messages) CHECK(m.role == Role::user);

  const auto empty_answer = render_feedback_prompt("2+2?", "", bundle);
  CHECK_FALSE(empty_answer.empty());
}

TEST_CASE("refine prompt asks for the final answer format") {
  const auto bundle = PromptBundle::defaults();
  const auto text = joined(render_refine_prompt("q", "a", "f", bundle));
  CHECK(text.find("[Final Answer] The answer is") != std::string::npos);
  CHECK_NOTHROW(render_refine_prompt("q", "a", "", bundle));
}

TEST_CASE("reward prompt states the response format") {
  const auto bundle = PromptBundle::defaults();
  const std::string answer = "Ответ: ∑ 𝑥² = 42 ≠ ✓";
  const auto text = joined(render_reward_prompt("q", answer, bundle));
  CHECK(text.find("Response format:") != std::string::npos);
  CHECK(text.find("[Analyst]...[Score]") != std::string::npos);
  CHECK(text.find(answer) != std::string::npos);
}

TEST_CASE("templates with a missing slot are rejected") {
  auto bundle = PromptBundle::defaults();
  bundle.feedback_template = "Question: {question}\nno answer slot";
  CHECK_THROWS_AS(render_feedback_prompt("q", "a", bundle), TemplateError);
  CHECK_THROWS_AS(bundle.validate(), TemplateError);

  bundle = PromptBundle::defaults();
  bundle.refine_template = "{question} {answer}";
  CHECK_THROWS_AS(render_refine_prompt("q", "a", "f", bundle), TemplateError);

  bundle = PromptBundle::defaults();
  bundle.reward_template = "{question}";
  CHECK_THROWS_AS(render_reward_prompt("q", "a", bundle), TemplateError);
  CHECK_NOTHROW(PromptBundle::defaults().validate());
}

TEST_CASE("slot values are not re-expanded") {
  auto bundle = PromptBundle::defaults();
  const auto text = joined(render_feedback_prompt("{answer}", "A", bundle));
  CHECK(text.find("{answer}") != std::string::npos);
}

TEST_CASE("marker lines split a template into turns") {
  auto bundle = PromptBundle::defaults();
  bundle.draft_template = "[[system]]\nbe brief\n[[user]]\n{question}";
  const auto messages = render_draft_prompt("what?", bundle);
  REQUIRE(messages.size() == 2);
  CHECK(messages[0].role == Role::system);
  CHECK(messages[1].role == Role::user);
  CHECK(messages[1].content.find("what?") != std::string::npos);
}

TEST_CASE("parse_score examples") {
  CHECK(parse_score("[Analyst] Sloppy algebra. [Score] -35") == -35);
  CHECK(parse_score("Score: 87. [Analyst] fine [Score] 62") == 62);
  CHECK_THROWS_AS(parse_score("[Score] 150"), ParseError);
  CHECK_THROWS_AS(parse_score("no marker at all"), ParseError);
  CHECK_THROWS_AS(parse_score("[Score] none"), ParseError);
  CHECK_THROWS_AS(parse_score("[Score] 99999999999999999999999"), ParseError);
}

TEST_CASE("parse_score round-trips every score") {
  for (int n = -100; n <= 100; ++n) {
    REQUIRE(parse_score("[Analyst] some analysis. [Score] " + std::to_string(n)) == n);
  }
}

TEST_CASE("extract_final_answer examples") {
  const auto plain = extract_final_answer("Work...\n[Final Answer] The answer is 42.");
  CHECK(plain.text == "42");
  CHECK_FALSE(plain.used_fallback);

  const auto boxed = extract_final_answer("Steps.\nThe answer is $\\boxed{3/4}$");
  CHECK(boxed.text == "3/4");
  CHECK_FALSE(boxed.used_fallback);

  const auto fallback = extract_final_answer("no marker here\n17");
  CHECK(fallback.text == "17");
  CHECK(fallback.used_fallback);

  CHECK_THROWS_AS(extract_final_answer(""), ExtractionError);
  CHECK_THROWS_AS(extract_final_answer("  \n\t"), ExtractionError);
}

TEST_CASE("extract_final_answer is idempotent") {
  const std::vector<std::string> responses = {
      "The answer is 42.",
      "The answer is $\\boxed{\\frac{1}{2}}$.",
      "the answer is **7**",
      "x\nThe answer is:\n\n  $-3$ ",
      "nothing\n\\boxed{5}.",
      "The answer is \\(x^2\\)",
  };
  for (const auto& r : responses) {
    const std::string once = extract_final_answer(r).text;
    CHECK(extract_final_answer(once).text == once);
  }
}

TEST_CASE("mock policy examples") {
  MockScript script;
  script.steps = {"s0", "s1", "target"};
  script.start_answer = "s0";
  script.target_answer = "target";
  MockPolicy policy(script);
  CHECK(policy.grade("p", "target") == 100);
  CHECK(policy.grade("p", "s1") == 90);
  CHECK(policy.grade("p", "s0") == 80);
  CHECK(policy.grade("p", "I don't know.") == 60);
  CHECK(policy.rewrite("p", "s0", "anything") == "s1");
  CHECK(policy.rewrite("p", "target", "anything") == "target");
  CHECK(policy.rewrite("p", "elsewhere", "anything") == "s0");
  CHECK(policy.draft("p") == "s0");
  CHECK(policy.critique("p", "s0") == kMockCritique);
}

TEST_CASE("mock policy rejects inconsistent scripts") {
  MockScript script;
  script.steps = {"a", "b"};
  script.start_answer = "x";
  script.target_answer = "b";
  CHECK_THROWS_AS(MockPolicy{script}, PreconditionError);
  script.start_answer = "a";
  script.steps = {"a", "a", "b"};
  CHECK_THROWS_AS(MockPolicy{script}, PreconditionError);

  MockScript two;
  two.start_answer = "a";
  two.target_answer = "b";
  MockPolicy filled(two);
  CHECK(filled.script().steps == std::vector<std::string>{"a", "b"});
}

TEST_CASE("mock policies with equal seeds agree call by call") {
  auto script = testing::make_script(0, 3, 10, 1234);
  MockPolicy a(script), b(script);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto& answer = script.steps[rng() % script.steps.size()];
    const int ga = a.grade("p", answer);
    REQUIRE(ga == b.grade("p", answer));
    REQUIRE(ga >= -100);
    REQUIRE(ga <= 100);
  }
  MockScript quiet = testing::make_script(0, 3, 0, 1);
  MockPolicy q(quiet);
  for (int i = 0; i < 5; ++i) CHECK(q.grade("p", quiet.steps[1]) == 80);
}

TEST_CASE("mock script JSON round-trip") {
  const auto script = testing::make_script(3, 2, 5, 77);
  nlohmann::json j = script;
  const auto back = j.get<MockScript>();
  CHECK(back.steps == script.steps);
  CHECK(back.noise_amplitude == 5);
  CHECK(back.rng_seed == 77);
}

}  // TEST_SUITE
