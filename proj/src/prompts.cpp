#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

#include "mctsr/errors.hpp"
#include "mctsr/policy.hpp"

namespace mctsr {

namespace {

constexpr std::string_view kDraftTemplate =
    "[[user]]\n"
    "Question: {question}\n"
    "\n"
    "The response should begin with [reasoning process]...[Verification]... and end with "
    "\"[Final Answer] The answer is [answer formula]\"\n"
    "\n"
    "Let's think step by step.\n";

constexpr std::string_view kFeedbackTemplate =
    "[[user]]\n"
    "Question: {question}\n"
    "\n"
    "Answer: {answer}\n"
    "[[user]]\n"
    "Since we have a weak Answer, could you provide me with a relection or feedback to correct "
    "this answer better? Analyze this Answer Strictly and Critic, point out every flaw for "
    "ervery possible imperfect to minus every possible score!\n"
    "\n"
    "Let's think step by step.\n";

constexpr std::string_view kRefineTemplate =
    "[[user]]\n"
    "Question: {question}\n"
    "\n"
    "Answer: {answer}\n"
    "\n"
    "Feedback: {feedback}\n"
    "[[user]]\n"
    "Please refine the your answer according to your Reflection or Feedback. The response "
    "should begin with [reasoning process]...[Verification]... and end with end with "
    "\"[Final Answer] The answer is [answer formula]\"\n"
    "\n"
    "Let's think step by step.\n";

constexpr std::string_view kRewardTemplate =
    "[[user]]\n"
    "Question: {question}\n"
    "\n"
    "Answer: {answer}\n"
    "\n"
    "Analyze this Answer Strictly and Critic, and point out every flaw for every possible "
    "imperfect to minus every possible score! You need to be very harsh and mean in "
    "calculating grades, and never give full marks to ensure that the marks are "
    "authoritative. \n"
    "\n"
    "Output a score between [-100,+100], ig. from -100 to +100. \n"
    "\n"
    "Response format:\n"
    "\n"
    "[Analyst]...[Score]...\n";

struct Slot {
  std::string_view name;
  std::string_view value;
};

void require_slots(std::string_view tmpl, std::initializer_list<std::string_view> names,
                   std::string_view which) {
  for (auto name : names) {
    const std::string token = "{" + std::string(name) + "}";
    if (tmpl.find(token) == std::string_view::npos) {
      throw TemplateError(std::string(which) + " template is missing the " + token + " slot");
    }
  }
}

// Single left-to-right pass, so slot values containing "{answer}" or LaTeX
// braces are never substituted again.
std::string substitute(std::string_view text, std::initializer_list<Slot> slots) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    bool matched = false;
    if (text[i] == '{') {
      for (const auto& slot : slots) {
        const std::size_t n = slot.name.size();
        if (text.size() - i >= n + 2 && text.compare(i + 1, n, slot.name) == 0 &&
            text[i + 1 + n] == '}') {
          out += slot.value;
          i += n + 2;
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += text[i++];
  }
  return out;
}

std::string trim_newlines(std::string_view s) {
  while (!s.empty() && (s.front() == '\n' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

Conversation render(std::string_view tmpl, std::initializer_list<Slot> slots) {
  Conversation turns;
  Role role = Role::user;
  std::string current;
  bool seen_marker = false;
  auto flush = [&] {
    std::string body = trim_newlines(current);
    if (seen_marker || !body.empty()) turns.push_back({role, substitute(body, slots)});
    current.clear();
  };
  std::size_t pos = 0;
  while (pos <= tmpl.size()) {
    std::size_t end = tmpl.find('\n', pos);
    if (end == std::string_view::npos) end = tmpl.size();
    std::string_view line = tmpl.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::optional<Role> marker;
    if (line == "[[user]]") marker = Role::user;
    if (line == "[[assistant]]") marker = Role::assistant;
    if (line == "[[system]]") marker = Role::system;
    if (marker) {
      flush();
      role = *marker;
      seen_marker = true;
    } else {
      current += line;
      if (end < tmpl.size()) current += '\n';
    }
    pos = end + 1;
  }
  flush();
  return turns;
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view text) {
  if (text == "system") return Role::system;
  if (text == "user") return Role::user;
  if (text == "assistant") return Role::assistant;
  throw ParseError("unknown chat role '" + std::string(text) + "'");
}

PromptBundle PromptBundle::defaults() {
  return PromptBundle{std::string(kDraftTemplate), std::string(kFeedbackTemplate),
                      std::string(kRefineTemplate), std::string(kRewardTemplate)};
}

PromptBundle PromptBundle::from_directory(const std::filesystem::path& dir) {
  PromptBundle bundle = defaults();
  auto load = [&](const char* name, std::string& slot) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot read template " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    slot = buf.str();
  };
  load("draft.txt", bundle.draft_template);
  load("feedback.txt", bundle.feedback_template);
  load("refine.txt", bundle.refine_template);
  load("reward.txt", bundle.reward_template);
  bundle.validate();
  return bundle;
}

void PromptBundle::validate() const {
  require_slots(draft_template, {"question"}, "draft");
  require_slots(feedback_template, {"question", "answer"}, "feedback");
  require_slots(refine_template, {"question", "answer", "feedback"}, "refine");
  require_slots(reward_template, {"question", "answer"}, "reward");
}

Conversation render_draft_prompt(std::string_view problem, const PromptBundle& bundle) {
  require_slots(bundle.draft_template, {"question"}, "draft");
  return render(bundle.draft_template, {{"question", problem}});
}

Conversation render_feedback_prompt(std::string_view problem, std::string_view answer,
                                    const PromptBundle& bundle) {
  require_slots(bundle.feedback_template, {"question", "answer"}, "feedback");
  return render(bundle.feedback_template, {{"question", problem}, {"answer", answer}});
}

Conversation render_refine_prompt(std::string_view problem, std::string_view answer,
                                  std::string_view feedback, const PromptBundle& bundle) {
  require_slots(bundle.refine_template, {"question", "answer", "feedback"}, "refine");
  return render(bundle.refine_template,
                {{"question", problem}, {"answer", answer}, {"feedback", feedback}});
}

Conversation render_reward_prompt(std::string_view problem, std::string_view answer,
                                  const PromptBundle& bundle) {
  require_slots(bundle.reward_template, {"question", "answer"}, "reward");
  return render(bundle.reward_template, {{"question", problem}, {"answer", answer}});
}

}  // namespace mctsr
