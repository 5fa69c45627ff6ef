#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mctsr {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using Conversation = std::vector<ChatMessage>;

// Prompt templates. Slots are written literally as {question}, {answer} and
// {feedback}. A template may be split into several turns with marker lines
// of the form "[[user]]", "[[assistant]]" or "[[system]]"; text before the
// first marker is a user turn.
struct PromptBundle {
  std::string draft_template;
  std::string feedback_template;
  std::string refine_template;
  std::string reward_template;

  static PromptBundle defaults();

  // Reads draft.txt, feedback.txt, refine.txt and reward.txt from `dir`.
  // Missing files keep their default template.
  static PromptBundle from_directory(const std::filesystem::path& dir);

  // Throws TemplateError if a template lacks one of its required slots.
  void validate() const;
};

Conversation render_draft_prompt(std::string_view problem, const PromptBundle& bundle);
Conversation render_feedback_prompt(std::string_view problem, std::string_view answer,
                                    const PromptBundle& bundle);
Conversation render_refine_prompt(std::string_view problem, std::string_view answer,
                                  std::string_view feedback, const PromptBundle& bundle);
Conversation render_reward_prompt(std::string_view problem, std::string_view answer,
                                  const PromptBundle& bundle);

// Score of a self-reward response: the first integer following the last
// case-insensitive "score" marker. Throws ParseError when there is no marker,
// no integer after it, or the integer lies outside [-100, 100].
int parse_score(std::string_view response);

struct ExtractedAnswer {
  std::string text;
  // Set when the response had no "The answer is" marker and the last
  // non-empty line was used instead.
  bool used_fallback = false;
};

// Final answer of a refine-formatted response, with surrounding whitespace,
// trailing periods, wrapping $ and \boxed{...} stripped. Throws
// ExtractionError for a blank response.
ExtractedAnswer extract_final_answer(std::string_view response);

// Strips $ delimiters, trailing periods and a wrapping \boxed{...} until the
// text stops changing.
std::string strip_answer_decorations(std::string_view text);

// The four model-backed actions. Implementations either return or throw a
// PolicyError; grade always returns a value in [-100, 100]. Implementations
// must tolerate concurrent calls.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string draft(std::string_view problem) = 0;
  virtual std::string critique(std::string_view problem, std::string_view answer) = 0;
  virtual std::string rewrite(std::string_view problem, std::string_view answer,
                              std::string_view feedback) = 0;
  virtual int grade(std::string_view problem, std::string_view answer) = 0;
};

}  // namespace mctsr
