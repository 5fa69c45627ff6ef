#include <algorithm>
#include <cctype>
#include <charconv>
#include <string>

#include "mctsr/errors.hpp"
#include "mctsr/policy.hpp"
#include "mctsr/tree.hpp"

namespace mctsr {

namespace {

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Position of the last case-insensitive occurrence of `needle`, or npos.
std::size_t rfind_icase(std::string_view hay, std::string_view needle) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = hay.size() - needle.size() + 1; i-- > 0;) {
    bool hit = true;
    for (std::size_t k = 0; k < needle.size(); ++k) {
      if (lower(hay[i + k]) != lower(needle[k])) {
        hit = false;
        break;
      }
    }
    if (hit) return i;
  }
  return std::string_view::npos;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Index one past the brace matching the '{' at `open`, or npos.
std::size_t match_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      continue;
    }
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::string_view strip_once(std::string_view s) {
  s = trim(s);
  while (!s.empty() && s.back() == '.') s = trim(s.substr(0, s.size() - 1));
  if (!s.empty() && (s.front() == '$' || s.back() == '$')) {
    while (!s.empty() && s.front() == '$') s.remove_prefix(1);
    while (!s.empty() && s.back() == '$') s.remove_suffix(1);
    return s;
  }
  if (s.size() >= 4 && s.starts_with("**") && s.ends_with("**")) return s.substr(2, s.size() - 4);
  if (s.size() >= 4 && ((s.starts_with("\\(") && s.ends_with("\\)")) ||
                        (s.starts_with("\\[") && s.ends_with("\\]")))) {
    return s.substr(2, s.size() - 4);
  }
  constexpr std::string_view boxed = "\\boxed{";
  if (s.starts_with(boxed) && match_brace(s, boxed.size() - 1) == s.size()) {
    return s.substr(boxed.size(), s.size() - boxed.size() - 1);
  }
  return s;
}

}  // namespace

int parse_score(std::string_view response) {
  const std::size_t marker = rfind_icase(response, "score");
  if (marker == std::string_view::npos) throw ParseError("no score marker in response");
  std::size_t pos = marker + 5;
  while (pos < response.size() && !is_digit(response[pos])) ++pos;
  if (pos == response.size()) throw ParseError("no integer after the score marker");
  const bool negative = pos > marker + 5 && response[pos - 1] == '-';
  std::size_t end = pos;
  while (end < response.size() && is_digit(response[end])) ++end;
  long long magnitude = 0;
  auto [ptr, ec] = std::from_chars(response.data() + pos, response.data() + end, magnitude);
  if (ec != std::errc{} || magnitude > kMaxReward) {
    throw ParseError("score " + std::string(negative ? "-" : "") +
                     std::string(response.substr(pos, std::min<std::size_t>(end - pos, 24))) +
                     " outside [-100, 100]");
  }
  return static_cast<int>(negative ? -magnitude : magnitude);
}

std::string strip_answer_decorations(std::string_view text) {
  std::string_view current = trim(text);
  while (true) {
    std::string_view next = strip_once(current);
    if (next == current) break;
    current = next;
  }
  return std::string(current);
}

ExtractedAnswer extract_final_answer(std::string_view response) {
  if (trim(response).empty()) throw ExtractionError("empty response");

  constexpr std::string_view marker = "the answer is";
  const std::size_t at = rfind_icase(response, marker);
  if (at != std::string_view::npos) {
    std::string_view rest = response.substr(at + marker.size());
    // The answer normally sits on the marker's own line; otherwise on the
    // next non-empty one.
    std::string_view answer;
    while (!rest.empty()) {
      const std::size_t nl = rest.find('\n');
      std::string_view line = trim(rest.substr(0, nl));
      if (!line.empty()) {
        answer = line;
        break;
      }
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
    while (!answer.empty() && (answer.front() == ':' || is_space(answer.front()))) {
      answer.remove_prefix(1);
    }
    std::string text = strip_answer_decorations(answer);
    if (!text.empty()) return {std::move(text), false};
  }

  std::string_view last_line;
  std::size_t pos = 0;
  while (pos <= response.size()) {
    std::size_t nl = response.find('\n', pos);
    if (nl == std::string_view::npos) nl = response.size();
    std::string_view line = trim(response.substr(pos, nl - pos));
    if (!line.empty()) last_line = line;
    pos = nl + 1;
  }
  std::string text = strip_answer_decorations(last_line);
  if (text.empty()) throw ExtractionError("response has no extractable answer");
  return {std::move(text), true};
}

}  // namespace mctsr
