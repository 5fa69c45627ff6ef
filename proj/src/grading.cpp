#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include <boost/multiprecision/cpp_int.hpp>

#include "mctsr/bench.hpp"

namespace mctsr {

namespace {

using Rational = boost::multiprecision::cpp_rational;
using Integer = boost::multiprecision::cpp_int;

constexpr double kRelativeTolerance = 1e-6;

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string remove_all(std::string text, std::string_view what) {
  for (std::size_t pos = text.find(what); pos != std::string::npos; pos = text.find(what, pos)) {
    text.erase(pos, what.size());
  }
  return text;
}

struct Number {
  Rational value;
  // Written with a decimal point, so float comparison is allowed.
  bool decimal = false;
};

// [+-]digits[.digits] or [+-].digits
std::optional<Number> parse_decimal(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  const std::size_t dot = s.find('.');
  std::string_view whole = s.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (whole.empty() && frac.empty()) return std::nullopt;
  auto all_digits = [](std::string_view t) { return std::all_of(t.begin(), t.end(), is_digit); };
  if (!all_digits(whole) || !all_digits(frac)) return std::nullopt;
  // cpp_int reads a leading 0 as an octal prefix, so drop leading zeros.
  std::string digits = std::string(whole) + std::string(frac);
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size()));
  Integer numerator(digits.empty() ? std::string("0") : digits);
  Integer denominator = boost::multiprecision::pow(Integer(10), static_cast<unsigned>(frac.size()));
  Rational value(numerator, denominator);
  if (negative) value = -value;
  return Number{value, dot != std::string_view::npos};
}

std::optional<Number> parse_number(std::string_view s);

// \frac{a}{b}, \dfrac{a}{b}, \tfrac{a}{b}, optionally negated.
std::optional<Number> parse_latex_fraction(std::string_view s) {
  bool negative = false;
  if (!s.empty() && s.front() == '-') {
    negative = true;
    s = trim(s.substr(1));
  }
  for (std::string_view head : {"\\frac", "\\dfrac", "\\tfrac"}) {
    if (!s.starts_with(head)) continue;
    std::string_view rest = s.substr(head.size());
    std::vector<std::string_view> groups;
    while (!rest.empty() && groups.size() < 2) {
      if (rest.front() != '{') return std::nullopt;
      int depth = 0;
      std::size_t i = 0;
      for (; i < rest.size(); ++i) {
        if (rest[i] == '{') ++depth;
        if (rest[i] == '}' && --depth == 0) break;
      }
      if (i == rest.size()) return std::nullopt;
      groups.push_back(rest.substr(1, i - 1));
      rest = rest.substr(i + 1);
    }
    if (groups.size() != 2 || !trim(rest).empty()) return std::nullopt;
    auto num = parse_number(trim(groups[0]));
    auto den = parse_number(trim(groups[1]));
    if (!num || !den || den->value == 0) return std::nullopt;
    Rational value = num->value / den->value;
    if (negative) value = -value;
    return Number{value, num->decimal || den->decimal};
  }
  return std::nullopt;
}

std::optional<Number> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (auto frac = parse_latex_fraction(s)) return frac;
  const std::size_t slash = s.find('/');
  if (slash != std::string_view::npos) {
    auto num = parse_decimal(trim(s.substr(0, slash)));
    auto den = parse_decimal(trim(s.substr(slash + 1)));
    if (!num || !den || den->value == 0) return std::nullopt;
    return Number{num->value / den->value, num->decimal || den->decimal};
  }
  return parse_decimal(s);
}

std::optional<double> parse_float(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string current(trim(text));
  while (true) {
    std::string next = remove_all(remove_all(remove_all(current, "$"), ","), "\\!");
    next = strip_answer_decorations(next);
    if (next == current) return next;
    current = std::move(next);
  }
}

bool grade_answer(std::string_view candidate, std::string_view gold) {
  const std::string a = normalize_answer(candidate);
  const std::string b = normalize_answer(gold);
  if (a == b) return !a.empty();

  const auto ra = parse_number(a);
  const auto rb = parse_number(b);
  if (ra && rb && ra->value == rb->value) return true;

  // Float comparison only when a side is written as a decimal (or is not an
  // exact number at all, e.g. scientific notation).
  const bool allow_float = !(ra && rb) || ra->decimal || rb->decimal;
  if (!allow_float) return false;
  const auto fa = ra ? std::optional<double>(ra->value.convert_to<double>()) : parse_float(a);
  const auto fb = rb ? std::optional<double>(rb->value.convert_to<double>()) : parse_float(b);
  if (!fa || !fb) return false;
  const double scale = std::max(std::abs(*fa), std::abs(*fb));
  return std::abs(*fa - *fb) <= kRelativeTolerance * scale;
}

}  // namespace mctsr
