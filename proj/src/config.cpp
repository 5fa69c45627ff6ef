#include "mctsr/config.hpp"

#include <charconv>
#include <set>

#include "mctsr/errors.hpp"

namespace mctsr {

std::string_view to_string(SelectionMode mode) {
  return mode == SelectionMode::greedy ? "greedy" : "importance";
}

std::string_view to_string(RootMode mode) {
  return mode == RootMode::dummy ? "dummy" : "naive";
}

SelectionMode parse_selection_mode(std::string_view text) {
  if (text == "greedy") return SelectionMode::greedy;
  if (text == "importance") return SelectionMode::importance;
  throw ConfigError("unknown selection mode '" + std::string(text) + "'");
}

RootMode parse_root_mode(std::string_view text) {
  if (text == "dummy") return RootMode::dummy;
  if (text == "naive") return RootMode::naive;
  throw ConfigError("unknown root mode '" + std::string(text) + "'");
}

const std::vector<std::string>& default_dummy_answers() {
  static const std::vector<std::string> answers = {
      "I Don't Know",
      "I can't understand this question.",
      "I can't help with this question.",
      "I don't know how to solve this question.",
      "I don't know the answer to this question.",
      "I don't know the answer to this question, sorry.",
  };
  return answers;
}

namespace {

void require(bool ok, const char* message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void SearchConfig::validate() const {
  require(max_rollouts >= 0, "max_rollouts must be non-negative");
  require(max_children >= 1, "max_children must be at least 1");
  require(exploration_c >= 0.0, "exploration_c must be non-negative");
  require(epsilon > 0.0, "epsilon must be positive");
  require(reward_samples_per_visit >= 1, "reward_samples_per_visit must be at least 1");
  require(parent_resample_count >= 0, "parent_resample_count must be non-negative");
  require(full_score_threshold >= -100 && full_score_threshold <= 100,
          "full_score_threshold must lie in [-100, 100]");
  require(suppression_constant >= 1, "suppression_constant must be positive");
  require(!early_stop_repeat || *early_stop_repeat >= 1, "early_stop repeat count must be positive");
  require(!max_depth || *max_depth >= 1, "max_depth must be positive");
  require(root_mode != RootMode::dummy || !dummy_answers.empty(),
          "dummy root mode needs at least one dummy answer");
}

std::optional<int> parse_early_stop(std::string_view text) {
  if (text == "off" || text.empty()) return std::nullopt;
  std::string_view digits = text;
  if (text.starts_with("repeat(") && text.ends_with(")")) {
    digits = text.substr(7, text.size() - 8);
  }
  int k = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || k < 1) {
    throw ConfigError("early_stop must be 'off' or 'repeat(k)', got '" + std::string(text) + "'");
  }
  return k;
}

std::string format_early_stop(const std::optional<int>& repeat) {
  if (!repeat) return "off";
  return "repeat(" + std::to_string(*repeat) + ")";
}

void to_json(nlohmann::json& j, const SearchConfig& c) {
  j = nlohmann::json{
      {"max_rollouts", c.max_rollouts},
      {"max_children", c.max_children},
      {"exploration_c", c.exploration_c},
      {"epsilon", c.epsilon},
      {"reward_samples_per_visit", c.reward_samples_per_visit},
      {"parent_resample_count", c.parent_resample_count},
      {"full_score_threshold", c.full_score_threshold},
      {"suppression_constant", c.suppression_constant},
      {"selection_mode", to_string(c.selection_mode)},
      {"root_mode", to_string(c.root_mode)},
      {"early_stop", format_early_stop(c.early_stop_repeat)},
      {"max_depth", c.max_depth ? nlohmann::json(*c.max_depth) : nlohmann::json(nullptr)},
      {"dummy_answers", c.dummy_answers},
      {"rng_seed", c.rng_seed},
  };
}

void from_json(const nlohmann::json& j, SearchConfig& c) {
  static const std::set<std::string> known = {
      "max_rollouts", "max_children", "exploration_c", "epsilon",
      "reward_samples_per_visit", "parent_resample_count", "full_score_threshold",
      "suppression_constant", "selection_mode", "root_mode", "early_stop",
      "max_depth", "dummy_answers", "rng_seed"};
  if (!j.is_object()) throw ConfigError("search config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown search config key '" + key + "'");
  }
  try {
    if (j.contains("max_rollouts")) j.at("max_rollouts").get_to(c.max_rollouts);
    if (j.contains("max_children")) j.at("max_children").get_to(c.max_children);
    if (j.contains("exploration_c")) j.at("exploration_c").get_to(c.exploration_c);
    if (j.contains("epsilon")) j.at("epsilon").get_to(c.epsilon);
    if (j.contains("reward_samples_per_visit")) j.at("reward_samples_per_visit").get_to(c.reward_samples_per_visit);
    if (j.contains("parent_resample_count")) j.at("parent_resample_count").get_to(c.parent_resample_count);
    if (j.contains("full_score_threshold")) j.at("full_score_threshold").get_to(c.full_score_threshold);
    if (j.contains("suppression_constant")) j.at("suppression_constant").get_to(c.suppression_constant);
    if (j.contains("selection_mode")) c.selection_mode = parse_selection_mode(j.at("selection_mode").get<std::string>());
    if (j.contains("root_mode")) c.root_mode = parse_root_mode(j.at("root_mode").get<std::string>());
    if (j.contains("early_stop")) {
      const auto& v = j.at("early_stop");
      c.early_stop_repeat = v.is_null() ? std::nullopt : parse_early_stop(v.is_number() ? std::to_string(v.get<int>()) : v.get<std::string>());
    }
    if (j.contains("max_depth")) {
      const auto& v = j.at("max_depth");
      c.max_depth = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
    }
    if (j.contains("dummy_answers")) j.at("dummy_answers").get_to(c.dummy_answers);
    if (j.contains("rng_seed")) j.at("rng_seed").get_to(c.rng_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad search config: ") + e.what());
  }
}

}  // namespace mctsr
