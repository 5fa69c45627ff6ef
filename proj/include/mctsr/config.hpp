#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace mctsr {

enum class SelectionMode { greedy, importance };
enum class RootMode { dummy, naive };

std::string_view to_string(SelectionMode mode);
std::string_view to_string(RootMode mode);
SelectionMode parse_selection_mode(std::string_view text);
RootMode parse_root_mode(std::string_view text);

// Content-free root answers used when the tree starts from a dummy response.
const std::vector<std::string>& default_dummy_answers();

// Every tunable constant of the search.
struct SearchConfig {
  int max_rollouts = 8;
  int max_children = 2;
  double exploration_c = 1.4;
  double epsilon = 1e-10;
  int reward_samples_per_visit = 3;
  int parent_resample_count = 1;
  // Raw rewards strictly above this value are reduced by suppression_constant.
  // 100 switches suppression off, since no raw reward can exceed it.
  int full_score_threshold = 95;
  int suppression_constant = 50;
  SelectionMode selection_mode = SelectionMode::greedy;
  RootMode root_mode = RootMode::dummy;
  // Stop once this many consecutive expansions reproduced their parent's
  // answer. Unset means early stopping is off.
  std::optional<int> early_stop_repeat;
  std::optional<int> max_depth;
  std::vector<std::string> dummy_answers = default_dummy_answers();
  std::uint64_t rng_seed = 0;

  // Throws ConfigError naming the first offending field.
  void validate() const;
};

// "off" or "repeat(k)"; a bare integer k is accepted as repeat(k).
std::optional<int> parse_early_stop(std::string_view text);
std::string format_early_stop(const std::optional<int>& repeat);

void to_json(nlohmann::json& j, const SearchConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, SearchConfig& config);

}  // namespace mctsr
