#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "mctsr/config.hpp"
#include "mctsr/tree.hpp"

namespace mctsr {

// Writes `value` with sorted keys, two-space indentation and every floating
// point number printed with 12 significant digits. Equal documents always
// produce identical bytes.
std::string canonical_dump(const nlohmann::json& value);

nlohmann::json tree_to_json(const SearchTree& tree, const SearchConfig& config);

// Canonical tree document: nodes sorted by id, root_id, next_id and the
// search configuration that grew the tree.
std::string serialize_tree(const SearchTree& tree, const SearchConfig& config);

struct TreeDocument {
  SearchTree tree;
  SearchConfig config;
};

// Inverse of serialize_tree. Q values are taken from the document as
// written; links are validated.
TreeDocument parse_tree_document(std::string_view text);

}  // namespace mctsr
