#include "mctsr/serialize.hpp"

#include <cmath>
#include <cstdio>

#include "mctsr/errors.hpp"

namespace mctsr {

namespace {

void indent(std::string& out, int level) { out.append(static_cast<std::size_t>(level) * 2, ' '); }

std::string format_float(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write(std::string& out, const nlohmann::json& v, int level) {
  switch (v.type()) {
    case nlohmann::json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      // nlohmann::json objects iterate in key order.
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        indent(out, level + 1);
        out += nlohmann::json(it.key()).dump();
        out += ": ";
        write(out, it.value(), level + 1);
      }
      out += "\n";
      indent(out, level);
      out += "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",\n";
        indent(out, level + 1);
        write(out, v[i], level + 1);
      }
      out += "\n";
      indent(out, level);
      out += "]";
      return;
    }
    case nlohmann::json::value_t::number_float:
      out += format_float(v.get<double>());
      return;
    default:
      out += v.dump();
      return;
  }
}

}  // namespace

std::string canonical_dump(const nlohmann::json& value) {
  std::string out;
  write(out, value, 0);
  out += "\n";
  return out;
}

nlohmann::json tree_to_json(const SearchTree& tree, const SearchConfig& config) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [id, n] : tree.nodes()) {
    nlohmann::json rewards = nlohmann::json::array();
    for (const auto& r : n.rewards) rewards.push_back({{"raw", r.raw}, {"adjusted", r.adjusted}});
    nodes.push_back({
        {"id", n.id},
        {"parent_id", n.parent_id ? nlohmann::json(*n.parent_id) : nlohmann::json(nullptr)},
        {"children_ids", n.children_ids},
        {"depth", n.depth},
        {"answer_text", n.answer_text},
        {"feedback_text", n.feedback_text},
        {"rewards", rewards},
        {"q_naive", n.q_naive},
        {"q_eff", n.q_eff},
    });
  }
  return {
      {"root_id", tree.empty() ? nlohmann::json(nullptr) : nlohmann::json(tree.root_id())},
      {"next_id", tree.next_id()},
      {"nodes", nodes},
      {"config", config},
  };
}

std::string serialize_tree(const SearchTree& tree, const SearchConfig& config) {
  return canonical_dump(tree_to_json(tree, config));
}

TreeDocument parse_tree_document(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    std::vector<AnswerNode> nodes;
    for (const auto& jn : doc.at("nodes")) {
      AnswerNode n;
      n.id = jn.at("id").get<NodeId>();
      if (!jn.at("parent_id").is_null()) n.parent_id = jn.at("parent_id").get<NodeId>();
      n.children_ids = jn.at("children_ids").get<std::vector<NodeId>>();
      n.depth = jn.at("depth").get<int>();
      n.answer_text = jn.at("answer_text").get<std::string>();
      n.feedback_text = jn.at("feedback_text").get<std::string>();
      for (const auto& jr : jn.at("rewards")) {
        n.rewards.push_back({jr.at("raw").get<int>(), jr.at("adjusted").get<int>()});
      }
      n.q_naive = jn.at("q_naive").get<double>();
      n.q_eff = jn.at("q_eff").get<double>();
      nodes.push_back(std::move(n));
    }
    TreeDocument out{
        SearchTree::from_nodes(std::move(nodes), doc.at("root_id").get<NodeId>(),
                               doc.at("next_id").get<NodeId>()),
        doc.at("config").get<SearchConfig>()};
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed tree document: ") + e.what());
  }
}

}  // namespace mctsr
