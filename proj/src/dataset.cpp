#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "mctsr/bench.hpp"
#include "mctsr/errors.hpp"

namespace mctsr {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// "Level 3" -> "level-3"; anything else is kept as written.
std::optional<std::string> normalize_level(const nlohmann::json& value) {
  if (value.is_null()) return std::nullopt;
  std::string text = value.is_string() ? value.get<std::string>() : value.dump();
  std::string lowered;
  for (char c : text) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lowered.starts_with("level ")) return "level-" + trim(lowered.substr(6));
  if (!lowered.empty() && std::all_of(lowered.begin(), lowered.end(), ::isdigit)) return "level-" + lowered;
  return text;
}

std::string id_or(const nlohmann::json& j, const std::string& fallback) {
  for (const char* key : {"id", "unique_id", "record_id"}) {
    if (j.contains(key)) {
      const auto& v = j.at(key);
      return v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return fallback;
}

// Calls `visit(json, line_number)` for each non-blank line; lines that are
// not JSON objects are counted as skipped.
template <typename Visit>
void for_each_json_line(const std::filesystem::path& path, LoadResult& out, Visit&& visit) {
  std::istringstream in(read_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      ++out.skipped;
      out.warnings.push_back(path.filename().string() + ":" + std::to_string(line_no) + ": not JSON");
      continue;
    }
    if (!j.is_object()) {
      ++out.skipped;
      out.warnings.push_back(path.filename().string() + ":" + std::to_string(line_no) + ": not an object");
      continue;
    }
    visit(j, line_no);
  }
}

std::optional<std::string> string_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const auto& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  return std::nullopt;
}

void add_math_record(const nlohmann::json& j, const std::string& fallback_id, LoadResult& out) {
  const auto problem = string_field(j, "problem");
  const auto solution = string_field(j, "solution");
  if (!problem || trim(*problem).empty() || !solution) {
    ++out.skipped;
    out.warnings.push_back(fallback_id + ": missing problem or solution");
    return;
  }
  auto gold = last_boxed(*solution);
  if (!gold || trim(*gold).empty()) {
    ++out.skipped;
    out.warnings.push_back(fallback_id + ": no \\boxed answer in solution");
    return;
  }
  out.records.push_back({id_or(j, fallback_id), *problem, trim(*gold),
                         j.contains("level") ? normalize_level(j.at("level")) : std::nullopt});
}

}  // namespace

DatasetKind parse_dataset_kind(std::string_view text) {
  if (text == "gsm8k") return DatasetKind::gsm8k;
  if (text == "math") return DatasetKind::math;
  if (text == "jsonl") return DatasetKind::jsonl;
  throw ConfigError("unknown dataset kind '" + std::string(text) + "'");
}

std::optional<std::string> last_boxed(std::string_view text) {
  constexpr std::string_view marker = "\\boxed{";
  const std::size_t at = text.rfind(marker);
  if (at == std::string_view::npos) return std::nullopt;
  const std::size_t open = at + marker.size() - 1;
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    if (text[i] == '\\') {
      ++i;  // escaped brace or command letter
      continue;
    }
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return std::string(text.substr(open + 1, i - open - 1));
  }
  return std::nullopt;
}

LoadResult load_gsm8k(const std::filesystem::path& path) {
  LoadResult out;
  for_each_json_line(path, out, [&](const nlohmann::json& j, int line_no) {
    const auto question = string_field(j, "question");
    const auto answer = string_field(j, "answer");
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    if (!question || trim(*question).empty() || !answer) {
      ++out.skipped;
      out.warnings.push_back(where + ": missing question or answer");
      return;
    }
    const std::size_t marker = answer->rfind("#### ");
    if (marker == std::string::npos) {
      ++out.skipped;
      out.warnings.push_back(where + ": no '#### ' marker");
      return;
    }
    std::string gold = trim(answer->substr(marker + 5));
    gold.erase(std::remove(gold.begin(), gold.end(), ','), gold.end());
    if (gold.empty()) {
      ++out.skipped;
      out.warnings.push_back(where + ": empty gold answer");
      return;
    }
    out.records.push_back({id_or(j, "gsm8k-" + std::to_string(line_no)), *question, gold,
                           std::nullopt});
  });
  return out;
}

LoadResult load_math(const std::filesystem::path& path) {
  LoadResult out;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const std::string rel = std::filesystem::relative(file, path).replace_extension().generic_string();
      try {
        add_math_record(nlohmann::json::parse(read_file(file)), rel, out);
      } catch (const nlohmann::json::exception&) {
        ++out.skipped;
        out.warnings.push_back(rel + ": not JSON");
      }
    }
    return out;
  }

  const std::string text = read_file(path);
  const std::string head = trim(text.substr(0, 64));
  if (head.starts_with("[")) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("MATH file " + path.string() + " is not valid JSON: " + e.what());
    }
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const std::string fallback = "math-" + std::to_string(i + 1);
      if (!doc[i].is_object()) {
        ++out.skipped;
        out.warnings.push_back(fallback + ": not an object");
        continue;
      }
      add_math_record(doc[i], fallback, out);
    }
    return out;
  }
  for_each_json_line(path, out, [&](const nlohmann::json& j, int line_no) {
    add_math_record(j, "math-" + std::to_string(line_no), out);
  });
  return out;
}

LoadResult load_jsonl(const std::filesystem::path& path) {
  LoadResult out;
  const std::string stem = path.stem().string();
  for_each_json_line(path, out, [&](const nlohmann::json& j, int line_no) {
    const auto question = string_field(j, "question");
    const auto answer = string_field(j, "answer");
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    if (!question || trim(*question).empty() || !answer || trim(*answer).empty()) {
      ++out.skipped;
      out.warnings.push_back(where + ": missing question or answer");
      return;
    }
    out.records.push_back({id_or(j, stem + "-" + std::to_string(line_no)), *question,
                           trim(*answer),
                           j.contains("level") ? normalize_level(j.at("level")) : std::nullopt});
  });
  return out;
}

LoadResult load_dataset(DatasetKind kind, const std::filesystem::path& path) {
  switch (kind) {
    case DatasetKind::gsm8k:
      return load_gsm8k(path);
    case DatasetKind::math:
      return load_math(path);
    case DatasetKind::jsonl:
      return load_jsonl(path);
  }
  throw ConfigError("unknown dataset kind");
}

}  // namespace mctsr
