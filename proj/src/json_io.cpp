#include "medrl/json_io.hpp"

#include <stdexcept>

#include "medrl/common.hpp"

namespace medrl {

using nlohmann::json;

json gold_to_json(const GoldLabel& gold) {
  return std::visit(
      [](const auto& g) -> json {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, IcdGold>) {
          json arr = json::array();
          for (const auto& c : g.codes) arr.push_back(c.full_code);
          return arr;
        } else if constexpr (std::is_same_v<T, DrugGold>) {
          return json(g.entities);
        } else if constexpr (std::is_same_v<T, TestGold>) {
          return json(g.keywords);
        } else {
          return json{{"answer", std::string(g.letters.begin(), g.letters.end())},
                      {"multiple_response", g.multiple_response},
                      {"options", g.options}};
        }
      },
      gold);
}

namespace {

std::vector<std::string> strings_of(const json& j, std::string_view what) {
  std::vector<std::string> out;
  if (j.is_string()) {
    out.push_back(j.get<std::string>());
  } else if (j.is_array()) {
    for (const auto& e : j) {
      if (!e.is_string()) throw std::invalid_argument(std::string(what) + " entries must be strings");
      out.push_back(e.get<std::string>());
    }
  } else {
    throw std::invalid_argument(std::string(what) + " must be a string or array");
  }
  return out;
}

}  // namespace

GoldLabel gold_from_json(TaskKind kind, const json& j) {
  GoldLabel gold;
  switch (kind) {
    case TaskKind::Diagnosis: {
      IcdGold g;
      for (const auto& s : strings_of(j.is_object() ? j.value("codes", json()) : j, "gold codes")) {
        auto c = IcdCode::parse(s);
        if (!c) throw std::invalid_argument("malformed ICD code in gold: " + s);
        g.codes.push_back(std::move(*c));
      }
      gold = std::move(g);
      break;
    }
    case TaskKind::DrugUse: {
      DrugGold g;
      for (const auto& s : strings_of(j, "gold drugs")) g.entities.insert(normalize_entity(s));
      gold = std::move(g);
      break;
    }
    case TaskKind::TestOrdering: {
      TestGold g;
      for (const auto& s : strings_of(j, "gold tests")) g.keywords.insert(trim(s));
      gold = std::move(g);
      break;
    }
    case TaskKind::ExamQuestion: {
      ExamGold g;
      const json& ans = j.is_object() ? j.at("answer") : j;
      std::string letters;
      for (const auto& s : strings_of(ans, "gold answer")) letters += s;
      for (char c : letters) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
          g.letters.insert(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        }
      }
      g.multiple_response = g.letters.size() > 1;
      if (j.is_object()) {
        g.multiple_response = j.value("multiple_response", g.multiple_response);
        g.options = j.value("options", g.options);
      }
      gold = std::move(g);
      break;
    }
  }
  validate_gold(gold);
  return gold;
}

json to_json(const RewardBreakdown& b) {
  json j = {{"rule_score", b.rule_score},
            {"model_score", b.model_score ? json(*b.model_score) : json(nullptr)},
            {"format_score", b.format_score},
            {"content", b.content},
            {"final", b.final_score},
            {"conclusive", b.conclusive},
            {"degraded", b.degraded}};
  return j;
}

std::vector<JsonlLine> parse_jsonl(std::string_view contents) {
  std::vector<JsonlLine> out;
  std::size_t line_no = 0;
  for (const auto& line : split(contents, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    JsonlLine l;
    l.line_no = line_no;
    l.value = json::parse(line, nullptr, false);
    if (l.value.is_discarded()) {
      l.value = nullptr;
      l.error = "invalid JSON";
    }
    out.push_back(std::move(l));
  }
  return out;
}

std::vector<JsonlLine> read_jsonl(const std::string& path) { return parse_jsonl(read_file(path)); }

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         std::string_view context) {
  if (!j.is_object()) throw std::invalid_argument(std::string(context) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument("unknown key '" + key + "' in " + std::string(context));
  }
}

}  // namespace medrl
