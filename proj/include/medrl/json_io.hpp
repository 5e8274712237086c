#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "medrl/verifier.hpp"

namespace medrl {

// Gold labels on the wire:
//   diagnosis      ["I10", "E11.9"]
//   drug_use       ["metformin", "insulin"]
//   test_ordering  ["blood count"]
//   exam_question  "C" | ["A","C"] | {"answer":"AC","multiple_response":true,"options":"ABCDE"}
nlohmann::json gold_to_json(const GoldLabel& gold);
GoldLabel gold_from_json(TaskKind kind, const nlohmann::json& j);

nlohmann::json to_json(const RewardBreakdown& b);

struct JsonlLine {
  std::size_t line_no = 0;
  nlohmann::json value;  // null when `error` is set
  std::string error;
};

// Blank lines are skipped; unparsable lines are returned with an error.
std::vector<JsonlLine> parse_jsonl(std::string_view contents);
std::vector<JsonlLine> read_jsonl(const std::string& path);

std::string to_jsonl(const std::vector<nlohmann::json>& rows);

// Throws std::invalid_argument naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         std::string_view context);

}  // namespace medrl
