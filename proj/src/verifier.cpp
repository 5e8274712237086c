#include "medrl/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "medrl/common.hpp"
#include "medrl/model_scorer.hpp"

namespace medrl {

using nlohmann::json;

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Diagnosis: return "diagnosis";
    case TaskKind::DrugUse: return "drug_use";
    case TaskKind::TestOrdering: return "test_ordering";
    case TaskKind::ExamQuestion: return "exam_question";
  }
  return "unknown";
}

TaskKind task_kind_from_string(std::string_view name) {
  const std::string n = to_lower(trim(name));
  for (TaskKind k : kAllTaskKinds) {
    if (to_string(k) == n) return k;
  }
  throw std::invalid_argument("unknown task kind: " + std::string(name));
}

std::optional<IcdCode> IcdCode::parse(std::string_view text) {
  const std::string s = to_upper(trim(text));
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  if (s.size() < 3 || s[0] < 'A' || s[0] > 'Z' || !is_digit(s[1]) || !is_digit(s[2])) {
    return std::nullopt;
  }
  std::string_view rest(s);
  rest.remove_prefix(3);
  if (!rest.empty() && rest.front() == '.') {
    rest.remove_prefix(1);
    if (rest.empty()) return std::nullopt;
  }
  if (rest.size() > 2 || !std::all_of(rest.begin(), rest.end(), is_digit)) {
    return std::nullopt;
  }
  IcdCode code;
  code.category = s.substr(0, 3);
  code.full_code = rest.empty() ? code.category : code.category + "." + std::string(rest);
  return code;
}

TaskKind kind_of(const GoldLabel& gold) {
  return static_cast<TaskKind>(gold.index());
}

void validate_gold(const GoldLabel& gold) {
  std::visit(
      [](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, IcdGold>) {
          if (g.codes.empty()) throw std::invalid_argument("ICD gold label is empty");
          for (const auto& c : g.codes) {
            auto p = IcdCode::parse(c.full_code);
            if (!p || *p != c) throw std::invalid_argument("malformed ICD code: " + c.full_code);
          }
        } else if constexpr (std::is_same_v<T, DrugGold>) {
          if (g.entities.empty()) throw std::invalid_argument("drug gold label is empty");
        } else if constexpr (std::is_same_v<T, TestGold>) {
          if (g.keywords.empty()) throw std::invalid_argument("test gold label is empty");
        } else {
          if (g.letters.empty()) throw std::invalid_argument("exam gold label is empty");
          if (g.options.empty()) throw std::invalid_argument("exam item has no options");
          for (char c : g.letters) {
            if (g.options.find(c) == std::string::npos) {
              throw std::invalid_argument(std::string("gold letter outside options: ") + c);
            }
          }
          if (!g.multiple_response && g.letters.size() != 1) {
            throw std::invalid_argument("single-choice gold must have exactly one letter");
          }
        }
      },
      gold);
}

std::string describe_gold(const GoldLabel& gold) {
  return std::visit(
      [](const auto& g) -> std::string {
        using T = std::decay_t<decltype(g)>;
        std::string out;
        auto append = [&out](std::string_view s) {
          if (!out.empty()) out += ", ";
          out += s;
        };
        if constexpr (std::is_same_v<T, IcdGold>) {
          for (const auto& c : g.codes) append(c.full_code);
        } else if constexpr (std::is_same_v<T, DrugGold>) {
          for (const auto& e : g.entities) append(e);
        } else if constexpr (std::is_same_v<T, TestGold>) {
          for (const auto& k : g.keywords) append(k);
        } else {
          for (char c : g.letters) append(std::string(1, c));
        }
        return out;
      },
      gold);
}

namespace {

// End index (inclusive) of the balanced object starting at `start`, honoring
// JSON string literals; npos when unbalanced.
std::size_t match_brace(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

std::optional<json> last_json_object(std::string_view text) {
  std::optional<json> last;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      ++i;
      continue;
    }
    const std::size_t end = match_brace(text, i);
    if (end != std::string_view::npos) {
      json j = json::parse(text.substr(i, end - i + 1), nullptr, false);
      if (!j.is_discarded() && j.is_object()) {
        last = std::move(j);
        i = end + 1;
        continue;
      }
    }
    ++i;
  }
  return last;
}

// String or array of non-empty strings; nullopt otherwise.
std::optional<std::vector<std::string>> string_list(const json& v) {
  std::vector<std::string> out;
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (e.is_string()) {
        out.push_back(e.get<std::string>());
      } else if (e.is_object() && e.contains("code") && e["code"].is_string()) {
        out.push_back(e["code"].get<std::string>());
      } else {
        return std::nullopt;
      }
    }
  } else {
    return std::nullopt;
  }
  for (auto& s : out) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
  }
  return out;
}

std::optional<std::set<char>> option_letters(const json& v) {
  std::string joined;
  if (v.is_string()) {
    joined = v.get<std::string>();
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_string()) return std::nullopt;
      const std::string s = trim(e.get<std::string>());
      if (s.size() != 1) return std::nullopt;
      joined += s;
    }
  } else {
    return std::nullopt;
  }
  std::set<char> letters;
  for (unsigned char c : joined) {
    if (std::isalpha(c)) {
      letters.insert(static_cast<char>(std::toupper(c)));
    } else if (!(std::isspace(c) || c == ',' || c == ';' || c == '/')) {
      return std::nullopt;
    }
  }
  if (letters.empty()) return std::nullopt;
  return letters;
}

const json* find_key(const json& obj, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = obj.find(k);
    if (it != obj.end()) return &*it;
  }
  return nullptr;
}

AnswerPayload empty_payload(TaskKind kind) {
  switch (kind) {
    case TaskKind::Diagnosis: return DiagnosisAnswer{};
    case TaskKind::DrugUse: return DrugAnswer{};
    case TaskKind::TestOrdering: return TestAnswer{};
    case TaskKind::ExamQuestion: return ExamResponse{};
  }
  return ExamResponse{};
}

}  // namespace

ParsedOutput parse_response(TaskKind kind, std::string_view text) {
  ParsedOutput out;
  out.kind = kind;
  out.raw_text = std::string(text);
  out.payload = empty_payload(kind);

  const auto obj = last_json_object(text);
  if (!obj) return out;

  switch (kind) {
    case TaskKind::Diagnosis: {
      const json* v = find_key(*obj, {"diagnosis", "diagnoses", "icd", "icd_codes", "codes"});
      if (!v) return out;
      auto codes = string_list(*v);
      if (!codes) return out;
      DiagnosisAnswer a;
      for (auto& c : *codes) a.codes.push_back(to_upper(c));
      out.payload = std::move(a);
      break;
    }
    case TaskKind::DrugUse: {
      const json* v = find_key(*obj, {"drugs"});
      if (!v) return out;
      auto drugs = string_list(*v);
      if (!drugs) return out;
      out.payload = DrugAnswer{std::move(*drugs)};
      break;
    }
    case TaskKind::TestOrdering: {
      const json* v = find_key(*obj, {"tests"});
      if (!v) return out;
      auto tests = string_list(*v);
      if (!tests) return out;
      out.payload = TestAnswer{std::move(*tests)};
      break;
    }
    case TaskKind::ExamQuestion: {
      const json* v = find_key(*obj, {"answer"});
      if (!v) return out;
      auto letters = option_letters(*v);
      if (!letters) return out;
      out.payload = ExamResponse{std::move(*letters)};
      break;
    }
  }
  out.format_valid = true;
  return out;
}

std::vector<IcdCode> parsed_icd_codes(const ParsedOutput& parsed) {
  std::vector<IcdCode> codes;
  if (const auto* a = std::get_if<DiagnosisAnswer>(&parsed.payload)) {
    for (const auto& raw : a->codes) {
      if (auto c = IcdCode::parse(raw)) codes.push_back(std::move(*c));
    }
  }
  return codes;
}

SynonymTable SynonymTable::load_tsv(const std::string& path) {
  return parse_tsv(read_file(path));
}

SynonymTable SynonymTable::parse_tsv(std::string_view contents) {
  SynonymTable table;
  std::size_t line_no = 0;
  for (const auto& line : split(contents, '\n')) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 2 || trim(cols[0]).empty() || trim(cols[1]).empty()) {
      throw std::invalid_argument("synonym table line " + std::to_string(line_no) +
                                  ": expected surface<TAB>canonical");
    }
    table.add(cols[0], cols[1]);
  }
  return table;
}

void SynonymTable::add(std::string_view surface, std::string_view canonical) {
  map_[normalize_entity(surface)] = normalize_entity(canonical);
}

std::string SynonymTable::canonical(std::string_view entity) const {
  std::string n = normalize_entity(entity);
  auto it = map_.find(n);
  return it == map_.end() ? n : it->second;
}

IcdVerdict verify_icd(std::span<const IcdCode> pred, std::span<const IcdCode> gold) {
  if (gold.empty()) throw std::invalid_argument("verify_icd: gold must be non-empty");
  IcdVerdict v;
  if (pred.empty()) return v;

  double total = 0.0;
  for (const auto& g : gold) {
    double credit = 0.0;
    for (const auto& p : pred) {
      if (p.full_code == g.full_code) {
        credit = 1.0;
        break;
      }
      if (p.category == g.category) credit = 0.5;
    }
    total += credit;
  }
  v.rule_score = total / static_cast<double>(gold.size());
  v.recall = v.rule_score;
  v.top1_hit = std::any_of(gold.begin(), gold.end(), [&](const IcdCode& g) {
    return pred.front().full_code == g.full_code || pred.front().category == g.category;
  });
  // a zero score implies no category near-miss (those earn 0.5)
  v.conclusive = v.rule_score == 0.0 || v.rule_score == 1.0;
  return v;
}

RuleVerdict verify_drugs(std::span<const std::string> pred, const std::set<std::string>& gold,
                         const SynonymTable* synonyms) {
  if (gold.empty()) throw std::invalid_argument("verify_drugs: gold must be non-empty");
  auto canon = [synonyms](std::string_view s) {
    return synonyms ? synonyms->canonical(s) : normalize_entity(s);
  };
  std::set<std::string> gold_n;
  for (const auto& g : gold) gold_n.insert(canon(g));
  std::set<std::string> pred_n;
  for (const auto& p : pred) pred_n.insert(canon(p));

  std::size_t hits = 0;
  for (const auto& g : gold_n) hits += pred_n.count(g);
  RuleVerdict v;
  v.rule_score = static_cast<double>(hits) / static_cast<double>(gold_n.size());
  v.conclusive = v.rule_score == 0.0 || v.rule_score == 1.0;
  return v;
}

double verify_tests(std::string_view pred_text, const std::set<std::string>& gold) {
  if (gold.empty()) throw std::invalid_argument("verify_tests: gold must be non-empty");
  const std::string hay = to_lower(pred_text);
  std::size_t hits = 0;
  for (const auto& k : gold) {
    if (hay.find(to_lower(trim(k))) != std::string::npos) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double verify_exam(const std::set<char>& pred, const ExamGold& gold, bool partial_credit) {
  if (pred == gold.letters) return 1.0;
  if (partial_credit && gold.multiple_response && !pred.empty() &&
      std::includes(gold.letters.begin(), gold.letters.end(), pred.begin(), pred.end())) {
    return static_cast<double>(pred.size()) / static_cast<double>(gold.letters.size());
  }
  return 0.0;
}

int format_reward(const ParsedOutput& parsed, TaskKind kind, std::string_view exam_options) {
  if (!parsed.format_valid || parsed.kind != kind) return 0;
  auto nonempty_all = [](const std::vector<std::string>& v) {
    return !v.empty() && std::none_of(v.begin(), v.end(),
                                      [](const std::string& s) { return trim(s).empty(); });
  };
  return std::visit(
      [&](const auto& a) -> int {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, DiagnosisAnswer>) {
          if (a.codes.empty()) return 0;
          for (const auto& c : a.codes) {
            if (!IcdCode::parse(c)) return 0;
          }
          return 1;
        } else if constexpr (std::is_same_v<T, DrugAnswer>) {
          return nonempty_all(a.drugs) ? 1 : 0;
        } else if constexpr (std::is_same_v<T, TestAnswer>) {
          return nonempty_all(a.tests) ? 1 : 0;
        } else {
          if (a.letters.empty()) return 0;
          for (char c : a.letters) {
            if (exam_options.find(c) == std::string_view::npos) return 0;
          }
          return 1;
        }
      },
      parsed.payload);
}

RewardBreakdown combine(double rule_score, bool conclusive, std::optional<double> model_score,
                        int format_score, double format_weight) {
  auto in_unit = [](double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; };
  if (!in_unit(rule_score) || (model_score && !in_unit(*model_score)) ||
      (format_score != 0 && format_score != 1) || !in_unit(format_weight)) {
    throw std::invalid_argument("combine: scores must lie in [0,1]");
  }
  RewardBreakdown b;
  b.rule_score = rule_score;
  b.model_score = model_score;
  b.format_score = format_score;
  b.conclusive = conclusive;
  b.content = (conclusive || !model_score) ? rule_score : std::max(rule_score, *model_score);
  b.final_score = std::clamp((1.0 - format_weight) * b.content + format_weight * format_score,
                             0.0, 1.0);
  return b;
}

Verifier::Verifier(VerifierConfig config, std::shared_ptr<ModelScorer> scorer,
                   SynonymTable synonyms)
    : config_(config), scorer_(std::move(scorer)), synonyms_(std::move(synonyms)) {
  if (config_.scorer_samples < 1) throw std::invalid_argument("scorer_samples must be >= 1");
}

RewardBreakdown Verifier::score(std::string_view prompt, std::string_view response,
                                const GoldLabel& gold) const {
  return score_parsed(prompt, parse_response(kind_of(gold), response), gold);
}

RewardBreakdown Verifier::score_parsed(std::string_view prompt, const ParsedOutput& parsed,
                                       const GoldLabel& gold) const {
  const TaskKind kind = kind_of(gold);
  if (parsed.kind != kind) throw std::invalid_argument("parsed output kind does not match gold");

  double rule = 0.0;
  bool conclusive = true;
  std::string_view options = kDefaultOptions;
  switch (kind) {
    case TaskKind::Diagnosis: {
      const auto v = verify_icd(parsed_icd_codes(parsed), std::get<IcdGold>(gold).codes);
      rule = v.rule_score;
      conclusive = v.conclusive;
      break;
    }
    case TaskKind::DrugUse: {
      const auto& a = std::get<DrugAnswer>(parsed.payload);
      const auto v = verify_drugs(a.drugs, std::get<DrugGold>(gold).entities, &synonyms_);
      rule = v.rule_score;
      conclusive = v.conclusive;
      break;
    }
    case TaskKind::TestOrdering: {
      std::string joined;
      for (const auto& t : std::get<TestAnswer>(parsed.payload).tests) {
        if (!joined.empty()) joined += "; ";
        joined += t;
      }
      rule = verify_tests(joined, std::get<TestGold>(gold).keywords);
      break;
    }
    case TaskKind::ExamQuestion: {
      const auto& g = std::get<ExamGold>(gold);
      rule = verify_exam(std::get<ExamResponse>(parsed.payload).letters, g,
                         config_.multi_response_partial_credit);
      options = g.options;
      break;
    }
  }
  const int fmt = format_reward(parsed, kind, options);

  // Only the diagnosis and drug verifiers have a model component.
  const bool wants_model = !conclusive && scorer_ &&
                           (kind == TaskKind::Diagnosis || kind == TaskKind::DrugUse);
  if (!wants_model) return combine(rule, conclusive, std::nullopt, fmt, config_.format_weight);

  try {
    double sum = 0.0;
    for (int i = 0; i < config_.scorer_samples; ++i) {
      const double s = scorer_->score(prompt, parsed.raw_text, gold);
      if (!std::isfinite(s) || s < 0.0 || s > 1.0) throw ScorerError("scorer value out of range");
      sum += s;
    }
    return combine(rule, conclusive, sum / config_.scorer_samples, fmt, config_.format_weight);
  } catch (const std::exception&) {
    auto b = combine(rule, true, std::nullopt, fmt, config_.format_weight);
    b.conclusive = conclusive;
    b.degraded = true;
    return b;
  }
}

}  // namespace medrl
