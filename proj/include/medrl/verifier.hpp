#pragma once

// Rule-first hybrid verifier: per-task rule scorers, a format-adherence
// reward, and a blend with an optional model-based fallback scorer.

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace medrl {

enum class TaskKind { Diagnosis, DrugUse, TestOrdering, ExamQuestion };

inline constexpr std::array<TaskKind, 4> kAllTaskKinds = {
    TaskKind::Diagnosis, TaskKind::DrugUse, TaskKind::TestOrdering,
    TaskKind::ExamQuestion};

std::string_view to_string(TaskKind kind);
// Accepts the snake_case names produced by to_string.
TaskKind task_kind_from_string(std::string_view name);

struct IcdCode {
  std::string full_code;  // uppercase, dotted form, e.g. "E11.9"
  std::string category;   // first three characters, e.g. "E11"

  // Letter + 2 digits + optional ('.'?) + 1-2 digits. Case and surrounding
  // whitespace are normalized; "e119" parses to "E11.9".
  static std::optional<IcdCode> parse(std::string_view text);

  bool operator==(const IcdCode&) const = default;
};

inline constexpr std::string_view kDefaultOptions = "ABCDE";

struct IcdGold {
  std::vector<IcdCode> codes;
};
struct DrugGold {
  std::set<std::string> entities;
};
struct TestGold {
  std::set<std::string> keywords;
};
struct ExamGold {
  std::set<char> letters;
  bool multiple_response = false;
  std::string options = std::string(kDefaultOptions);
};

using GoldLabel = std::variant<IcdGold, DrugGold, TestGold, ExamGold>;

TaskKind kind_of(const GoldLabel& gold);
// Throws std::invalid_argument when the label is empty or malformed.
void validate_gold(const GoldLabel& gold);
std::string describe_gold(const GoldLabel& gold);

struct DiagnosisAnswer {
  std::vector<std::string> codes;  // uppercased as emitted, order preserved
};
struct DrugAnswer {
  std::vector<std::string> drugs;
};
struct TestAnswer {
  std::vector<std::string> tests;
};
struct ExamResponse {
  std::set<char> letters;
};

using AnswerPayload = std::variant<DiagnosisAnswer, DrugAnswer, TestAnswer, ExamResponse>;

struct ParsedOutput {
  TaskKind kind = TaskKind::ExamQuestion;
  std::string raw_text;
  bool format_valid = false;
  AnswerPayload payload;
};

// Extracts the last well-formed JSON object in `text` and maps its fields by
// task kind. Never throws on bad model output; format_valid=false instead.
ParsedOutput parse_response(TaskKind kind, std::string_view text);

// Valid codes from a diagnosis answer, in emitted order; invalid ones dropped.
std::vector<IcdCode> parsed_icd_codes(const ParsedOutput& parsed);

class SynonymTable {
 public:
  // TSV lines `surface<TAB>canonical`; blank lines and '#' comments skipped.
  static SynonymTable load_tsv(const std::string& path);
  static SynonymTable parse_tsv(std::string_view contents);

  void add(std::string_view surface, std::string_view canonical);
  // Normalized canonical form of `entity` (itself if not in the table).
  std::string canonical(std::string_view entity) const;
  std::size_t size() const { return map_.size(); }

 private:
  std::map<std::string, std::string> map_;
};

struct IcdVerdict {
  double rule_score = 0.0;
  bool top1_hit = false;
  double recall = 0.0;  // credit-weighted recall over gold codes
  bool conclusive = true;
};

struct RuleVerdict {
  double rule_score = 0.0;
  bool conclusive = true;
};

// Per gold code: 1.0 exact, 0.5 same 3-character category, else 0.
IcdVerdict verify_icd(std::span<const IcdCode> pred, std::span<const IcdCode> gold);

RuleVerdict verify_drugs(std::span<const std::string> pred,
                         const std::set<std::string>& gold,
                         const SynonymTable* synonyms = nullptr);

double verify_tests(std::string_view pred_text, const std::set<std::string>& gold);

// Strict set equality unless partial_credit is set for multiple-response
// items, in which case a wrong-free subset earns |pred| / |gold|.
double verify_exam(const std::set<char>& pred, const ExamGold& gold,
                   bool partial_credit = false);

int format_reward(const ParsedOutput& parsed, TaskKind kind,
                  std::string_view exam_options = kDefaultOptions);

inline constexpr double kDefaultFormatWeight = 0.2;

struct RewardBreakdown {
  double rule_score = 0.0;
  std::optional<double> model_score;
  int format_score = 0;
  double content = 0.0;
  double final_score = 0.0;
  bool conclusive = true;
  bool degraded = false;  // model scorer failed; rule path used
};

RewardBreakdown combine(double rule_score, bool conclusive,
                        std::optional<double> model_score, int format_score,
                        double format_weight = kDefaultFormatWeight);

class ModelScorer;

struct VerifierConfig {
  double format_weight = kDefaultFormatWeight;
  int scorer_samples = 8;  // independent scorer calls averaged per fallback
  bool multi_response_partial_credit = false;
};

class Verifier {
 public:
  explicit Verifier(VerifierConfig config = {},
                    std::shared_ptr<ModelScorer> scorer = nullptr,
                    SynonymTable synonyms = {});

  RewardBreakdown score(std::string_view prompt, std::string_view response,
                        const GoldLabel& gold) const;
  RewardBreakdown score_parsed(std::string_view prompt, const ParsedOutput& parsed,
                               const GoldLabel& gold) const;

  const VerifierConfig& config() const { return config_; }
  bool has_model_scorer() const { return scorer_ != nullptr; }

 private:
  VerifierConfig config_;
  std::shared_ptr<ModelScorer> scorer_;
  SynonymTable synonyms_;
};

}  // namespace medrl
