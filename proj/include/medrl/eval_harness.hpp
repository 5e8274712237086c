#pragma once

// Benchmark evaluation: adapters, capped sampling, prompting, client runs,
// scoring (rule path for choice items, judge for open-ended), aggregation.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "medrl/model_client.hpp"
#include "medrl/verifier.hpp"

namespace medrl::eval {

inline constexpr std::size_t kDefaultCap = 1000;
inline constexpr double kDefaultTemperature = 0.6;

enum class QuestionType { MultipleChoice, MultipleResponse, SharedStem, CaseAnalysis, OpenEnded };
inline constexpr std::array<QuestionType, 5> kAllQuestionTypes = {
    QuestionType::MultipleChoice, QuestionType::MultipleResponse, QuestionType::SharedStem,
    QuestionType::CaseAnalysis, QuestionType::OpenEnded};
inline constexpr std::array<const char*, 4> kSubjectLevels = {"Primary", "Intermediate",
                                                              "Associate Senior", "Senior"};

std::string_view to_string(QuestionType t);
QuestionType question_type_from_string(std::string_view s);
bool is_choice(QuestionType t);

struct BenchmarkItem {
  std::string id;
  std::string benchmark;
  std::string question;
  std::map<char, std::string> options;  // choice types only
  QuestionType question_type = QuestionType::MultipleChoice;
  std::optional<ExamGold> exam_gold;    // choice types
  std::string reference;                // open-ended reference answer
  double max_score = 1.0;               // open-ended grading scale (4 for CMB-clin style)
  std::string subject;
  std::string subset;
};

struct LineError {
  std::size_t line_no = 0;
  std::string message;
};

struct LoadResult {
  std::vector<BenchmarkItem> items;
  std::vector<LineError> errors;
  std::size_t total_lines = 0;
};

class BenchmarkLoadError : public std::runtime_error {
 public:
  BenchmarkLoadError(const std::string& what, LoadResult partial)
      : std::runtime_error(what), report(std::move(partial)) {}
  LoadResult report;
};

// Adapters: "mcq", "multi_response", "open_ended". `subset` keeps only items
// whose subset field matches case-insensitively (empty keeps all). Throws
// BenchmarkLoadError when malformed lines exceed `max_malformed_fraction`.
LoadResult load_benchmark(const std::string& path, const std::string& schema,
                          const std::string& subset = "", const std::string& benchmark_name = "",
                          double max_malformed_fraction = 0.01);
LoadResult parse_benchmark(std::string_view contents, const std::string& schema,
                           const std::string& benchmark_name, const std::string& subset = "",
                           double max_malformed_fraction = 0.01);

// All items when |items| <= cap; otherwise the cap items with the smallest
// seeded hash of their id, in input order.
std::vector<BenchmarkItem> uniform_sample(std::span<const BenchmarkItem> items, std::size_t cap,
                                          std::uint64_t seed);

struct PromptSpec {
  // Placeholders: {question} {options} {answer_format} {subject}
  std::string tmpl = "{question}\n\n{options}{answer_format}";
  std::string leading_text;  // prepended with a blank line when set
};

std::string build_prompt(const BenchmarkItem& item, const PromptSpec& spec = {});

// Response echoing the gold answer in the expected JSON form.
std::string gold_response(const BenchmarkItem& item);
// Gold-echo mock keyed by the prompts `spec` produces for `items`.
TableClient make_gold_echo(std::span<const BenchmarkItem> items, const PromptSpec& spec = {});

struct RunOptions {
  double temperature = kDefaultTemperature;
  int parallelism = 1;
};

// One completion per item, in item order. Client failures are recorded in
// the transcript's error field.
std::vector<Transcript> run_eval(std::span<const BenchmarkItem> items, ModelClient& client,
                                 const PromptSpec& spec = {}, const RunOptions& options = {});

struct JudgeSpec {
  // Placeholders: {question} {reference} {response} {max_score}
  std::string rubric =
      "Grade the candidate answer against the reference on a 0-{max_score} scale. "
      "Award full marks for a complete, correct and safe answer; deduct for omissions, "
      "errors and unsafe advice.\n\nQuestion:\n{question}\n\nReference answer:\n{reference}\n\n"
      "Candidate answer:\n{response}\n\nReply with the numeric grade only.";
  double temperature = 0.0;
};

struct ItemScore {
  std::string item_id;
  std::string benchmark;
  std::string subject;
  QuestionType question_type = QuestionType::MultipleChoice;
  double raw = 0.0;         // on the item's own scale
  double max_score = 1.0;
  double normalized = 0.0;  // in [0,1]
  bool answered = true;
  std::string flag;         // unanswered, judge_unparsable, judge_failed
};

// Throws std::invalid_argument for an open-ended item without a judge.
ItemScore score_item(const BenchmarkItem& item, const Transcript& transcript,
                     ModelClient* judge = nullptr, const JudgeSpec& judge_spec = {});

// [0,4] -> [0,1]; throws std::out_of_range outside.
double normalize_cmb(double score_4pt);

struct CellStat {
  std::size_t n = 0;
  double sum = 0.0;
  double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
};

struct EvalReport {
  // (benchmark, subject, question_type) -> normalized accuracy
  std::map<std::tuple<std::string, std::string, QuestionType>, CellStat> cells;
  std::map<std::string, CellStat> per_benchmark;
  std::optional<double> overall;  // mean of per-benchmark means
  std::size_t items = 0;
  std::size_t unanswered = 0;
  std::vector<ItemScore> records;
};

// Throws std::logic_error if any normalized value lies outside [0,1].
EvalReport aggregate_report(std::span<const ItemScore> scores);
std::string render_markdown(const EvalReport& report);
std::string render_csv(const EvalReport& report);
std::string render_items_csv(const EvalReport& report);

}  // namespace medrl::eval
