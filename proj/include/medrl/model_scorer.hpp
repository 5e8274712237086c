#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "medrl/http_chat.hpp"
#include "medrl/verifier.hpp"

namespace medrl {

class ScorerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model-based fallback scorer. Returns a value in [0,1] or throws
// ScorerError.
class ModelScorer {
 public:
  virtual ~ModelScorer() = default;
  virtual double score(std::string_view prompt, std::string_view response,
                       const GoldLabel& gold) = 0;
};

// Deterministic scorer for tests and offline runs.
class StubScorer : public ModelScorer {
 public:
  using Fn = std::function<double(std::string_view, std::string_view, const GoldLabel&)>;

  explicit StubScorer(double fixed) : fn_([fixed](auto, auto, const auto&) { return fixed; }) {}
  explicit StubScorer(Fn fn) : fn_(std::move(fn)) {}

  double score(std::string_view prompt, std::string_view response,
               const GoldLabel& gold) override {
    return fn_(prompt, response, gold);
  }

 private:
  Fn fn_;
};

struct HttpScorerConfig {
  ChatEndpoint endpoint;
  double temperature = 0.6;
  // Placeholders: {prompt} {response} {gold}
  std::string prompt_template =
      "You are grading a medical answer against a reference.\n"
      "Question:\n{prompt}\n\nReference answer:\n{gold}\n\nCandidate answer:\n{response}\n\n"
      "Account for synonyms, coding hierarchies and incomplete reference labels. "
      "Reply with a single score between 0 and 1.";
  // First capture group must hold the number.
  std::string score_regex = R"(([0-9]+(?:\.[0-9]+)?))";
};

// Maps a raw number to [0,1]: values in [0,1] pass through, values in
// (1,100] are divided by 100. Anything else throws ScorerError.
double scale_score(double raw);

// Extracts the score from judge text with `pattern`; throws ScorerError.
double extract_score(std::string_view text, const std::string& pattern);

std::string fill_scorer_prompt(const std::string& tmpl, std::string_view prompt,
                               std::string_view response, const GoldLabel& gold);

class HttpModelScorer : public ModelScorer {
 public:
  explicit HttpModelScorer(HttpScorerConfig config);

  double score(std::string_view prompt, std::string_view response,
               const GoldLabel& gold) override;

 private:
  HttpScorerConfig config_;
  ChatHttp http_;
};

}  // namespace medrl
