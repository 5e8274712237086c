#pragma once

// Data curation: label-stratified sampling, difficulty band filtering,
// template-based SPO -> sentence rendering with inverse-pattern extraction
// and round-trip quality filtering, plus mixing/selection helpers.

#include <cstdint>
#include <functional>
#include <map>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medrl/policy.hpp"
#include "medrl/rl_engine.hpp"

namespace medrl::data {

struct SpoTriple {
  std::string subject;
  std::string predicate;
  std::string object;
  bool operator==(const SpoTriple&) const = default;
};

std::string to_string(const SpoTriple& t);

struct TsvError {
  std::size_t line_no = 0;
  std::string message;
};

struct TripleFile {
  std::vector<SpoTriple> triples;
  std::vector<TsvError> errors;
};

// `subject<TAB>predicate<TAB>object`; blank lines and '#' comments skipped.
TripleFile parse_triples_tsv(std::string_view contents);
TripleFile read_triples_tsv(const std::string& path);
std::string to_tsv(std::span<const SpoTriple> triples);

struct PredicateSpec {
  std::vector<std::string> templates;  // each with one {S} then one {O}
  std::string pattern;                 // full-sentence inverse regex
  int subject_group = 1;
  int object_group = 2;
  std::regex compiled;
};

class TemplateSet {
 public:
  // {"predicates": {name: {"templates": [...], "pattern": "...",
  //                        "subject_group": 1, "object_group": 2}}}
  static TemplateSet from_json(const nlohmann::json& j);
  static TemplateSet load(const std::string& path);
  // treats, indicates, contraindicated_for, diagnosed_by, causes, prevents.
  static TemplateSet builtin();
  static const char* builtin_json();

  bool has(std::string_view predicate) const;
  const PredicateSpec& spec(std::string_view predicate) const;
  const std::map<std::string, PredicateSpec, std::less<>>& predicates() const { return specs_; }

 private:
  std::map<std::string, PredicateSpec, std::less<>> specs_;
};

// Sampled indices into `labels` (ascending): up to `per_label_target` per
// label, uniformly without replacement, deterministic per seed.
std::vector<std::size_t> stratified_indices(std::span<const std::string> labels,
                                            std::size_t per_label_target, std::uint64_t seed);

template <typename T>
std::vector<T> stratified_sample(std::span<const T> records,
                                 const std::function<std::string(const T&)>& label_of,
                                 std::size_t per_label_target, std::uint64_t seed) {
  std::vector<std::string> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(label_of(r));
  std::vector<T> out;
  for (std::size_t i : stratified_indices(labels, per_label_target, seed)) out.push_back(records[i]);
  return out;
}

struct DifficultyStats {
  std::string sample_id;
  double pass_rate = 0.0;
  int k = 0;
};

struct DifficultyResult {
  std::vector<std::size_t> kept;  // dataset indices, input order
  std::vector<DifficultyStats> stats;
};

// Keeps samples whose pass rate over k probe rollouts lies in [lo, hi].
DifficultyResult difficulty_filter(std::span<const rl::Sample> dataset, const rl::Policy& policy,
                                   const rl::RewardTable& rewards, int k, double lo, double hi,
                                   std::uint64_t seed, int parallelism = 1);

// Throws on empty fields, unknown predicate or variant out of range.
std::string spo_to_text(const SpoTriple& triple, const TemplateSet& templates,
                        std::size_t variant_index = 0);

// Splits text at sentence-final periods and applies every predicate pattern
// to each sentence. Predicates are tried in name order.
std::vector<SpoTriple> extract_triples(std::string_view text, const TemplateSet& templates);

struct QualityLimits {
  std::size_t max_field_chars = 120;
  std::size_t max_sentence_chars = 320;
};

struct AcceptedSentence {
  SpoTriple triple;
  std::size_t variant = 0;
  std::string sentence;
};

struct RejectedTriple {
  SpoTriple triple;
  std::string reason;  // empty_field, unknown_predicate, length, charset, roundtrip_mismatch
  std::string detail;
};

struct RoundtripResult {
  std::vector<AcceptedSentence> accepted;
  std::vector<RejectedTriple> rejected;
};

// A triple is accepted only if every template variant re-extracts to exactly
// [triple]; each variant sentence is then emitted.
RoundtripResult roundtrip_filter(std::span<const SpoTriple> triples, const TemplateSet& templates,
                                 const QualityLimits& limits = {});

nlohmann::json to_json(const AcceptedSentence& s);
nlohmann::json to_json(const RejectedTriple& r);

// Interleaves two pools at approximately ratio:1 (primary:secondary) up to
// `total` items, sampling each pool without replacement per seed. Returns
// (pool, index) pairs; pool 0 is primary.
std::vector<std::pair<int, std::size_t>> mix_by_ratio(std::size_t primary_n, std::size_t secondary_n,
                                                      double ratio, std::size_t total,
                                                      std::uint64_t seed);

// Indices of the k groups with the largest population std of rollout rewards
// (ties by index), returned in input order.
std::vector<std::size_t> select_by_reward_diversity(
    std::span<const std::vector<double>> group_rewards, std::size_t k);

}  // namespace medrl::data
