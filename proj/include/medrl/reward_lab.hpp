#pragma once

// Preference-based reward machinery: Bradley-Terry fitting over engineered
// response features, pair generation from scored rollouts, dimension
// aggregation, a reasoning/summary consistency heuristic, re-labeling
// selection and a length-vs-reward audit.

#include <nlohmann/json.hpp>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace medrl::reward {

using FeatureVector = std::vector<double>;

enum class PairSource { Generated, Human, Synthetic };

std::string_view to_string(PairSource s);
PairSource pair_source_from_string(std::string_view s);

struct PreferencePair {
  std::string prompt_id;
  FeatureVector chosen;
  FeatureVector rejected;
  PairSource source = PairSource::Generated;
  int chosen_index = -1;  // rollout indices within the prompt group, when known
  int rejected_index = -1;
  double margin = 0.0;
  bool low_margin = false;
};

nlohmann::json to_json(const PreferencePair& p);
PreferencePair pair_from_json(const nlohmann::json& j);

struct RewardModelParams {
  std::vector<double> weights;
  double bias = 0.0;
  double l2 = 0.0;
};

nlohmann::json to_json(const RewardModelParams& p);
RewardModelParams params_from_json(const nlohmann::json& j);

struct BtConfig {
  double lr = 0.5;
  int epochs = 300;
  double l2 = 1e-3;
};

struct BtFit {
  RewardModelParams params;
  double log_likelihood = 0.0;           // sum over pairs at the returned params
  std::vector<double> loglik_history;    // after each epoch
  std::vector<double> objective_history; // loglik - l2*|w|^2 after each epoch
  bool degenerate = false;               // every pair had identical features
};

// Full-batch gradient ascent on sum log sigmoid(s(chosen) - s(rejected)) -
// l2*|w|^2 with s(x) = w.x + b. The step is lr times the per-pair mean
// gradient. The bias cancels in every pair and is left at zero.
BtFit fit_bradley_terry(std::span<const PreferencePair> pairs, const BtConfig& config);

// w.x + b. Throws std::invalid_argument on dimension mismatch.
double score(const RewardModelParams& params, std::span<const double> features);

// P(chosen beats rejected) under the fitted model.
double preference_probability(const RewardModelParams& params, std::span<const double> chosen,
                              std::span<const double> rejected);

// Kendall tau-a between two score vectors over the same items.
double kendall_tau(std::span<const double> a, std::span<const double> b);

struct ScoredRollout {
  int index = 0;
  FeatureVector features;
  double reward = 0.0;
};

struct ScoredGroup {
  std::string prompt_id;
  std::vector<ScoredRollout> rollouts;
};

struct PairGeneration {
  std::vector<PreferencePair> pairs;
  std::size_t skipped = 0;     // groups with fewer than two rollouts
  std::size_t low_margin = 0;  // pairs whose reward gap is below min_margin
};

// One pair per group: highest vs lowest reward, ties to the lowest rollout
// position. When every reward ties, the pair is (first, second).
PairGeneration generate_preference_pairs(std::span<const ScoredGroup> groups,
                                         double min_margin = 1e-9);

struct DimensionWeights {
  double honesty = 0.4;
  double helpfulness = 0.3;
  double consistency = 0.2;
  double compliance = 0.1;
};

struct DimensionScores {
  double honesty = 0.0;
  double helpfulness = 0.0;
  double consistency = 0.0;
  double compliance = 0.0;
  DimensionWeights weights;
};

// Weighted sum; throws when weights are off the simplex or a score is
// outside [0,1].
double aggregate_dimensions(const DimensionScores& d);

// Lowercased numbers and non-stopword words of three or more letters.
std::set<std::string> content_tokens(std::string_view text);

// Fraction of the summary's content tokens that also occur in the reasoning;
// 1.0 when the summary has none.
double consistency_heuristic(std::string_view reasoning, std::string_view summary);

struct CandidateScores {
  std::string prompt_id;
  std::vector<double> scores;
};

struct FlaggedGroup {
  std::string prompt_id;
  double gap = 0.0;
};

inline constexpr double kDefaultAmbiguityMargin = 0.05;

// Groups whose best-vs-second-best gap is below tau.
std::vector<FlaggedGroup> active_learning_select(std::span<const CandidateScores> groups,
                                                 double tau = kDefaultAmbiguityMargin);

struct LengthRewardPoint {
  double length = 0.0;
  double reward = 0.0;
};

struct LengthAudit {
  std::size_t n = 0;
  double correlation = 0.0;
  bool zero_variance = false;
  bool warn = false;
  double warn_threshold = 0.8;
};

// Pearson correlation of length and reward. Needs >= 10 points.
LengthAudit length_hack_audit(std::span<const LengthRewardPoint> points,
                              double warn_threshold = 0.8);
std::string render_markdown(const LengthAudit& audit);

}  // namespace medrl::reward
