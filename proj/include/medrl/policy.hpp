#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "medrl/reward_lab.hpp"
#include "medrl/verifier.hpp"

namespace medrl::rl {

using reward::FeatureVector;

struct Candidate {
  std::string payload;  // response text the verifier parses
  FeatureVector features;
};

// One training instance; its candidates are the policy's action space.
struct Sample {
  std::string id;
  TaskKind kind = TaskKind::ExamQuestion;
  std::string prompt;
  std::vector<Candidate> candidates;
  GoldLabel gold;
  std::string strata_label;
};

// Throws std::invalid_argument on < 2 candidates, ragged features, kind/gold
// mismatch or an invalid gold label.
void validate_sample(const Sample& s);

nlohmann::json to_json(const Sample& s);
Sample sample_from_json(const nlohmann::json& j);

std::vector<Sample> load_dataset(const std::string& path);
void save_dataset(const std::string& path, std::span<const Sample> samples);

// Linear-softmax policy: pi(a) = softmax(theta . f_a / temperature).
struct Policy {
  std::vector<double> theta;
  double temperature = 1.0;

  static Policy zeros(std::size_t dim, double temperature = 1.0);

  std::vector<double> log_probabilities(const Sample& s) const;
  std::vector<double> probabilities(const Sample& s) const;
  // argmax of the logits; ties go to the lowest index
  std::size_t greedy_action(const Sample& s) const;
};

nlohmann::json to_json(const Policy& p);
Policy policy_from_json(const nlohmann::json& j);

// Mean feature vector under `probs`.
std::vector<double> expected_features(const Sample& s, std::span<const double> probs);

}  // namespace medrl::rl
