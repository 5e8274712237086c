#pragma once

// Run configuration: one JSON document (// and /* */ comments allowed),
// validated before any work starts. Unknown keys are rejected at every level.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medrl/http_chat.hpp"
#include "medrl/model_scorer.hpp"
#include "medrl/reward_lab.hpp"
#include "medrl/rl_engine.hpp"
#include "medrl/verifier.hpp"

namespace medrl {

struct PathsConfig {
  std::string dataset;    // empty: generate the planted curriculum
  std::string heldout;
  std::string templates;  // empty: built-in template set
  std::string triples;    // empty: built-in demo triples
  std::string synonyms;
  std::string output_dir = "runs/latest";
};

struct ScorerSettings {
  bool enabled = false;
  HttpScorerConfig http;
};

struct RewardModelSettings {
  reward::BtConfig bt;
  double tau = 0.05;
  double length_warn = 0.8;
};

struct BoSettings {
  std::size_t tasks = 4;
  std::size_t budget = 40;
  std::size_t init_n = 8;
  std::size_t n_candidates = 2000;
  std::string objective = "synthetic";     // synthetic | train
  std::vector<double> target = {0.4, 0.3, 0.2, 0.1};  // optimum of the synthetic objective
  std::vector<double> weights;             // ability weights; empty means uniform
  std::size_t mixture_size = 240;          // train objective: samples per mixture
  int mixture_epochs = 10;
};

struct ClientSettings {
  std::string kind = "mock";  // http | replay | mock
  ChatEndpoint endpoint;
  std::string transcripts;    // replay source
};

struct EvalSettings {
  double temperature = 0.6;
  std::size_t cap = 1000;
  std::string leading_text;
  std::string prompt_template;  // empty: default
  ClientSettings client;
  ClientSettings judge;         // mock judge grades by token overlap with the reference
};

struct RunConfig {
  std::uint64_t seed = 7;
  int parallelism = 0;  // 0: logical core count
  PathsConfig paths;
  rl::TrainConfig train = rl::TrainConfig::stage2();
  VerifierConfig verifier;
  ScorerSettings scorer;
  RewardModelSettings reward_model;
  BoSettings bo;
  EvalSettings eval;

  int workers() const;
  void validate() const;  // throws std::invalid_argument
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& c);

// Defaults used by the demo and when no --config is given.
RunConfig default_run_config();

}  // namespace medrl
