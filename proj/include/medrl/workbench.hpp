#pragma once

// End-to-end orchestration shared by the CLI: verifier construction,
// objectives for ratio search, fixture benchmarks, the demo pipeline and the
// consolidated report.

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medrl/data_pipeline.hpp"
#include "medrl/model_client.hpp"
#include "medrl/ratio_optimizer.hpp"
#include "medrl/run_config.hpp"

namespace medrl::workbench {

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage " + stage + " failed: " + what), stage(std::move(stage)) {}
  std::string stage;
};

Verifier make_verifier(const RunConfig& cfg);

// f(r) = -|r - target|^2
bo::Objective synthetic_objective(std::vector<double> target);

// Trains GRPO on a ratio-weighted mixture drawn from `pool` and returns the
// weighted overall held-out accuracy across the four task kinds.
bo::Objective train_objective(std::vector<rl::Sample> pool, std::vector<rl::Sample> heldout,
                              const RunConfig& cfg);

std::vector<data::SpoTriple> demo_triples();

struct FixtureBenchmarks {
  std::string mcq;             // JSONL, mcq adapter
  std::string multi_response;  // JSONL, multi_response adapter
  std::string open_ended;      // JSONL, open_ended adapter (4-point)
};
FixtureBenchmarks fixture_benchmarks(std::uint64_t seed);

// Grades by content-token recall of the reference, scaled to the item's
// maximum and rounded to 0.5; replies "Grade: x".
std::unique_ptr<eval::ModelClient> make_overlap_judge();

struct DemoResult {
  std::string run_dir;
  nlohmann::json summary;
  std::string report;
  std::string report_hash;  // 16 hex digits, FNV-1a of the report bytes
};

// Runs every stage and writes artifacts under run_dir. Throws StageError
// after persisting whatever was produced.
DemoResult run_demo(const RunConfig& cfg, const std::string& run_dir);

std::string render_report(const nlohmann::json& summary);
std::string report_hash(const std::string& report);

}  // namespace medrl::workbench
