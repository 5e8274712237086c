#pragma once

// Desk-scale RL over categorical candidate sets: rollouts, group-relative
// advantages, a clipped GRPO surrogate with exact KL to a reference policy,
// a DPO baseline, per-epoch dynamic resampling and the multi-task loop.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medrl/policy.hpp"
#include "medrl/verifier.hpp"

namespace medrl::rl {

// Rewards at or above this count as a pass when binarizing graded rewards.
inline constexpr double kPassReward = 0.99;
inline constexpr double kAdvantageEps = 1e-8;

struct RolloutGroup {
  std::string sample_id;
  std::size_t sample_index = 0;  // position in the dataset span
  std::vector<std::size_t> actions;
  std::vector<double> logp_old;  // behaviour policy at rollout time
  std::vector<double> logp_ref;  // reference policy (filled when given)
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> weights;  // per-member weight; empty means 1/G
};

struct TrainConfig {
  int group_size = 32;
  double kl_coef = 0.01;
  double clip_eps = 0.2;
  double lr = 1.0;
  int epochs = 50;
  int batch_size = 64;
  int inner_steps = 1;
  bool backtracking = true;   // halve the step until the batch objective improves
  bool dynamic_resampling = true;
  double resample_threshold = 0.9;
  int max_skip_epochs = 2;    // a mastered sample is re-rolled after this many skips
  double dpo_beta = 0.5;
  int ref_refresh_epochs = 0; // 0: reference stays the initial snapshot
  double temperature = 1.0;
  std::uint64_t seed = 0;
  int parallelism = 1;

  static TrainConfig stage1();  // G = 32
  static TrainConfig stage2();  // G = 8
  void validate() const;
};

// Verifier rewards for every (sample, candidate), computed once.
class RewardTable {
 public:
  static RewardTable build(std::span<const Sample> dataset, const Verifier& verifier,
                           int parallelism = 1);

  double reward(std::size_t sample, std::size_t action) const {
    return breakdowns_[sample][action].final_score;
  }
  const RewardBreakdown& breakdown(std::size_t sample, std::size_t action) const {
    return breakdowns_[sample][action];
  }
  std::span<const RewardBreakdown> row(std::size_t sample) const { return breakdowns_[sample]; }
  std::vector<double> rewards(std::size_t sample) const;
  std::size_t size() const { return breakdowns_.size(); }

 private:
  std::vector<std::vector<RewardBreakdown>> breakdowns_;
};

// G i.i.d. draws from the policy; deterministic given seed.
RolloutGroup rollout(const Policy& policy, const Sample& sample, int group_size,
                     std::uint64_t seed, const Policy* reference = nullptr);

// (r - mean) / std_pop; all zeros when std_pop <= kAdvantageEps.
std::vector<double> group_advantages(std::span<const double> rewards);

// Sum p log(p/q). Throws on size mismatch or q = 0 where p > 0.
double kl_categorical(std::span<const double> p, std::span<const double> q);

// Enumerated group with every candidate weighted by its probability and
// probability-weighted normalized advantages: the G -> infinity limit of
// sampled groups.
RolloutGroup expected_group(const Policy& policy, const Sample& sample,
                            std::span<const double> candidate_rewards,
                            std::size_t sample_index = 0);

// Batch objective: mean over groups of the weighted clipped surrogate minus
// kl_coef * mean exact KL(pi || pi_ref).
double grpo_objective(const Policy& policy, const Policy& reference,
                      std::span<const RolloutGroup> groups, std::span<const Sample> dataset,
                      const TrainConfig& config);

std::vector<double> grpo_gradient(const Policy& policy, const Policy& reference,
                                  std::span<const RolloutGroup> groups,
                                  std::span<const Sample> dataset, const TrainConfig& config);

struct StepMetrics {
  double mean_reward = 0.0;
  double mean_kl = 0.0;        // after the step
  double clip_fraction = 0.0;  // members whose ratio was clipped on the last inner step
  double objective_before = 0.0;
  double objective_after = 0.0;
  double step_size = 0.0;      // accepted lr multiple on the last inner step
  bool aborted = false;
  std::string message;
};

StepMetrics grpo_update(Policy& policy, const Policy& reference,
                        std::span<const RolloutGroup> groups, std::span<const Sample> dataset,
                        const TrainConfig& config);

struct DpoPair {
  std::size_t sample_index = 0;
  std::size_t chosen = 0;
  std::size_t rejected = 0;
};

// Mean implicit-reward margin beta*[(lp_w - lpref_w) - (lp_l - lpref_l)].
double dpo_margin(const Policy& policy, const Policy& reference, std::span<const DpoPair> pairs,
                  std::span<const Sample> dataset, double beta);
// Mean of -log sigmoid(margin) over pairs.
double dpo_loss(const Policy& policy, const Policy& reference, std::span<const DpoPair> pairs,
                std::span<const Sample> dataset, double beta);

struct DpoStep {
  double loss_before = 0.0;
  double loss_after = 0.0;
  double margin_before = 0.0;
  double margin_after = 0.0;
  bool aborted = false;
};

DpoStep dpo_update(Policy& policy, const Policy& reference, std::span<const DpoPair> pairs,
                   std::span<const Sample> dataset, double beta, double lr,
                   bool backtracking = false);

struct PassStats {
  std::size_t sample_index = 0;
  int passes = 0;
  int rollouts = 0;
  double pass_rate() const { return rollouts == 0 ? 0.0 : static_cast<double>(passes) / rollouts; }
};

inline bool is_mastered(const PassStats& s, double threshold) {
  return s.rollouts > 0 && s.pass_rate() >= threshold;
}

struct ResampleResult {
  std::vector<std::size_t> retained;  // dataset indices, input order
  std::size_t removed = 0;
  std::vector<PassStats> stats;
  std::size_t rollouts_used = 0;
};

// Probes every sample with G rollouts and drops those whose pass rate is at
// or above `threshold`. The dataset itself is not modified.
ResampleResult dynamic_resample(std::span<const Sample> dataset, const Policy& policy,
                                const RewardTable& rewards, int group_size, double threshold,
                                std::uint64_t seed, int parallelism = 1);

enum class Algo { Grpo, Dpo };
std::string_view to_string(Algo a);
Algo algo_from_string(std::string_view s);

struct KindEpochMetrics {
  int epoch = 0;
  TaskKind kind = TaskKind::ExamQuestion;
  double accuracy = 0.0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_frac = 0.0;
  std::size_t samples_active = 0;
};

struct EpochSummary {
  int epoch = 0;
  std::size_t samples_active = 0;
  std::size_t removed = 0;
  std::size_t rollouts = 0;
  double mastered_fraction = 0.0;  // from cached pass rates at epoch start
  double accuracy = 0.0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_frac = 0.0;
  double dpo_loss = 0.0;
};

struct TrainResult {
  Policy policy;
  Policy reference;
  std::vector<EpochSummary> epochs;
  std::vector<KindEpochMetrics> per_kind;
  std::string status;  // "completed", "mastered" or "aborted"
  std::size_t total_rollouts = 0;
  std::size_t update_steps = 0;
  std::size_t aborted_steps = 0;  // updates skipped on non-finite values
};

TrainResult train(std::span<const Sample> dataset, const TrainConfig& config,
                  const Verifier& verifier, Algo algo);
TrainResult train(std::span<const Sample> dataset, const TrainConfig& config,
                  const RewardTable& rewards, Algo algo, const Policy* initial = nullptr);

// epoch,kind,accuracy,mean_reward,mean_kl,clip_frac,samples_active
std::string metrics_csv(const TrainResult& result);

struct KindScore {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / n; }
};

struct PolicyEvaluation {
  std::map<TaskKind, KindScore> per_kind;
  double accuracy = 0.0;
  std::size_t diagnosis_n = 0;
  double diagnosis_top1 = 0.0;
  // Mean over diagnosis samples of the summed per-gold credit over the first
  // five returned codes (1 exact, 0.5 same category).
  double diagnosis_list_score = 0.0;
};

inline constexpr std::size_t kListScoreCap = 5;

// Greedy decoding; a sample counts as correct when the chosen candidate's
// reward passes.
PolicyEvaluation evaluate_policy(const Policy& policy, std::span<const Sample> dataset,
                                 const Verifier& verifier);
PolicyEvaluation evaluate_policy(const Policy& policy, std::span<const Sample> dataset,
                                 const RewardTable& rewards);

// Mean over samples of sum_a pi(a) r(a).
double expected_reward(const Policy& policy, std::span<const Sample> dataset,
                       const RewardTable& rewards);
double mean_kl(const Policy& policy, const Policy& reference, std::span<const Sample> dataset);

}  // namespace medrl::rl
