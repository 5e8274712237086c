#include "medrl/rl_engine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "medrl/common.hpp"

namespace medrl::rl {

TrainConfig TrainConfig::stage1() {
  TrainConfig c;
  c.group_size = 32;
  return c;
}

TrainConfig TrainConfig::stage2() {
  TrainConfig c;
  c.group_size = 8;
  return c;
}

void TrainConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (kl_coef < 0.0) throw std::invalid_argument("kl_coef must be >= 0");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("clip_eps must be in (0,1)");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (inner_steps < 1) throw std::invalid_argument("inner_steps must be >= 1");
  if (!(resample_threshold > 0.0 && resample_threshold <= 1.0)) {
    throw std::invalid_argument("resample_threshold must be in (0,1]");
  }
  if (max_skip_epochs < 0) throw std::invalid_argument("max_skip_epochs must be >= 0");
  if (dpo_beta < 0.0) throw std::invalid_argument("dpo_beta must be >= 0");
  if (ref_refresh_epochs < 0) throw std::invalid_argument("ref_refresh_epochs must be >= 0");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
}

RewardTable RewardTable::build(std::span<const Sample> dataset, const Verifier& verifier,
                               int parallelism) {
  RewardTable t;
  t.breakdowns_.resize(dataset.size());
  parallel_for(dataset.size(), parallelism, [&](std::size_t i) {
    const auto& s = dataset[i];
    auto& row = t.breakdowns_[i];
    row.reserve(s.candidates.size());
    for (const auto& c : s.candidates) row.push_back(verifier.score(s.prompt, c.payload, s.gold));
  });
  return t;
}

std::vector<double> RewardTable::rewards(std::size_t sample) const {
  std::vector<double> r;
  r.reserve(breakdowns_[sample].size());
  for (const auto& b : breakdowns_[sample]) r.push_back(b.final_score);
  return r;
}

RolloutGroup rollout(const Policy& policy, const Sample& sample, int group_size,
                     std::uint64_t seed, const Policy* reference) {
  if (group_size < 2) throw std::invalid_argument("rollout: group size must be >= 2");
  const auto lp = policy.log_probabilities(sample);
  std::vector<double> cdf(lp.size());
  double acc = 0.0;
  for (std::size_t a = 0; a < lp.size(); ++a) {
    acc += std::exp(lp[a]);
    cdf[a] = acc;
  }
  RolloutGroup g;
  g.sample_id = sample.id;
  g.actions.reserve(group_size);
  g.logp_old.reserve(group_size);
  Rng rng(seed);
  for (int j = 0; j < group_size; ++j) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t a = it == cdf.end() ? cdf.size() - 1 : static_cast<std::size_t>(it - cdf.begin());
    g.actions.push_back(a);
    g.logp_old.push_back(lp[a]);
  }
  if (reference) {
    const auto lr = reference->log_probabilities(sample);
    for (std::size_t a : g.actions) g.logp_ref.push_back(lr[a]);
  }
  return g;
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("group_advantages: need >= 2 rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (sd <= kAdvantageEps) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

double kl_categorical(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_categorical: support size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("kl_categorical: negative mass");
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw std::invalid_argument("kl_categorical: q = 0 where p > 0");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

namespace {

double kl_from_logs(std::span<const double> lp, std::span<const double> lq) {
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double p = std::exp(lp[i]);
    if (p > 0.0) kl += p * (lp[i] - lq[i]);
  }
  return std::max(kl, 0.0);
}

double member_weight(const RolloutGroup& g, std::size_t j) {
  return g.weights.empty() ? 1.0 / static_cast<double>(g.actions.size()) : g.weights[j];
}

bool clip_active(double rho, double adv, double eps) {
  return (adv > 0.0 && rho > 1.0 + eps) || (adv < 0.0 && rho < 1.0 - eps);
}

void check_groups(std::span<const RolloutGroup> groups, std::span<const Sample> dataset) {
  for (const auto& g : groups) {
    if (g.sample_index >= dataset.size()) throw std::invalid_argument("group sample index out of range");
    const std::size_t n = g.actions.size();
    if (g.logp_old.size() != n || g.rewards.size() != n || g.advantages.size() != n ||
        (!g.weights.empty() && g.weights.size() != n)) {
      throw std::invalid_argument("rollout group " + g.sample_id + ": inconsistent lengths");
    }
  }
}

struct GroupEval {
  double objective = 0.0;
  double kl = 0.0;
  std::uint32_t clipped = 0;
  std::vector<double> grad;
};

GroupEval eval_group(const Policy& policy, const Policy& reference, const RolloutGroup& g,
                     const Sample& s, const TrainConfig& cfg, bool want_grad) {
  GroupEval out;
  const auto lp = policy.log_probabilities(s);
  const std::size_t dim = policy.theta.size();
  std::vector<double> p(lp.size());
  for (std::size_t a = 0; a < lp.size(); ++a) p[a] = std::exp(lp[a]);
  std::vector<double> fbar;
  if (want_grad) {
    fbar = expected_features(s, p);
    out.grad.assign(dim, 0.0);
  }
  const double inv_t = 1.0 / policy.temperature;

  for (std::size_t j = 0; j < g.actions.size(); ++j) {
    const std::size_t a = g.actions[j];
    const double w = member_weight(g, j);
    const double adv = g.advantages[j];
    const double rho = std::exp(lp[a] - g.logp_old[j]);
    const double clipped_rho = std::clamp(rho, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    out.objective += w * std::min(rho * adv, clipped_rho * adv);
    if (clip_active(rho, adv, cfg.clip_eps)) {
      ++out.clipped;
      continue;
    }
    if (want_grad && adv != 0.0) {
      const auto& f = s.candidates[a].features;
      const double c = w * adv * rho * inv_t;
      for (std::size_t k = 0; k < dim; ++k) out.grad[k] += c * (f[k] - fbar[k]);
    }
  }

  const auto lq = reference.log_probabilities(s);
  out.kl = kl_from_logs(lp, lq);
  if (cfg.kl_coef > 0.0) {
    out.objective -= cfg.kl_coef * out.kl;
    if (want_grad) {
      // d KL / d theta = (1/T) sum_b p_b (lp_b - lq_b) (f_b - fbar)
      for (std::size_t b = 0; b < lp.size(); ++b) {
        if (p[b] == 0.0) continue;
        const double c = cfg.kl_coef * p[b] * (lp[b] - lq[b]) * inv_t;
        const auto& f = s.candidates[b].features;
        for (std::size_t k = 0; k < dim; ++k) out.grad[k] -= c * (f[k] - fbar[k]);
      }
    }
  }
  return out;
}

std::vector<GroupEval> eval_groups(const Policy& policy, const Policy& reference,
                                   std::span<const RolloutGroup> groups,
                                   std::span<const Sample> dataset, const TrainConfig& cfg,
                                   bool want_grad) {
  std::vector<GroupEval> evals(groups.size());
  parallel_for(groups.size(), cfg.parallelism, [&](std::size_t i) {
    evals[i] = eval_group(policy, reference, groups[i], dataset[groups[i].sample_index], cfg,
                          want_grad);
  });
  return evals;
}

double mean_objective(const std::vector<GroupEval>& evals) {
  double j = 0.0;
  for (const auto& e : evals) j += e.objective;
  return evals.empty() ? 0.0 : j / static_cast<double>(evals.size());
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

Policy stepped(const Policy& p, const std::vector<double>& dir, double eta) {
  Policy q = p;
  for (std::size_t k = 0; k < q.theta.size(); ++k) q.theta[k] += eta * dir[k];
  return q;
}

constexpr int kMaxHalvings = 40;
constexpr double kArmijo = 1e-4;

}  // namespace

RolloutGroup expected_group(const Policy& policy, const Sample& sample,
                            std::span<const double> candidate_rewards, std::size_t sample_index) {
  if (candidate_rewards.size() != sample.candidates.size()) {
    throw std::invalid_argument("expected_group: one reward per candidate required");
  }
  RolloutGroup g;
  g.sample_id = sample.id;
  g.sample_index = sample_index;
  g.logp_old = policy.log_probabilities(sample);
  const std::size_t k = sample.candidates.size();
  g.actions.resize(k);
  std::iota(g.actions.begin(), g.actions.end(), std::size_t{0});
  g.rewards.assign(candidate_rewards.begin(), candidate_rewards.end());
  g.weights.resize(k);
  double mean = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    g.weights[a] = std::exp(g.logp_old[a]);
    mean += g.weights[a] * g.rewards[a];
  }
  double var = 0.0;
  for (std::size_t a = 0; a < k; ++a) var += g.weights[a] * (g.rewards[a] - mean) * (g.rewards[a] - mean);
  const double sd = std::sqrt(var);
  g.advantages.assign(k, 0.0);
  if (sd > kAdvantageEps) {
    for (std::size_t a = 0; a < k; ++a) g.advantages[a] = (g.rewards[a] - mean) / sd;
  }
  return g;
}

double grpo_objective(const Policy& policy, const Policy& reference,
                      std::span<const RolloutGroup> groups, std::span<const Sample> dataset,
                      const TrainConfig& config) {
  check_groups(groups, dataset);
  return mean_objective(eval_groups(policy, reference, groups, dataset, config, false));
}

std::vector<double> grpo_gradient(const Policy& policy, const Policy& reference,
                                  std::span<const RolloutGroup> groups,
                                  std::span<const Sample> dataset, const TrainConfig& config) {
  check_groups(groups, dataset);
  const auto evals = eval_groups(policy, reference, groups, dataset, config, true);
  std::vector<double> grad(policy.theta.size(), 0.0);
  for (const auto& e : evals) {
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += e.grad[k];
  }
  if (!evals.empty()) {
    for (double& g : grad) g /= static_cast<double>(evals.size());
  }
  return grad;
}

StepMetrics grpo_update(Policy& policy, const Policy& reference,
                        std::span<const RolloutGroup> groups, std::span<const Sample> dataset,
                        const TrainConfig& config) {
  check_groups(groups, dataset);
  StepMetrics m;
  std::size_t members = 0;
  for (const auto& g : groups) {
    for (double r : g.rewards) m.mean_reward += r;
    members += g.rewards.size();
  }
  if (members > 0) m.mean_reward /= static_cast<double>(members);

  for (int step = 0; step < config.inner_steps; ++step) {
    const auto evals = eval_groups(policy, reference, groups, dataset, config, true);
    std::vector<double> grad(policy.theta.size(), 0.0);
    std::uint32_t clipped = 0;
    for (const auto& e : evals) {
      clipped += e.clipped;
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += e.grad[k];
    }
    const double n_groups = std::max<double>(1.0, static_cast<double>(evals.size()));
    for (double& g : grad) g /= n_groups;
    m.clip_fraction = members == 0 ? 0.0 : static_cast<double>(clipped) / members;
    const double j0 = mean_objective(evals);
    if (step == 0) m.objective_before = j0;
    m.objective_after = j0;
    m.step_size = 0.0;

    if (!all_finite(grad)) {
      m.aborted = true;
      m.message = "non-finite gradient; step skipped";
      break;
    }
    const double gg = norm2(grad);
    if (gg == 0.0) break;

    double eta = config.lr;
    for (int h = 0; h <= kMaxHalvings; ++h, eta *= 0.5) {
      Policy candidate = stepped(policy, grad, eta);
      if (!config.backtracking) {
        policy = std::move(candidate);
        m.step_size = eta;
        m.objective_after = grpo_objective(policy, reference, groups, dataset, config);
        break;
      }
      const double j1 = grpo_objective(candidate, reference, groups, dataset, config);
      if (std::isfinite(j1) && j1 >= j0 + kArmijo * eta * gg) {
        policy = std::move(candidate);
        m.step_size = eta;
        m.objective_after = j1;
        break;
      }
    }
  }

  double kl = 0.0;
  for (const auto& g : groups) {
    const auto& s = dataset[g.sample_index];
    kl += kl_from_logs(policy.log_probabilities(s), reference.log_probabilities(s));
  }
  m.mean_kl = groups.empty() ? 0.0 : kl / static_cast<double>(groups.size());
  return m;
}

namespace {

double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> pair_margins(const Policy& policy, const Policy& reference,
                                 std::span<const DpoPair> pairs, std::span<const Sample> dataset,
                                 double beta) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.sample_index >= dataset.size()) throw std::invalid_argument("DPO pair sample out of range");
    const auto& s = dataset[p.sample_index];
    if (p.chosen >= s.candidates.size() || p.rejected >= s.candidates.size()) {
      throw std::invalid_argument("DPO pair action out of range for sample " + s.id);
    }
    const auto lp = policy.log_probabilities(s);
    const auto lr = reference.log_probabilities(s);
    out.push_back(beta * ((lp[p.chosen] - lr[p.chosen]) - (lp[p.rejected] - lr[p.rejected])));
  }
  return out;
}

}  // namespace

double dpo_margin(const Policy& policy, const Policy& reference, std::span<const DpoPair> pairs,
                  std::span<const Sample> dataset, double beta) {
  if (pairs.empty()) return 0.0;
  const auto m = pair_margins(policy, reference, pairs, dataset, beta);
  return std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
}

double dpo_loss(const Policy& policy, const Policy& reference, std::span<const DpoPair> pairs,
                std::span<const Sample> dataset, double beta) {
  if (pairs.empty()) return 0.0;
  double loss = 0.0;
  for (double m : pair_margins(policy, reference, pairs, dataset, beta)) loss -= log_sigmoid(m);
  return loss / static_cast<double>(pairs.size());
}

DpoStep dpo_update(Policy& policy, const Policy& reference, std::span<const DpoPair> pairs,
                   std::span<const Sample> dataset, double beta, double lr, bool backtracking) {
  DpoStep out;
  if (pairs.empty()) return out;
  const auto margins = pair_margins(policy, reference, pairs, dataset, beta);
  out.loss_before = dpo_loss(policy, reference, pairs, dataset, beta);
  out.margin_before = dpo_margin(policy, reference, pairs, dataset, beta);
  out.loss_after = out.loss_before;
  out.margin_after = out.margin_before;

  // descent direction: mean over pairs of (1 - sigmoid(m)) * beta * (f_w - f_l) / T
  std::vector<double> dir(policy.theta.size(), 0.0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& s = dataset[pairs[i].sample_index];
    const auto& fw = s.candidates[pairs[i].chosen].features;
    const auto& fl = s.candidates[pairs[i].rejected].features;
    const double c = (1.0 - sigmoid(margins[i])) * beta / policy.temperature;
    for (std::size_t k = 0; k < dir.size(); ++k) dir[k] += c * (fw[k] - fl[k]);
  }
  for (double& d : dir) d /= static_cast<double>(pairs.size());
  if (!all_finite(dir)) {
    out.aborted = true;
    return out;
  }
  const double gg = norm2(dir);
  if (gg == 0.0) return out;

  double eta = lr;
  for (int h = 0; h <= kMaxHalvings; ++h, eta *= 0.5) {
    Policy candidate = stepped(policy, dir, eta);
    const double l1 = dpo_loss(candidate, reference, pairs, dataset, beta);
    if (!backtracking || (std::isfinite(l1) && l1 <= out.loss_before - kArmijo * eta * gg)) {
      policy = std::move(candidate);
      out.loss_after = l1;
      out.margin_after = dpo_margin(policy, reference, pairs, dataset, beta);
      break;
    }
  }
  return out;
}

ResampleResult dynamic_resample(std::span<const Sample> dataset, const Policy& policy,
                                const RewardTable& rewards, int group_size, double threshold,
                                std::uint64_t seed, int parallelism) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("dynamic_resample: threshold must be in (0,1]");
  }
  ResampleResult out;
  out.stats.resize(dataset.size());
  parallel_for(dataset.size(), parallelism, [&](std::size_t i) {
    const auto g = rollout(policy, dataset[i], group_size, derive_seed(seed, i));
    PassStats st;
    st.sample_index = i;
    st.rollouts = group_size;
    for (std::size_t a : g.actions) st.passes += rewards.reward(i, a) >= kPassReward ? 1 : 0;
    out.stats[i] = st;
  });
  for (const auto& st : out.stats) {
    out.rollouts_used += static_cast<std::size_t>(st.rollouts);
    if (is_mastered(st, threshold)) {
      ++out.removed;
    } else {
      out.retained.push_back(st.sample_index);
    }
  }
  return out;
}

std::string_view to_string(Algo a) { return a == Algo::Grpo ? "grpo" : "dpo"; }

Algo algo_from_string(std::string_view s) {
  const std::string l = to_lower(s);
  if (l == "grpo") return Algo::Grpo;
  if (l == "dpo") return Algo::Dpo;
  throw std::invalid_argument("unknown algorithm: " + std::string(s));
}

TrainResult train(std::span<const Sample> dataset, const TrainConfig& config,
                  const Verifier& verifier, Algo algo) {
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  const auto table = RewardTable::build(dataset, verifier, config.parallelism);
  return train(dataset, config, table, algo);
}

TrainResult train(std::span<const Sample> dataset, const TrainConfig& config,
                  const RewardTable& rewards, Algo algo, const Policy* initial) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  if (rewards.size() != dataset.size()) throw std::invalid_argument("train: reward table size mismatch");
  for (const auto& s : dataset) validate_sample(s);

  const std::size_t n = dataset.size();
  const std::size_t dim = dataset.front().candidates.front().features.size();
  TrainResult result;
  result.policy = initial ? *initial : Policy::zeros(dim, config.temperature);
  if (result.policy.theta.size() != dim) throw std::invalid_argument("train: initial policy dimension");
  result.reference = result.policy;
  result.status = "completed";

  std::vector<std::optional<PassStats>> pass_cache(n);
  std::vector<int> skip_streak(n, 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.ref_refresh_epochs > 0 && epoch > 1 &&
        (epoch - 1) % config.ref_refresh_epochs == 0) {
      result.reference = result.policy;
    }

    EpochSummary es;
    es.epoch = epoch;
    std::vector<std::size_t> active;
    std::size_t mastered = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool is_m = pass_cache[i] && is_mastered(*pass_cache[i], config.resample_threshold);
      mastered += is_m ? 1 : 0;
      if (config.dynamic_resampling && is_m && skip_streak[i] < config.max_skip_epochs) {
        ++skip_streak[i];
        ++es.removed;
      } else {
        skip_streak[i] = 0;
        active.push_back(i);
      }
    }
    es.mastered_fraction = static_cast<double>(mastered) / static_cast<double>(n);
    es.samples_active = active.size();
    if (active.empty()) {
      result.status = "mastered";
      break;
    }

    Rng order_rng(derive_seed(config.seed, 0x5eedULL, static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(active);

    std::map<TaskKind, double> kind_reward_sum, kind_clip;
    std::map<TaskKind, std::size_t> kind_members, kind_active;
    double reward_sum = 0.0, clip_sum = 0.0, loss_sum = 0.0;
    std::size_t members = 0, batches = 0;

    for (std::size_t start = 0; start < active.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(active.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<RolloutGroup> groups(stop - start);
      parallel_for(groups.size(), config.parallelism, [&](std::size_t b) {
        const std::size_t i = active[start + b];
        auto g = rollout(result.policy, dataset[i], config.group_size,
                         derive_seed(config.seed, static_cast<std::uint64_t>(epoch), i),
                         &result.reference);
        g.sample_index = i;
        g.rewards.reserve(g.actions.size());
        for (std::size_t a : g.actions) g.rewards.push_back(rewards.reward(i, a));
        g.advantages = group_advantages(g.rewards);
        groups[b] = std::move(g);
      });

      for (const auto& g : groups) {
        PassStats st;
        st.sample_index = g.sample_index;
        st.rollouts = static_cast<int>(g.rewards.size());
        for (double r : g.rewards) st.passes += r >= kPassReward ? 1 : 0;
        pass_cache[g.sample_index] = st;
        const TaskKind k = dataset[g.sample_index].kind;
        for (double r : g.rewards) {
          reward_sum += r;
          kind_reward_sum[k] += r;
        }
        members += g.rewards.size();
        kind_members[k] += g.rewards.size();
        kind_active[k] += 1;
      }
      es.rollouts += groups.size() * static_cast<std::size_t>(config.group_size);

      if (algo == Algo::Grpo) {
        // per-group clip counts at the pre-step policy
        for (const auto& g : groups) {
          const auto lp = result.policy.log_probabilities(dataset[g.sample_index]);
          double c = 0.0;
          for (std::size_t j = 0; j < g.actions.size(); ++j) {
            const double rho = std::exp(lp[g.actions[j]] - g.logp_old[j]);
            c += clip_active(rho, g.advantages[j], config.clip_eps) ? 1.0 : 0.0;
          }
          kind_clip[dataset[g.sample_index].kind] += c;
        }
        const auto m = grpo_update(result.policy, result.reference, groups, dataset, config);
        clip_sum += m.clip_fraction * static_cast<double>(groups.size() * config.group_size);
        if (m.aborted) ++result.aborted_steps;
      } else {
        std::vector<reward::ScoredGroup> scored(groups.size());
        for (std::size_t b = 0; b < groups.size(); ++b) {
          scored[b].prompt_id = groups[b].sample_id;
          const auto& s = dataset[groups[b].sample_index];
          for (std::size_t j = 0; j < groups[b].actions.size(); ++j) {
            scored[b].rollouts.push_back({static_cast<int>(j),
                                          s.candidates[groups[b].actions[j]].features,
                                          groups[b].rewards[j]});
          }
        }
        const auto gen = reward::generate_preference_pairs(scored);
        std::vector<DpoPair> pairs;
        for (std::size_t b = 0; b < gen.pairs.size(); ++b) {
          const auto& p = gen.pairs[b];
          if (p.low_margin) continue;
          // one pair per group, so pair b belongs to groups[b]
          const auto& g = groups[b];
          pairs.push_back({g.sample_index, g.actions[static_cast<std::size_t>(p.chosen_index)],
                           g.actions[static_cast<std::size_t>(p.rejected_index)]});
        }
        const auto step = dpo_update(result.policy, result.reference, pairs, dataset,
                                     config.dpo_beta, config.lr, config.backtracking);
        if (step.aborted) ++result.aborted_steps;
        loss_sum += step.loss_before;
      }
      ++batches;
      ++result.update_steps;
    }

    result.total_rollouts += es.rollouts;
    es.mean_reward = members ? reward_sum / static_cast<double>(members) : 0.0;
    es.clip_frac = members ? clip_sum / static_cast<double>(members) : 0.0;
    es.dpo_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;

    const auto eval = evaluate_policy(result.policy, dataset, rewards);
    es.accuracy = eval.accuracy;
    es.mean_kl = mean_kl(result.policy, result.reference, dataset);

    std::map<TaskKind, double> kind_kl;
    std::map<TaskKind, std::size_t> kind_n;
    for (const auto& s : dataset) {
      kind_kl[s.kind] += kl_from_logs(result.policy.log_probabilities(s),
                                      result.reference.log_probabilities(s));
      kind_n[s.kind] += 1;
    }
    for (TaskKind k : kAllTaskKinds) {
      if (!kind_n.count(k)) continue;
      KindEpochMetrics km;
      km.epoch = epoch;
      km.kind = k;
      km.accuracy = eval.per_kind.count(k) ? eval.per_kind.at(k).accuracy() : 0.0;
      km.mean_reward = kind_members[k] ? kind_reward_sum[k] / static_cast<double>(kind_members[k])
                                       : std::nan("");
      km.mean_kl = kind_kl[k] / static_cast<double>(kind_n[k]);
      km.clip_frac = kind_members[k] ? kind_clip[k] / static_cast<double>(kind_members[k]) : 0.0;
      km.samples_active = kind_active[k];
      result.per_kind.push_back(km);
    }
    result.epochs.push_back(es);
  }
  return result;
}

std::string metrics_csv(const TrainResult& result) {
  std::ostringstream out;
  out << "epoch,kind,accuracy,mean_reward,mean_kl,clip_frac,samples_active\n";
  for (const auto& m : result.per_kind) {
    out << m.epoch << ',' << to_string(m.kind) << ',' << fmt_double(m.accuracy) << ','
        << fmt_double(m.mean_reward) << ',' << fmt_double(m.mean_kl, 9) << ','
        << fmt_double(m.clip_frac) << ',' << m.samples_active << '\n';
  }
  return out.str();
}

namespace {

PolicyEvaluation evaluate_with(const Policy& policy, std::span<const Sample> dataset,
                               const std::function<double(std::size_t, std::size_t)>& reward_of) {
  PolicyEvaluation ev;
  std::size_t correct = 0;
  double top1 = 0.0, list = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    const std::size_t a = policy.greedy_action(s);
    const bool ok = reward_of(i, a) >= kPassReward;
    auto& ks = ev.per_kind[s.kind];
    ++ks.n;
    ks.correct += ok ? 1 : 0;
    correct += ok ? 1 : 0;
    if (s.kind == TaskKind::Diagnosis) {
      const auto& gold = std::get<IcdGold>(s.gold).codes;
      auto codes = parsed_icd_codes(parse_response(TaskKind::Diagnosis, s.candidates[a].payload));
      if (codes.size() > kListScoreCap) codes.resize(kListScoreCap);
      const auto v = verify_icd(codes, gold);
      top1 += v.top1_hit ? 1.0 : 0.0;
      list += v.rule_score * static_cast<double>(gold.size());
      ++ev.diagnosis_n;
    }
  }
  ev.accuracy = dataset.empty() ? 0.0 : static_cast<double>(correct) / dataset.size();
  if (ev.diagnosis_n > 0) {
    ev.diagnosis_top1 = top1 / static_cast<double>(ev.diagnosis_n);
    ev.diagnosis_list_score = list / static_cast<double>(ev.diagnosis_n);
  }
  return ev;
}

}  // namespace

PolicyEvaluation evaluate_policy(const Policy& policy, std::span<const Sample> dataset,
                                 const Verifier& verifier) {
  return evaluate_with(policy, dataset, [&](std::size_t i, std::size_t a) {
    const auto& s = dataset[i];
    return verifier.score(s.prompt, s.candidates[a].payload, s.gold).final_score;
  });
}

PolicyEvaluation evaluate_policy(const Policy& policy, std::span<const Sample> dataset,
                                 const RewardTable& rewards) {
  return evaluate_with(policy, dataset,
                       [&](std::size_t i, std::size_t a) { return rewards.reward(i, a); });
}

double expected_reward(const Policy& policy, std::span<const Sample> dataset,
                       const RewardTable& rewards) {
  if (dataset.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto p = policy.probabilities(dataset[i]);
    for (std::size_t a = 0; a < p.size(); ++a) total += p[a] * rewards.reward(i, a);
  }
  return total / static_cast<double>(dataset.size());
}

double mean_kl(const Policy& policy, const Policy& reference, std::span<const Sample> dataset) {
  if (dataset.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : dataset) {
    total += kl_from_logs(policy.log_probabilities(s), reference.log_probabilities(s));
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace medrl::rl
