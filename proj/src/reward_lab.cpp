#include "medrl/reward_lab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "medrl/common.hpp"

namespace medrl::reward {

using nlohmann::json;

std::string_view to_string(PairSource s) {
  switch (s) {
    case PairSource::Generated: return "generated";
    case PairSource::Human: return "human";
    case PairSource::Synthetic: return "synthetic";
  }
  return "generated";
}

PairSource pair_source_from_string(std::string_view s) {
  if (s == "generated") return PairSource::Generated;
  if (s == "human") return PairSource::Human;
  if (s == "synthetic") return PairSource::Synthetic;
  throw std::invalid_argument("unknown pair source: " + std::string(s));
}

json to_json(const PreferencePair& p) {
  return {{"prompt_id", p.prompt_id},
          {"chosen_features", p.chosen},
          {"rejected_features", p.rejected},
          {"source", to_string(p.source)}};
}

PreferencePair pair_from_json(const json& j) {
  PreferencePair p;
  p.prompt_id = j.at("prompt_id").get<std::string>();
  p.chosen = j.at("chosen_features").get<FeatureVector>();
  p.rejected = j.at("rejected_features").get<FeatureVector>();
  p.source = pair_source_from_string(j.value("source", std::string("generated")));
  return p;
}

json to_json(const RewardModelParams& p) {
  return {{"weights", p.weights}, {"bias", p.bias}, {"l2", p.l2}};
}

RewardModelParams params_from_json(const json& j) {
  RewardModelParams p;
  p.weights = j.at("weights").get<std::vector<double>>();
  p.bias = j.value("bias", 0.0);
  p.l2 = j.value("l2", 0.0);
  return p;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double score(const RewardModelParams& params, std::span<const double> features) {
  if (features.size() != params.weights.size()) {
    throw std::invalid_argument("feature dimension " + std::to_string(features.size()) +
                                " does not match model dimension " +
                                std::to_string(params.weights.size()));
  }
  return dot(params.weights, features) + params.bias;
}

double preference_probability(const RewardModelParams& params, std::span<const double> chosen,
                              std::span<const double> rejected) {
  return sigmoid(score(params, chosen) - score(params, rejected));
}

BtFit fit_bradley_terry(std::span<const PreferencePair> pairs, const BtConfig& config) {
  if (pairs.empty()) throw std::invalid_argument("fit_bradley_terry: need at least one pair");
  if (config.l2 < 0.0 || config.lr <= 0.0 || config.epochs < 0) {
    throw std::invalid_argument("fit_bradley_terry: invalid config");
  }
  const std::size_t dim = pairs.front().chosen.size();
  std::vector<std::vector<double>> diffs;
  diffs.reserve(pairs.size());
  bool all_zero = true;
  for (const auto& p : pairs) {
    if (p.chosen.size() != dim || p.rejected.size() != dim) {
      throw std::invalid_argument("fit_bradley_terry: inconsistent feature dimension");
    }
    std::vector<double> d(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      d[k] = p.chosen[k] - p.rejected[k];
      if (!std::isfinite(d[k])) throw std::invalid_argument("fit_bradley_terry: non-finite feature");
      all_zero = all_zero && d[k] == 0.0;
    }
    diffs.push_back(std::move(d));
  }

  BtFit fit;
  fit.params.weights.assign(dim, 0.0);
  fit.params.l2 = config.l2;
  auto loglik = [&](const std::vector<double>& w) {
    double ll = 0.0;
    for (const auto& d : diffs) ll += log_sigmoid(dot(w, d));
    return ll;
  };
  if (all_zero) {
    fit.degenerate = true;
    fit.log_likelihood = loglik(fit.params.weights);
    return fit;
  }

  auto& w = fit.params.weights;
  const double n = static_cast<double>(diffs.size());
  std::vector<double> grad(dim);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& d : diffs) {
      const double g = 1.0 - sigmoid(dot(w, d));
      for (std::size_t k = 0; k < dim; ++k) grad[k] += g * d[k];
    }
    for (std::size_t k = 0; k < dim; ++k) {
      grad[k] -= 2.0 * config.l2 * w[k];
      w[k] += config.lr * grad[k] / n;
    }
    const double ll = loglik(w);
    fit.loglik_history.push_back(ll);
    fit.objective_history.push_back(ll - config.l2 * dot(w, w));
  }
  fit.log_likelihood = loglik(w);
  return fit;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("kendall_tau: need two equal-length vectors of size >= 2");
  }
  long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double s = (a[i] - a[j]) * (b[i] - b[j]);
      if (s > 0) ++concordant;
      else if (s < 0) ++discordant;
    }
  }
  const double pairs = static_cast<double>(a.size() * (a.size() - 1) / 2);
  return static_cast<double>(concordant - discordant) / pairs;
}

PairGeneration generate_preference_pairs(std::span<const ScoredGroup> groups, double min_margin) {
  PairGeneration out;
  for (const auto& g : groups) {
    const auto& r = g.rollouts;
    if (r.size() < 2) {
      ++out.skipped;
      continue;
    }
    std::size_t best = 0, worst = 0;
    for (std::size_t i = 1; i < r.size(); ++i) {
      if (r[i].reward > r[best].reward) best = i;
      if (r[i].reward < r[worst].reward) worst = i;
    }
    if (best == worst) worst = best == 0 ? 1 : 0;  // all tied
    PreferencePair p;
    p.prompt_id = g.prompt_id;
    p.chosen = r[best].features;
    p.rejected = r[worst].features;
    p.chosen_index = r[best].index;
    p.rejected_index = r[worst].index;
    p.margin = r[best].reward - r[worst].reward;
    p.low_margin = p.margin < min_margin;
    out.low_margin += p.low_margin ? 1 : 0;
    out.pairs.push_back(std::move(p));
  }
  return out;
}

double aggregate_dimensions(const DimensionScores& d) {
  const auto& w = d.weights;
  const double ws[] = {w.honesty, w.helpfulness, w.consistency, w.compliance};
  const double xs[] = {d.honesty, d.helpfulness, d.consistency, d.compliance};
  double sum = 0.0;
  for (double x : ws) {
    if (!(x >= 0.0)) throw std::invalid_argument("dimension weights must be non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("dimension weights must sum to 1");
  for (double x : xs) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("dimension scores must lie in [0,1]");
  }
  double out = 0.0;
  for (int i = 0; i < 4; ++i) out += ws[i] * xs[i];
  return out;
}

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "the",  "and",   "for",   "with",  "that",  "this",  "are",   "was",   "were", "has",
      "have", "had",   "not",   "but",   "from",  "into",  "its",   "their", "there", "which",
      "will", "would", "should", "could", "may",  "can",   "also",  "than",  "then", "these",
      "those", "been", "being", "who",   "whom",  "what",  "when",  "where", "why",  "how",
      "all",  "any",   "each",  "most",  "more",  "other", "some",  "such",  "only", "both",
      "very", "our",   "you",   "your",  "his",   "her",   "she",   "him",   "they", "them",
      "therefore", "thus", "hence", "because", "given", "likely", "final", "answer", "summary",
      "based", "patient", "presents", "consistent"};
  return words;
}

}  // namespace

std::set<std::string> content_tokens(std::string_view text) {
  std::set<std::string> out;
  std::string tok;
  auto flush = [&] {
    while (!tok.empty() && (tok.back() == '.' || tok.back() == '-')) tok.pop_back();
    std::size_t b = 0;
    while (b < tok.size() && (tok[b] == '.' || tok[b] == '-')) ++b;
    tok.erase(0, b);
    if (!tok.empty()) {
      const bool has_digit =
          std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); });
      if (has_digit || (tok.size() >= 3 && !stopwords().count(tok))) out.insert(tok);
    }
    tok.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '.' || c == '-') {
      tok.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

double consistency_heuristic(std::string_view reasoning, std::string_view summary) {
  if (trim(reasoning).empty() || trim(summary).empty()) {
    throw std::invalid_argument("consistency_heuristic: reasoning and summary must be non-empty");
  }
  const auto s = content_tokens(summary);
  if (s.empty()) return 1.0;
  const auto r = content_tokens(reasoning);
  std::size_t hits = 0;
  for (const auto& t : s) hits += r.count(t);
  return static_cast<double>(hits) / static_cast<double>(s.size());
}

std::vector<FlaggedGroup> active_learning_select(std::span<const CandidateScores> groups,
                                                 double tau) {
  std::vector<FlaggedGroup> out;
  for (const auto& g : groups) {
    if (g.scores.size() < 2) continue;
    std::vector<double> s = g.scores;
    std::partial_sort(s.begin(), s.begin() + 2, s.end(), std::greater<>());
    const double gap = s[0] - s[1];
    if (gap < tau) out.push_back({g.prompt_id, gap});
  }
  return out;
}

LengthAudit length_hack_audit(std::span<const LengthRewardPoint> points, double warn_threshold) {
  if (points.size() < 10) throw std::invalid_argument("length_hack_audit: need >= 10 rollouts");
  LengthAudit a;
  a.n = points.size();
  a.warn_threshold = warn_threshold;
  const double n = static_cast<double>(points.size());
  double ml = 0.0, mr = 0.0;
  for (const auto& p : points) {
    ml += p.length;
    mr += p.reward;
  }
  ml /= n;
  mr /= n;
  double sll = 0.0, srr = 0.0, slr = 0.0;
  for (const auto& p : points) {
    sll += (p.length - ml) * (p.length - ml);
    srr += (p.reward - mr) * (p.reward - mr);
    slr += (p.length - ml) * (p.reward - mr);
  }
  if (sll == 0.0 || srr == 0.0) {
    a.zero_variance = true;
    a.correlation = 0.0;
  } else {
    a.correlation = std::clamp(slr / std::sqrt(sll * srr), -1.0, 1.0);
  }
  a.warn = a.correlation > warn_threshold;
  return a;
}

std::string render_markdown(const LengthAudit& audit) {
  std::ostringstream md;
  md << "## Length vs reward audit\n\n";
  md << "| rollouts | pearson r | threshold | status |\n";
  md << "|---|---|---|---|\n";
  md << "| " << audit.n << " | " << fmt_double(audit.correlation, 4) << " | "
     << fmt_double(audit.warn_threshold, 2) << " | "
     << (audit.warn ? "WARN: reward tracks length" : "ok") << " |\n";
  if (audit.zero_variance) md << "\nZero variance in length or reward; correlation reported as 0.\n";
  return md.str();
}

}  // namespace medrl::reward
