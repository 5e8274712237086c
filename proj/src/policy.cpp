#include "medrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "medrl/common.hpp"
#include "medrl/json_io.hpp"

namespace medrl::rl {

using nlohmann::json;

void validate_sample(const Sample& s) {
  if (s.candidates.size() < 2) {
    throw std::invalid_argument("sample " + s.id + ": needs at least 2 candidates");
  }
  const std::size_t dim = s.candidates.front().features.size();
  if (dim == 0) throw std::invalid_argument("sample " + s.id + ": empty feature vector");
  for (const auto& c : s.candidates) {
    if (c.features.size() != dim) {
      throw std::invalid_argument("sample " + s.id + ": ragged candidate features");
    }
    for (double f : c.features) {
      if (!std::isfinite(f)) throw std::invalid_argument("sample " + s.id + ": non-finite feature");
    }
  }
  if (kind_of(s.gold) != s.kind) {
    throw std::invalid_argument("sample " + s.id + ": gold label does not match kind");
  }
  validate_gold(s.gold);
}

json to_json(const Sample& s) {
  json cands = json::array();
  for (const auto& c : s.candidates) {
    cands.push_back({{"payload", c.payload}, {"features", c.features}});
  }
  return {{"id", s.id},
          {"kind", to_string(s.kind)},
          {"prompt", s.prompt},
          {"candidates", std::move(cands)},
          {"gold", gold_to_json(s.gold)},
          {"strata_label", s.strata_label}};
}

Sample sample_from_json(const json& j) {
  Sample s;
  s.id = j.at("id").get<std::string>();
  s.kind = task_kind_from_string(j.at("kind").get<std::string>());
  s.prompt = j.value("prompt", std::string());
  for (const auto& c : j.at("candidates")) {
    s.candidates.push_back(
        {c.at("payload").get<std::string>(), c.at("features").get<FeatureVector>()});
  }
  s.gold = gold_from_json(s.kind, j.at("gold"));
  s.strata_label = j.value("strata_label", std::string(to_string(s.kind)));
  validate_sample(s);
  return s;
}

std::vector<Sample> load_dataset(const std::string& path) {
  std::vector<Sample> out;
  for (const auto& line : read_jsonl(path)) {
    if (!line.error.empty()) {
      throw std::invalid_argument(path + ":" + std::to_string(line.line_no) + ": " + line.error);
    }
    try {
      out.push_back(sample_from_json(line.value));
    } catch (const std::exception& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line.line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::string& path, std::span<const Sample> samples) {
  std::vector<json> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back(to_json(s));
  write_file(path, to_jsonl(rows));
}

Policy Policy::zeros(std::size_t dim, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("policy temperature must be > 0");
  return Policy{std::vector<double>(dim, 0.0), temperature};
}

std::vector<double> Policy::log_probabilities(const Sample& s) const {
  std::vector<double> z(s.candidates.size());
  for (std::size_t a = 0; a < z.size(); ++a) {
    const auto& f = s.candidates[a].features;
    if (f.size() != theta.size()) throw std::invalid_argument("policy/feature dimension mismatch");
    double dot = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) dot += theta[k] * f[k];
    z[a] = dot / temperature;
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double lse = zmax + std::log(sum);
  for (double& v : z) v -= lse;
  return z;
}

std::vector<double> Policy::probabilities(const Sample& s) const {
  auto lp = log_probabilities(s);
  double sum = 0.0;
  for (double& v : lp) {
    v = std::exp(v);
    sum += v;
  }
  for (double& v : lp) v /= sum;
  return lp;
}

std::size_t Policy::greedy_action(const Sample& s) const {
  const auto lp = log_probabilities(s);
  return static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
}

json to_json(const Policy& p) { return {{"theta", p.theta}, {"temperature", p.temperature}}; }

Policy policy_from_json(const json& j) {
  Policy p;
  p.theta = j.at("theta").get<std::vector<double>>();
  p.temperature = j.value("temperature", 1.0);
  if (!(p.temperature > 0.0)) throw std::invalid_argument("policy temperature must be > 0");
  return p;
}

std::vector<double> expected_features(const Sample& s, std::span<const double> probs) {
  std::vector<double> mean(s.candidates.front().features.size(), 0.0);
  for (std::size_t a = 0; a < s.candidates.size(); ++a) {
    const auto& f = s.candidates[a].features;
    for (std::size_t k = 0; k < f.size(); ++k) mean[k] += probs[a] * f[k];
  }
  return mean;
}

}  // namespace medrl::rl
