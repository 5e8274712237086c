#include "medrl/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "medrl/common.hpp"

namespace medrl::curriculum {

using nlohmann::json;
using rl::Candidate;
using rl::Sample;

namespace {

const std::vector<std::vector<std::string>>& icd_catalog() {
  static const std::vector<std::vector<std::string>> cat = {
      {"E11.9", "E11.2", "E11.6", "E11.65"}, {"I25.1", "I25.10", "I25.2"},
      {"J45.2", "J45.9", "J45.50"},          {"N18.3", "N18.4", "N18.5"},
      {"K21.0", "K21.9"},                    {"F32.0", "F32.1", "F32.9"},
      {"M54.5", "M54.2", "M54.16"},          {"I48.0", "I48.2", "I48.91"},
      {"J18.9", "J18.1"},                    {"E78.0", "E78.5", "E78.1"}};
  return cat;
}

const std::vector<std::string>& drug_catalog() {
  static const std::vector<std::string> d = {
      "metformin",  "insulin glargine", "lisinopril", "amlodipine", "atorvastatin",
      "aspirin",    "clopidogrel",      "warfarin",   "apixaban",   "salbutamol",
      "budesonide", "omeprazole",       "sertraline", "ceftriaxone", "azithromycin",
      "furosemide"};
  return d;
}

const std::vector<std::string>& test_catalog() {
  static const std::vector<std::string> t = {
      "complete blood count", "urinalysis",  "chest x-ray",     "electrocardiogram",
      "hba1c",                "lipid panel", "troponin",        "lumbar puncture",
      "abdominal ultrasound", "thyroid function", "blood culture", "spirometry",
      "ferritin",             "d-dimer",     "colonoscopy",     "echocardiogram"};
  return t;
}

// k distinct indices from [0, n), in draw order.
std::vector<std::size_t> draw_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

std::string with_json(const std::string& reasoning, const json& answer) {
  return reasoning + " Final answer: " + answer.dump();
}

struct Drafts {
  std::string correct, near_miss, wrong, malformed;
  GoldLabel gold;
  std::string prompt;
};

Drafts diagnosis_drafts(Rng& rng, std::size_t i) {
  const auto& cat = icd_catalog();
  const auto cats = draw_distinct(rng, cat.size(), 2);
  const auto& family = cat[cats[0]];
  const auto pick = draw_distinct(rng, family.size(), 2);
  const std::string gold_code = family[pick[0]];
  const std::string sibling = family[pick[1]];
  const std::string other = cat[cats[1]][rng.below(cat[cats[1]].size())];

  Drafts d;
  d.gold = IcdGold{{*IcdCode::parse(gold_code)}};
  d.prompt = "Case " + std::to_string(i) +
             ": summarize the findings and give the ICD-10 diagnosis as JSON {\"diagnosis\": [...]}.";
  d.correct = with_json("Findings fit the primary diagnosis.", json{{"diagnosis", {gold_code}}});
  d.near_miss = with_json("Findings suggest a related condition.", json{{"diagnosis", {sibling}}});
  d.wrong = with_json("Findings point elsewhere.", json{{"diagnosis", {other}}});
  d.malformed = "Most likely diagnosis is " + gold_code + " but I am not certain";
  return d;
}

Drafts drug_drafts(Rng& rng, std::size_t i) {
  const auto& cat = drug_catalog();
  const std::size_t n_gold = 2 + rng.below(2);
  const auto idx = draw_distinct(rng, cat.size(), n_gold + 2);
  std::vector<std::string> gold, partial, wrong;
  for (std::size_t k = 0; k < n_gold; ++k) gold.push_back(cat[idx[k]]);
  partial.assign(gold.begin(), gold.end() - 1);
  wrong = {cat[idx[n_gold]], cat[idx[n_gold + 1]]};

  Drafts d;
  d.gold = DrugGold{{gold.begin(), gold.end()}};
  d.prompt = "Case " + std::to_string(i) + ": list the drugs to start as JSON {\"drugs\": [...]}.";
  d.correct = with_json("Start the full regimen.", json{{"drugs", gold}});
  d.near_miss = with_json("Start part of the regimen.", json{{"drugs", partial}});
  d.wrong = with_json("Consider an alternative regimen.", json{{"drugs", wrong}});
  d.malformed = "Drugs: " + gold.front() + ", " + gold.back();
  return d;
}

Drafts test_drafts(Rng& rng, std::size_t i) {
  const auto& cat = test_catalog();
  const std::size_t n_gold = 2;
  const auto idx = draw_distinct(rng, cat.size(), n_gold + 2);
  std::vector<std::string> gold = {cat[idx[0]], cat[idx[1]]};
  std::vector<std::string> wrong = {cat[idx[2]], cat[idx[3]]};

  Drafts d;
  d.gold = TestGold{{gold.begin(), gold.end()}};
  d.prompt = "Case " + std::to_string(i) + ": which tests should be ordered? Answer as JSON {\"tests\": [...]}.";
  d.correct = with_json("Order the targeted workup.", json{{"tests", gold}});
  d.near_miss = with_json("Order a partial workup.", json{{"tests", {gold.front()}}});
  d.wrong = with_json("Order an unrelated workup.", json{{"tests", wrong}});
  d.malformed = "Order tests as needed";
  return d;
}

Drafts exam_drafts(Rng& rng, std::size_t i, bool multi) {
  const std::string opts(kDefaultOptions);
  const auto idx = draw_distinct(rng, opts.size(), opts.size());
  std::set<char> gold;
  std::string gold_s, near_s, wrong_s;
  if (multi) {
    const std::size_t n = 2 + rng.below(2);
    for (std::size_t k = 0; k < n; ++k) gold.insert(opts[idx[k]]);
    for (char c : gold) gold_s += c;
    near_s = gold_s.substr(0, gold_s.size() - 1);
    wrong_s = std::string(1, opts[idx[n]]);
  } else {
    gold.insert(opts[idx[0]]);
    gold_s = std::string(1, opts[idx[0]]);
    near_s = std::string(1, opts[idx[1]]);
    wrong_s = std::string(1, opts[idx[2]]);
  }
  Drafts d;
  d.gold = ExamGold{gold, multi, opts};
  d.prompt = "Question " + std::to_string(i) + (multi ? " (select all that apply)" : "") +
             ": choose from A-E and answer as JSON {\"answer\": \"...\"}.";
  d.correct = with_json("Working through the options.", json{{"answer", gold_s}});
  d.near_miss = with_json("Working through the options.", json{{"answer", near_s}});
  d.wrong = with_json("Working through the options.", json{{"answer", wrong_s}});
  d.malformed = "The answer is " + gold_s;
  return d;
}

rl::FeatureVector features(Rng& rng, const std::string& payload, bool correct,
                           const CurriculumConfig& cfg) {
  rl::FeatureVector f(kFeatureDim);
  f[0] = correct ? rng.uniform(cfg.signal_lo, cfg.signal_hi) : rng.uniform(0.0, cfg.distractor_hi);
  f[1] = static_cast<double>(payload.size()) / 100.0;
  f[2] = static_cast<double>(rng.below(4));
  f[3] = rng.uniform();
  f[4] = rng.normal();
  f[5] = rng.normal();
  return f;
}

}  // namespace

CurriculumConfig training_config(std::uint64_t seed) {
  CurriculumConfig c;
  c.seed = seed;
  return c;
}

CurriculumConfig heldout_config(std::uint64_t seed) {
  CurriculumConfig c;
  for (auto& n : c.counts) n /= 4;
  c.id_prefix = "h";
  c.seed = derive_seed(seed, std::string_view("heldout"));
  return c;
}

std::vector<Sample> planted_curriculum(const CurriculumConfig& config) {
  if (!(config.signal_lo > config.distractor_hi)) {
    throw std::invalid_argument("curriculum: signal band must sit above distractor band");
  }
  if (config.multi_response_fraction < 0.0 || config.multi_response_fraction > 1.0) {
    throw std::invalid_argument("curriculum: multi_response_fraction must be in [0,1]");
  }
  std::vector<Sample> out;
  std::size_t serial = 0;
  for (std::size_t k = 0; k < kAllTaskKinds.size(); ++k) {
    const TaskKind kind = kAllTaskKinds[k];
    for (std::size_t i = 0; i < config.counts[k]; ++i, ++serial) {
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)));
      Drafts d;
      std::string strata(to_string(kind));
      switch (kind) {
        case TaskKind::Diagnosis: d = diagnosis_drafts(rng, serial); break;
        case TaskKind::DrugUse: d = drug_drafts(rng, serial); break;
        case TaskKind::TestOrdering: d = test_drafts(rng, serial); break;
        case TaskKind::ExamQuestion:
          d = exam_drafts(rng, serial, rng.uniform() < config.multi_response_fraction);
          strata = kExamLevels[rng.below(kExamLevels.size())];
          break;
      }
      Sample s;
      s.id = config.id_prefix + std::to_string(serial);
      s.kind = kind;
      s.prompt = d.prompt;
      s.gold = d.gold;
      s.strata_label = strata;
      const std::array<std::pair<std::string, bool>, 4> drafts = {
          std::pair{d.correct, true}, {d.near_miss, false}, {d.wrong, false}, {d.malformed, false}};
      std::vector<std::size_t> order = {0, 1, 2, 3};
      rng.shuffle(order);
      for (std::size_t o : order) {
        s.candidates.push_back({drafts[o].first, features(rng, drafts[o].first, drafts[o].second, config)});
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<std::size_t> apportion(std::span<const double> ratios, std::size_t total) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("apportion: ratios must be >= 0");
    sum += r;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("apportion: ratios must have positive sum");
  std::vector<std::size_t> counts(ratios.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double exact = static_cast<double>(total) * ratios[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++counts[remainders[j % remainders.size()].second];
  return counts;
}

std::vector<Sample> sample_mixture(std::span<const Sample> pool, std::span<const double> ratios,
                                   std::size_t total, std::uint64_t seed) {
  if (ratios.size() != kAllTaskKinds.size()) {
    throw std::invalid_argument("sample_mixture: need one ratio per task kind");
  }
  const auto counts = apportion(ratios, total);
  std::vector<std::size_t> chosen;
  for (std::size_t k = 0; k < kAllTaskKinds.size(); ++k) {
    if (counts[k] == 0) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i].kind == kAllTaskKinds[k]) members.push_back(i);
    }
    if (members.empty()) throw std::invalid_argument("sample_mixture: pool lacks a requested kind");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    const std::size_t take = std::min(counts[k], members.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(members[i], members[i + rng.below(members.size() - i)]);
      chosen.push_back(members[i]);
    }
    for (std::size_t i = take; i < counts[k]; ++i) chosen.push_back(members[rng.below(members.size())]);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<Sample> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.push_back(pool[i]);
  return out;
}

}  // namespace medrl::curriculum
