#include "medrl/data_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "medrl/common.hpp"

namespace medrl::data {

using nlohmann::json;

std::string to_string(const SpoTriple& t) {
  return "(" + t.subject + ", " + t.predicate + ", " + t.object + ")";
}

TripleFile parse_triples_tsv(std::string_view contents) {
  TripleFile out;
  std::size_t line_no = 0;
  for (const auto& raw : split(contents, '\n')) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 3) {
      out.errors.push_back({line_no, "expected 3 tab-separated columns, got " + std::to_string(cols.size())});
      continue;
    }
    SpoTriple t{trim(cols[0]), trim(cols[1]), trim(cols[2])};
    if (t.subject.empty() || t.predicate.empty() || t.object.empty()) {
      out.errors.push_back({line_no, "empty field"});
      continue;
    }
    out.triples.push_back(std::move(t));
  }
  return out;
}

TripleFile read_triples_tsv(const std::string& path) { return parse_triples_tsv(read_file(path)); }

std::string to_tsv(std::span<const SpoTriple> triples) {
  std::string out;
  for (const auto& t : triples) out += t.subject + '\t' + t.predicate + '\t' + t.object + '\n';
  return out;
}

const char* TemplateSet::builtin_json() {
  return R"json({
  "predicates": {
    "treats": {
      "templates": ["{S} is used to treat {O}.", "{S} is a first-line therapy for {O}."],
      "pattern": "^(.+) (?:is used to treat|is a first-line therapy for) (.+)\\.$"
    },
    "indicates": {
      "templates": ["{S} is a sign that points to {O}.", "{S} suggests a diagnosis of {O}."],
      "pattern": "^(.+) (?:is a sign that points to|suggests a diagnosis of) (.+)\\.$"
    },
    "contraindicated_for": {
      "templates": ["{S} should be avoided in patients with {O}.", "{S} is contraindicated in {O}."],
      "pattern": "^(.+) (?:should be avoided in patients with|is contraindicated in) (.+)\\.$"
    },
    "diagnosed_by": {
      "templates": ["{S} is diagnosed by {O}.", "{S} can be confirmed with {O}."],
      "pattern": "^(.+) (?:is diagnosed by|can be confirmed with) (.+)\\.$"
    },
    "causes": {
      "templates": ["{S} is a known cause of {O}.", "{S} may lead to {O}."],
      "pattern": "^(.+) (?:is a known cause of|may lead to) (.+)\\.$"
    },
    "prevents": {
      "templates": ["{S} helps prevent {O}.", "{S} lowers the risk of {O}."],
      "pattern": "^(.+) (?:helps prevent|lowers the risk of) (.+)\\.$"
    }
  }
})json";
}

namespace {

void check_template(const std::string& name, const std::string& t) {
  const auto s = t.find("{S}");
  const auto o = t.find("{O}");
  if (s == std::string::npos || o == std::string::npos || t.find("{S}", s + 1) != std::string::npos ||
      t.find("{O}", o + 1) != std::string::npos) {
    throw std::invalid_argument("template for " + name + " needs exactly one {S} and one {O}: " + t);
  }
  if (s > o) throw std::invalid_argument("template for " + name + " must place {S} before {O}: " + t);
}

std::string fill(const std::string& tmpl, const SpoTriple& t) {
  std::string out = tmpl;
  out.replace(out.find("{S}"), 3, t.subject);
  out.replace(out.find("{O}"), 3, t.object);
  return out;
}

std::vector<std::string> sentences_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur.push_back(text[i]);
    const bool boundary = text[i] == '.' && (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (boundary) {
      auto s = trim(cur);
      if (!s.empty()) out.push_back(std::move(s));
      cur.clear();
    }
  }
  auto s = trim(cur);
  if (!s.empty()) out.push_back(std::move(s));
  return out;
}

bool field_charset_ok(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == ' ' || c == '-' || c == '\'' || c == '(' || c == ')' ||
           c == ',' || c == '/' || c == '+';
  });
}

}  // namespace

TemplateSet TemplateSet::from_json(const json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "predicates") throw std::invalid_argument("templates: unknown key " + it.key());
  }
  TemplateSet ts;
  const auto& preds = j.at("predicates");
  if (!preds.is_object() || preds.empty()) throw std::invalid_argument("templates: no predicates");
  for (auto it = preds.begin(); it != preds.end(); ++it) {
    const std::string name = it.key();
    const auto& pj = it.value();
    for (auto k = pj.begin(); k != pj.end(); ++k) {
      static const std::set<std::string> allowed = {"templates", "pattern", "subject_group", "object_group"};
      if (!allowed.count(k.key())) throw std::invalid_argument("templates." + name + ": unknown key " + k.key());
    }
    PredicateSpec spec;
    spec.templates = pj.at("templates").get<std::vector<std::string>>();
    if (spec.templates.empty()) throw std::invalid_argument("templates." + name + ": no templates");
    spec.pattern = pj.at("pattern").get<std::string>();
    spec.subject_group = pj.value("subject_group", 1);
    spec.object_group = pj.value("object_group", 2);
    for (const auto& t : spec.templates) check_template(name, t);
    try {
      spec.compiled = std::regex(spec.pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw std::invalid_argument("templates." + name + ": bad pattern: " + e.what());
    }
    const auto groups = static_cast<int>(spec.compiled.mark_count());
    if (spec.subject_group < 1 || spec.object_group < 1 || spec.subject_group > groups ||
        spec.object_group > groups || spec.subject_group == spec.object_group) {
      throw std::invalid_argument("templates." + name + ": group indices out of range");
    }
    ts.specs_.emplace(name, std::move(spec));
  }
  // every template must round-trip a plain probe triple through its pattern
  for (const auto& [name, spec] : ts.specs_) {
    const SpoTriple probe{"Probe subject", name, "probe object"};
    for (std::size_t v = 0; v < spec.templates.size(); ++v) {
      const auto got = extract_triples(spo_to_text(probe, ts, v), ts);
      if (got.size() != 1 || got.front() != probe) {
        throw std::invalid_argument("templates." + name + ": template " + std::to_string(v) +
                                    " does not round-trip through its pattern");
      }
    }
  }
  return ts;
}

TemplateSet TemplateSet::load(const std::string& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

TemplateSet TemplateSet::builtin() { return from_json(json::parse(builtin_json())); }

bool TemplateSet::has(std::string_view predicate) const { return specs_.find(predicate) != specs_.end(); }

const PredicateSpec& TemplateSet::spec(std::string_view predicate) const {
  auto it = specs_.find(predicate);
  if (it == specs_.end()) throw std::invalid_argument("unknown predicate: " + std::string(predicate));
  return it->second;
}

std::vector<std::size_t> stratified_indices(std::span<const std::string> labels,
                                            std::size_t per_label_target, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  std::vector<std::size_t> out;
  for (auto& [label, idx] : by_label) {
    const std::size_t take = std::min(per_label_target, idx.size());
    Rng rng(derive_seed(seed, std::string_view(label)));
    for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

DifficultyResult difficulty_filter(std::span<const rl::Sample> dataset, const rl::Policy& policy,
                                   const rl::RewardTable& rewards, int k, double lo, double hi,
                                   std::uint64_t seed, int parallelism) {
  if (!(0.0 <= lo && lo <= hi && hi <= 1.0)) {
    throw std::invalid_argument("difficulty_filter: need 0 <= lo <= hi <= 1");
  }
  if (k < 2) throw std::invalid_argument("difficulty_filter: need k >= 2 probe rollouts");
  DifficultyResult res;
  res.stats.resize(dataset.size());
  parallel_for(dataset.size(), parallelism, [&](std::size_t i) {
    const auto g = rl::rollout(policy, dataset[i], k, derive_seed(seed, std::string_view(dataset[i].id)));
    int passes = 0;
    for (std::size_t a : g.actions) passes += rewards.reward(i, a) >= rl::kPassReward ? 1 : 0;
    res.stats[i] = {dataset[i].id, static_cast<double>(passes) / k, k};
  });
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (res.stats[i].pass_rate >= lo && res.stats[i].pass_rate <= hi) res.kept.push_back(i);
  }
  return res;
}

std::string spo_to_text(const SpoTriple& triple, const TemplateSet& templates, std::size_t variant_index) {
  if (trim(triple.subject).empty() || trim(triple.predicate).empty() || trim(triple.object).empty()) {
    throw std::invalid_argument("spo_to_text: subject, predicate and object must be non-empty");
  }
  const auto& spec = templates.spec(triple.predicate);
  if (variant_index >= spec.templates.size()) {
    throw std::out_of_range("spo_to_text: variant " + std::to_string(variant_index) + " out of range for " +
                            triple.predicate);
  }
  return fill(spec.templates[variant_index], triple);
}

std::vector<SpoTriple> extract_triples(std::string_view text, const TemplateSet& templates) {
  std::vector<SpoTriple> out;
  for (const auto& sentence : sentences_of(text)) {
    for (const auto& [name, spec] : templates.predicates()) {
      std::smatch m;
      if (std::regex_match(sentence, m, spec.compiled)) {
        out.push_back({trim(m[spec.subject_group].str()), name, trim(m[spec.object_group].str())});
      }
    }
  }
  return out;
}

RoundtripResult roundtrip_filter(std::span<const SpoTriple> triples, const TemplateSet& templates,
                                 const QualityLimits& limits) {
  RoundtripResult res;
  for (const auto& t : triples) {
    auto reject = [&](std::string reason, std::string detail) {
      res.rejected.push_back({t, std::move(reason), std::move(detail)});
    };
    if (trim(t.subject).empty() || trim(t.predicate).empty() || trim(t.object).empty()) {
      reject("empty_field", "subject, predicate and object must be non-empty");
      continue;
    }
    if (!templates.has(t.predicate)) {
      reject("unknown_predicate", t.predicate);
      continue;
    }
    if (t.subject.size() > limits.max_field_chars || t.object.size() > limits.max_field_chars) {
      reject("length", "field longer than " + std::to_string(limits.max_field_chars) + " characters");
      continue;
    }
    if (!field_charset_ok(t.subject) || !field_charset_ok(t.object)) {
      reject("charset", "fields may contain letters, digits, spaces and - ' ( ) , / +");
      continue;
    }
    const auto& spec = templates.spec(t.predicate);
    std::vector<AcceptedSentence> ok;
    std::string failure;
    for (std::size_t v = 0; v < spec.templates.size() && failure.empty(); ++v) {
      const std::string sentence = spo_to_text(t, templates, v);
      if (sentence.size() > limits.max_sentence_chars) {
        failure = "length";
        reject("length", "sentence longer than " + std::to_string(limits.max_sentence_chars) + " characters");
        break;
      }
      const auto back = extract_triples(sentence, templates);
      if (back.size() != 1 || back.front() != t) {
        failure = "roundtrip_mismatch";
        std::string got;
        for (const auto& b : back) got += (got.empty() ? "" : "; ") + to_string(b);
        reject("roundtrip_mismatch", "\"" + sentence + "\" -> [" + got + "]");
        break;
      }
      ok.push_back({t, v, sentence});
    }
    if (failure.empty()) res.accepted.insert(res.accepted.end(), ok.begin(), ok.end());
  }
  return res;
}

json to_json(const AcceptedSentence& s) {
  return {{"subject", s.triple.subject}, {"predicate", s.triple.predicate}, {"object", s.triple.object},
          {"variant", s.variant},        {"sentence", s.sentence}};
}

json to_json(const RejectedTriple& r) {
  return {{"subject", r.triple.subject}, {"predicate", r.triple.predicate}, {"object", r.triple.object},
          {"reason", r.reason},          {"detail", r.detail}};
}

std::vector<std::pair<int, std::size_t>> mix_by_ratio(std::size_t primary_n, std::size_t secondary_n,
                                                      double ratio, std::size_t total, std::uint64_t seed) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw std::invalid_argument("mix_by_ratio: ratio must be > 0");
  const std::size_t want_primary =
      static_cast<std::size_t>(std::llround(static_cast<double>(total) * ratio / (ratio + 1.0)));
  std::size_t np = std::min(want_primary, primary_n);
  std::size_t ns = std::min(total - np, secondary_n);
  np = std::min(primary_n, total - ns);  // backfill from primary when secondary runs short

  auto draw = [](std::size_t n, std::size_t k, std::uint64_t s) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(s);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    return idx;
  };
  const auto p = draw(primary_n, np, derive_seed(seed, 0ULL));
  const auto q = draw(secondary_n, ns, derive_seed(seed, 1ULL));

  // Interleave so every prefix stays close to the target ratio.
  std::vector<std::pair<int, std::size_t>> out;
  std::size_t i = 0, j = 0;
  while (i < p.size() || j < q.size()) {
    const bool take_primary =
        j >= q.size() || (i < p.size() && static_cast<double>(i) <= ratio * static_cast<double>(j));
    if (take_primary) out.emplace_back(0, p[i++]);
    else out.emplace_back(1, q[j++]);
  }
  return out;
}

std::vector<std::size_t> select_by_reward_diversity(std::span<const std::vector<double>> group_rewards,
                                                    std::size_t k) {
  std::vector<std::pair<double, std::size_t>> spread;
  for (std::size_t i = 0; i < group_rewards.size(); ++i) {
    const auto& r = group_rewards[i];
    double sd = 0.0;
    if (!r.empty()) {
      const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
      for (double x : r) sd += (x - mean) * (x - mean);
      sd = std::sqrt(sd / static_cast<double>(r.size()));
    }
    spread.emplace_back(sd, i);
  }
  std::stable_sort(spread.begin(), spread.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, spread.size()); ++i) out.push_back(spread[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace medrl::data
