#include "medrl/eval_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <regex>
#include <set>
#include <sstream>

#include "medrl/common.hpp"
#include "medrl/json_io.hpp"

namespace medrl::eval {

using nlohmann::json;

std::string_view to_string(QuestionType t) {
  switch (t) {
    case QuestionType::MultipleChoice: return "multiple_choice";
    case QuestionType::MultipleResponse: return "multiple_response";
    case QuestionType::SharedStem: return "shared_stem";
    case QuestionType::CaseAnalysis: return "case_analysis";
    case QuestionType::OpenEnded: return "open_ended";
  }
  return "multiple_choice";
}

QuestionType question_type_from_string(std::string_view s) {
  for (auto t : kAllQuestionTypes) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown question type: " + std::string(s));
}

bool is_choice(QuestionType t) { return t != QuestionType::OpenEnded; }

namespace {

std::map<char, std::string> parse_options(const json& j) {
  if (!j.is_object() || j.empty()) throw std::invalid_argument("options must be a non-empty object");
  std::map<char, std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = to_upper(trim(it.key()));
    if (k.size() != 1 || k[0] < 'A' || k[0] > 'Z') throw std::invalid_argument("option key must be a letter: " + it.key());
    out[k[0]] = it.value().get<std::string>();
  }
  return out;
}

std::set<char> parse_letters(const json& j) {
  std::set<char> out;
  auto add = [&](const std::string& s) {
    for (char c : s) {
      if (std::isalpha(static_cast<unsigned char>(c))) out.insert(static_cast<char>(std::toupper(c)));
      else if (c != ',' && c != ' ' && c != ';' && c != '/') throw std::invalid_argument("bad answer letters: " + s);
    }
  };
  if (j.is_string()) add(j.get<std::string>());
  else if (j.is_array()) for (const auto& e : j) add(e.get<std::string>());
  else throw std::invalid_argument("answer must be a string or array of letters");
  if (out.empty()) throw std::invalid_argument("answer is empty");
  return out;
}

BenchmarkItem parse_item(const json& j, const std::string& schema, const std::string& benchmark) {
  BenchmarkItem it;
  it.benchmark = benchmark;
  it.id = j.at("id").get<std::string>();
  if (trim(it.id).empty()) throw std::invalid_argument("empty id");
  it.question = j.at("question").get<std::string>();
  it.subject = j.value("subject", std::string());
  it.subset = j.value("subset", std::string());
  if (schema == "mcq" || schema == "multi_response") {
    reject_unknown_keys(j, {"id", "question", "options", "answer", "subject", "subset", "question_type", "category"},
                        "benchmark item");
    it.options = parse_options(j.at("options"));
    if (!j.contains("answer")) throw std::invalid_argument("missing gold answer");
    const auto letters = parse_letters(j.at("answer"));
    std::string opts;
    for (const auto& [k, _] : it.options) opts += k;
    const bool multi = schema == "multi_response";
    it.question_type = multi ? QuestionType::MultipleResponse
                             : question_type_from_string(j.value("question_type", std::string("multiple_choice")));
    if (!is_choice(it.question_type)) throw std::invalid_argument("choice schema with open-ended type");
    if (it.question_type == QuestionType::MultipleResponse && !multi) {
      throw std::invalid_argument("use the multi_response adapter for multiple-response items");
    }
    if (!multi && letters.size() != 1) throw std::invalid_argument("single-answer item with several letters");
    ExamGold g{letters, multi, opts};
    validate_gold(g);
    it.exam_gold = g;
  } else if (schema == "open_ended") {
    reject_unknown_keys(j, {"id", "question", "reference", "max_score", "subject", "subset", "category"},
                        "benchmark item");
    if (!j.contains("reference")) throw std::invalid_argument("missing reference answer");
    it.reference = j.at("reference").get<std::string>();
    if (trim(it.reference).empty()) throw std::invalid_argument("empty reference answer");
    it.max_score = j.value("max_score", 4.0);
    if (!(it.max_score > 0.0)) throw std::invalid_argument("max_score must be > 0");
    it.question_type = QuestionType::OpenEnded;
  } else {
    throw std::invalid_argument("unknown benchmark schema: " + schema);
  }
  return it;
}

}  // namespace

LoadResult parse_benchmark(std::string_view contents, const std::string& schema,
                           const std::string& benchmark_name, const std::string& subset,
                           double max_malformed_fraction) {
  if (schema != "mcq" && schema != "multi_response" && schema != "open_ended") {
    throw std::invalid_argument("unknown benchmark schema: " + schema);
  }
  LoadResult res;
  std::set<std::string> seen;
  for (const auto& line : parse_jsonl(contents)) {
    ++res.total_lines;
    if (!line.error.empty()) {
      res.errors.push_back({line.line_no, line.error});
      continue;
    }
    try {
      auto item = parse_item(line.value, schema, benchmark_name);
      if (!seen.insert(item.id).second) throw std::invalid_argument("duplicate id " + item.id);
      if (!subset.empty() && to_lower(item.subset) != to_lower(subset)) continue;
      res.items.push_back(std::move(item));
    } catch (const std::exception& e) {
      res.errors.push_back({line.line_no, e.what()});
    }
  }
  if (res.total_lines > 0 &&
      static_cast<double>(res.errors.size()) > max_malformed_fraction * static_cast<double>(res.total_lines)) {
    std::ostringstream msg;
    msg << benchmark_name << ": " << res.errors.size() << " of " << res.total_lines
        << " lines malformed (limit " << max_malformed_fraction * 100.0 << "%)";
    for (const auto& e : res.errors) msg << "\n  line " << e.line_no << ": " << e.message;
    throw BenchmarkLoadError(msg.str(), std::move(res));
  }
  return res;
}

LoadResult load_benchmark(const std::string& path, const std::string& schema, const std::string& subset,
                          const std::string& benchmark_name, double max_malformed_fraction) {
  const std::string name =
      benchmark_name.empty() ? std::filesystem::path(path).stem().string() : benchmark_name;
  return parse_benchmark(read_file(path), schema, name, subset, max_malformed_fraction);
}

std::vector<BenchmarkItem> uniform_sample(std::span<const BenchmarkItem> items, std::size_t cap,
                                          std::uint64_t seed) {
  if (cap < 1) throw std::invalid_argument("uniform_sample: cap must be >= 1");
  if (items.size() <= cap) return {items.begin(), items.end()};
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  keyed.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    keyed.emplace_back(derive_seed(seed, std::string_view(items[i].id)), i);
  }
  std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(cap), keyed.end());
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < cap; ++i) chosen.push_back(keyed[i].second);
  std::sort(chosen.begin(), chosen.end());
  std::vector<BenchmarkItem> out;
  for (std::size_t i : chosen) out.push_back(items[i]);
  return out;
}

std::string build_prompt(const BenchmarkItem& item, const PromptSpec& spec) {
  std::string options;
  std::string answer_format;
  if (is_choice(item.question_type)) {
    for (const auto& [k, v] : item.options) options += std::string(1, k) + ". " + v + "\n";
    options += "\n";
    answer_format = item.question_type == QuestionType::MultipleResponse
                        ? "Select all correct options. Provide the final answer in JSON format: "
                          "{\"answer\": \"<letters>\"}."
                        : "Provide the final answer in JSON format: {\"answer\": \"<letter>\"}.";
  } else {
    answer_format = "Answer in plain text.";
  }
  const std::map<std::string, std::string> values = {
      {"question", item.question}, {"options", options}, {"answer_format", answer_format}, {"subject", item.subject}};

  static const std::regex placeholder(R"(\{([a-z_]+)\})");
  std::string body;
  std::size_t last = 0;
  for (auto it = std::sregex_iterator(spec.tmpl.begin(), spec.tmpl.end(), placeholder);
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto v = values.find(m[1].str());
    if (v == values.end()) throw std::invalid_argument("unresolved placeholder {" + m[1].str() + "} in prompt template");
    body.append(spec.tmpl, last, static_cast<std::size_t>(m.position(0)) - last);
    body += v->second;
    last = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  body.append(spec.tmpl, last, std::string::npos);
  return spec.leading_text.empty() ? body : spec.leading_text + "\n\n" + body;
}

std::string gold_response(const BenchmarkItem& item) {
  if (!is_choice(item.question_type)) return item.reference;
  std::string letters;
  for (char c : item.exam_gold->letters) letters += c;
  return json{{"answer", letters}}.dump();
}

TableClient make_gold_echo(std::span<const BenchmarkItem> items, const PromptSpec& spec) {
  std::map<std::string, std::string> table;
  for (const auto& it : items) table[build_prompt(it, spec)] = gold_response(it);
  return TableClient(std::move(table), "mock");
}

std::vector<Transcript> run_eval(std::span<const BenchmarkItem> items, ModelClient& client,
                                 const PromptSpec& spec, const RunOptions& options) {
  std::vector<Transcript> out(items.size());
  parallel_for(items.size(), options.parallelism, [&](std::size_t i) {
    Transcript& t = out[i];
    t.item_id = items[i].id;
    t.prompt = build_prompt(items[i], spec);
    const auto start = std::chrono::steady_clock::now();
    try {
      t.response = client.complete(t.prompt, options.temperature);
    } catch (const std::exception& e) {
      t.error = e.what();
      t.error = t.error.empty() ? "client failure" : t.error;
    }
    t.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  });
  return out;
}

double normalize_cmb(double score_4pt) {
  if (!(score_4pt >= 0.0 && score_4pt <= 4.0)) {
    throw std::out_of_range("normalize_cmb: score must lie in [0,4]");
  }
  return score_4pt / 4.0;
}

namespace {

std::string fill_rubric(const JudgeSpec& spec, const BenchmarkItem& item, const std::string& response) {
  std::string out = spec.rubric;
  auto replace_all = [&](const std::string& key, const std::string& value) {
    for (std::size_t p = out.find(key); p != std::string::npos; p = out.find(key, p + value.size())) {
      out.replace(p, key.size(), value);
    }
  };
  replace_all("{max_score}", fmt_double(item.max_score, std::floor(item.max_score) == item.max_score ? 0 : 2));
  replace_all("{question}", item.question);
  replace_all("{reference}", item.reference);
  replace_all("{response}", response);
  return out;
}

std::optional<double> parse_grade(const std::string& text) {
  static const std::regex num(R"(-?[0-9]+(?:\.[0-9]+)?)");
  std::smatch m;
  if (!std::regex_search(text, m, num)) return std::nullopt;
  try {
    return std::stod(m.str());
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

ItemScore score_item(const BenchmarkItem& item, const Transcript& transcript, ModelClient* judge,
                     const JudgeSpec& judge_spec) {
  ItemScore s;
  s.item_id = item.id;
  s.benchmark = item.benchmark;
  s.subject = item.subject;
  s.question_type = item.question_type;
  s.max_score = is_choice(item.question_type) ? 1.0 : item.max_score;
  if (!is_choice(item.question_type) && judge == nullptr) {
    throw std::invalid_argument("open-ended item " + item.id + " needs a judge client");
  }
  if (!transcript.ok()) {
    s.answered = false;
    s.flag = "unanswered";
    return s;
  }
  if (is_choice(item.question_type)) {
    const auto parsed = parse_response(TaskKind::ExamQuestion, transcript.response);
    std::set<char> pred;
    if (parsed.format_valid) pred = std::get<ExamResponse>(parsed.payload).letters;
    s.raw = verify_exam(pred, *item.exam_gold);
    s.normalized = s.raw;
    return s;
  }
  std::string grade_text;
  try {
    grade_text = judge->complete(fill_rubric(judge_spec, item, transcript.response), judge_spec.temperature);
  } catch (const std::exception&) {
    s.flag = "judge_failed";
    return s;
  }
  const auto g = parse_grade(grade_text);
  if (!g || *g < 0.0 || *g > item.max_score) {
    s.flag = "judge_unparsable";
    return s;
  }
  s.raw = *g;
  s.normalized = item.max_score == 4.0 ? normalize_cmb(*g) : *g / item.max_score;
  return s;
}

EvalReport aggregate_report(std::span<const ItemScore> scores) {
  EvalReport r;
  for (const auto& s : scores) {
    if (!(s.normalized >= 0.0 && s.normalized <= 1.0)) {
      throw std::logic_error("aggregate_report: unnormalized score for item " + s.item_id);
    }
    auto& c = r.cells[{s.benchmark, s.subject, s.question_type}];
    ++c.n;
    c.sum += s.normalized;
    auto& b = r.per_benchmark[s.benchmark];
    ++b.n;
    b.sum += s.normalized;
    ++r.items;
    r.unanswered += s.answered ? 0 : 1;
    r.records.push_back(s);
  }
  double total = 0.0;
  std::size_t nb = 0;
  for (const auto& [_, b] : r.per_benchmark) {
    if (b.n == 0) continue;
    total += b.mean();
    ++nb;
  }
  if (nb > 0) r.overall = total / static_cast<double>(nb);
  return r;
}

std::string render_markdown(const EvalReport& report) {
  std::ostringstream md;
  md << "## Evaluation report\n\n";
  md << "| benchmark | items | accuracy |\n|---|---|---|\n";
  for (const auto& [name, b] : report.per_benchmark) {
    md << "| " << name << " | " << b.n << " | " << fmt_double(b.mean(), 4) << " |\n";
  }
  md << "| overall (mean of benchmarks) | " << report.items << " | "
     << (report.overall ? fmt_double(*report.overall, 4) : "n/a") << " |\n\n";
  md << "Unanswered items are scored 0: " << report.unanswered << " of " << report.items;
  if (report.items > 0 && report.unanswered == report.items) md << " (100% client failure)";
  md << ".\n";

  for (const auto& [name, _] : report.per_benchmark) {
    std::set<std::string> subjects(kSubjectLevels.begin(), kSubjectLevels.end());
    for (const auto& [key, c] : report.cells) {
      if (std::get<0>(key) == name) subjects.insert(std::get<1>(key));
    }
    std::vector<std::string> rows(kSubjectLevels.begin(), kSubjectLevels.end());
    for (const auto& s : subjects) {
      if (std::find(rows.begin(), rows.end(), s) == rows.end()) rows.push_back(s);
    }
    md << "\n### " << name << "\n\n| subject |";
    for (auto t : kAllQuestionTypes) md << ' ' << to_string(t) << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < kAllQuestionTypes.size(); ++i) md << "---|";
    md << '\n';
    for (const auto& s : rows) {
      md << "| " << (s.empty() ? "(none)" : s) << " |";
      for (auto t : kAllQuestionTypes) {
        auto it = report.cells.find({name, s, t});
        md << ' ' << (it == report.cells.end() || it->second.n == 0 ? "n/a" : fmt_double(it->second.mean(), 4)) << " |";
      }
      md << '\n';
    }
  }
  return md.str();
}

std::string render_csv(const EvalReport& report) {
  std::ostringstream csv;
  csv << "benchmark,subject,question_type,n,accuracy\n";
  for (const auto& [key, c] : report.cells) {
    csv << std::get<0>(key) << ',' << std::get<1>(key) << ',' << to_string(std::get<2>(key)) << ',' << c.n << ','
        << fmt_double(c.mean(), 6) << '\n';
  }
  for (const auto& [name, b] : report.per_benchmark) {
    csv << name << ",*,*," << b.n << ',' << fmt_double(b.mean(), 6) << '\n';
  }
  csv << "overall,*,*," << report.items << ',' << (report.overall ? fmt_double(*report.overall, 6) : "n/a") << '\n';
  return csv.str();
}

std::string render_items_csv(const EvalReport& report) {
  std::ostringstream csv;
  csv << "item_id,benchmark,subject,question_type,raw,max_score,normalized,answered,flag\n";
  for (const auto& s : report.records) {
    csv << s.item_id << ',' << s.benchmark << ',' << s.subject << ',' << to_string(s.question_type) << ','
        << fmt_double(s.raw, 4) << ',' << fmt_double(s.max_score, 2) << ',' << fmt_double(s.normalized, 6) << ','
        << (s.answered ? 1 : 0) << ',' << s.flag << '\n';
  }
  return csv.str();
}

}  // namespace medrl::eval
