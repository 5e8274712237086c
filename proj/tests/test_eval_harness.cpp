#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "medrl/common.hpp"
#include "medrl/eval_harness.hpp"
#include "medrl/workbench.hpp"

using namespace medrl;
using namespace medrl::eval;

namespace {

const char* kThree =
    R"({"id":"q1","question":"Which?","options":{"A":"x","B":"y","C":"z"},"answer":"C","subset":"USMLE","subject":"Primary"}
{"id":"q2","question":"Which two?","options":{"A":"x","B":"y","C":"z"},"answer":"B","subset":"mcmle"}
{"id":"q3","question":"Which one?","options":{"A":"x","B":"y"},"answer":"A","subset":"usmle","question_type":"case_analysis"}
)";

std::vector<BenchmarkItem> many(std::size_t n) {
  std::vector<BenchmarkItem> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = "item-" + std::to_string(i);
    out[i].question = "q" + std::to_string(i);
    out[i].options = {{'A', "a"}, {'B', "b"}};
    out[i].exam_gold = ExamGold{{'A'}, false, "AB"};
  }
  return out;
}

}  // namespace

TEST(LoadBenchmark, WellFormed) {
  const auto r = parse_benchmark(kThree, "mcq", "fx");
  ASSERT_EQ(r.items.size(), 3u);
  EXPECT_TRUE(r.errors.empty());
  EXPECT_EQ(r.items[1].options.at('B'), "y");
  EXPECT_EQ(r.items[2].question_type, QuestionType::CaseAnalysis);
}

TEST(LoadBenchmark, MissingGoldReported) {
  std::string text = kThree;
  text += R"({"id":"q4","question":"No gold","options":{"A":"x","B":"y"}})" "\n";
  const auto r = parse_benchmark(text, "mcq", "fx", "", 0.5);
  EXPECT_EQ(r.items.size(), 3u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line_no, 4u);
  EXPECT_NE(r.errors[0].message.find("gold"), std::string::npos);
  EXPECT_THROW(parse_benchmark(text, "mcq", "fx"), BenchmarkLoadError);
}

TEST(LoadBenchmark, SubsetFilter) {
  const auto r = parse_benchmark(kThree, "mcq", "fx", "usmle");
  ASSERT_EQ(r.items.size(), 2u);
  for (const auto& it : r.items) EXPECT_EQ(to_lower(it.subset), "usmle");
}

TEST(LoadBenchmark, UnknownKeyAndSchema) {
  const auto r = parse_benchmark(
      R"({"id":"q","question":"x","options":{"A":"x"},"answer":"A","bogus":1})", "mcq", "fx", "", 1.0);
  EXPECT_EQ(r.errors.size(), 1u);
  EXPECT_THROW(parse_benchmark("", "csv", "fx"), std::invalid_argument);
}

TEST(UniformSample, Examples) {
  const auto small = many(500);
  EXPECT_EQ(uniform_sample(small, 1000, 1).size(), 500u);
  const auto big = many(5000);
  const auto s = uniform_sample(big, 1000, 1);
  EXPECT_EQ(s.size(), 1000u);
  std::set<std::string> ids;
  for (const auto& it : s) ids.insert(it.id);
  EXPECT_EQ(ids.size(), 1000u);
  const auto again = uniform_sample(big, 1000, 1);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i].id, again[i].id);
}

TEST(BuildPrompt, Examples) {
  const auto items = parse_benchmark(kThree, "mcq", "fx").items;
  const auto p = build_prompt(items[0]);
  for (const char* opt : {"A. x", "B. y", "C. z"}) EXPECT_NE(p.find(opt), std::string::npos);
  EXPECT_NE(p.find("JSON"), std::string::npos);
  PromptSpec spec;
  spec.leading_text = "You are a careful physician.";
  EXPECT_EQ(build_prompt(items[0], spec).rfind(spec.leading_text, 0), 0u);

  BenchmarkItem open;
  open.id = "o";
  open.question = "Plan?";
  open.question_type = QuestionType::OpenEnded;
  open.reference = "r";
  const auto po = build_prompt(open);
  EXPECT_EQ(po.find("A. "), std::string::npos);

  spec.tmpl = "{question} {nope}";
  EXPECT_THROW(build_prompt(items[0], spec), std::invalid_argument);
}

TEST(RunEval, GoldEchoReplayAndFailure) {
  const auto items = parse_benchmark(kThree, "mcq", "fx").items;
  auto mock = make_gold_echo(items);
  const auto ts = run_eval(items, mock);
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_TRUE(ts[i].ok());
    EXPECT_EQ(ts[i].response, gold_response(items[i]));
    EXPECT_EQ(score_item(items[i], ts[i]).normalized, 1.0);
  }
  ReplayClient replay(ts);
  const auto rs = run_eval(items, replay);
  for (std::size_t i = 0; i < items.size(); ++i) EXPECT_EQ(rs[i].response, ts[i].response);

  FnClient broken([](const std::string&, double) -> std::string { throw ClientError("down"); });
  const auto fs = run_eval(items, broken);
  std::vector<ItemScore> scores;
  for (std::size_t i = 0; i < items.size(); ++i) scores.push_back(score_item(items[i], fs[i]));
  const auto rep = aggregate_report(scores);
  EXPECT_EQ(rep.unanswered, 3u);
  EXPECT_NE(render_markdown(rep).find("100% client failure"), std::string::npos);
}

TEST(TranscriptsFile, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "medrl_transcripts_test";
  std::filesystem::create_directories(dir);
  const std::vector<Transcript> ts{{"a", "p1", "r1", 3.5, ""}, {"b", "p2", "", 1.0, "timeout"}};
  write_transcripts((dir / "t.jsonl").string(), ts);
  const auto back = read_transcripts((dir / "t.jsonl").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].error, "timeout");
  EXPECT_EQ(back[0].response, "r1");
  std::filesystem::remove_all(dir);
}

TEST(ScoreItem, Examples) {
  BenchmarkItem mcq;
  mcq.id = "m";
  mcq.options = {{'A', "a"}, {'B', "b"}, {'C', "c"}};
  mcq.exam_gold = ExamGold{{'C'}, false, "ABC"};
  EXPECT_EQ(score_item(mcq, {"m", "p", R"({"answer":"C"})", 0, ""}).raw, 1.0);

  BenchmarkItem mr = mcq;
  mr.question_type = QuestionType::MultipleResponse;
  mr.exam_gold = ExamGold{{'A', 'C'}, true, "ABC"};
  EXPECT_EQ(score_item(mr, {"m", "p", R"({"answer":"A"})", 0, ""}).raw, 0.0);

  BenchmarkItem open;
  open.id = "o";
  open.question_type = QuestionType::OpenEnded;
  open.reference = "ref";
  open.max_score = 4.0;
  FnClient judge([](const std::string&, double) { return std::string("3.5"); });
  const auto s = score_item(open, {"o", "p", "answer", 0, ""}, &judge);
  EXPECT_EQ(s.raw, 3.5);
  EXPECT_EQ(s.normalized, 0.875);
  EXPECT_THROW(score_item(open, {"o", "p", "answer", 0, ""}), std::invalid_argument);

  FnClient junk([](const std::string&, double) { return std::string("excellent"); });
  EXPECT_EQ(score_item(open, {"o", "p", "answer", 0, ""}, &junk).flag, "judge_unparsable");
}

TEST(NormalizeCmb, Examples) {
  EXPECT_EQ(normalize_cmb(3.50), 0.875);
  EXPECT_EQ(normalize_cmb(4.0), 1.0);
  EXPECT_EQ(normalize_cmb(0.0), 0.0);
  EXPECT_THROW(normalize_cmb(4.5), std::out_of_range);
}

TEST(Aggregate, Examples) {
  std::vector<ItemScore> s;
  for (int i = 0; i < 4; ++i) {
    ItemScore x;
    x.item_id = std::to_string(i);
    x.benchmark = "b";
    x.subject = "Primary";
    x.normalized = i < 3 ? 1.0 : 0.0;
    s.push_back(x);
  }
  ItemScore c;
  c.item_id = "c";
  c.benchmark = "clin";
  c.question_type = QuestionType::OpenEnded;
  c.raw = 3.5;
  c.max_score = 4.0;
  c.normalized = normalize_cmb(3.5);
  s.push_back(c);
  const auto r = aggregate_report(s);
  EXPECT_EQ((r.cells.at({"b", "Primary", QuestionType::MultipleChoice}).mean()), 0.75);
  ASSERT_TRUE(r.overall.has_value());
  EXPECT_NEAR(*r.overall, (0.75 + 0.875) / 2, 1e-15);
  EXPECT_NE(render_markdown(r).find("n/a"), std::string::npos);

  s.back().normalized = 3.5;
  EXPECT_THROW(aggregate_report(s), std::logic_error);
}

TEST(OverlapJudge, GradesByReferenceRecall) {
  BenchmarkItem open;
  open.id = "o";
  open.question = "Plan?";
  open.question_type = QuestionType::OpenEnded;
  open.reference = "start metformin and recheck HbA1c";
  open.max_score = 4.0;
  auto judge = workbench::make_overlap_judge();
  EXPECT_EQ(score_item(open, {"o", "p", open.reference, 0, ""}, judge.get()).raw, 4.0);
  EXPECT_EQ(score_item(open, {"o", "p", "bed rest", 0, ""}, judge.get()).raw, 0.0);
}

TEST(Fixtures, GoldEchoPerfectOnChoiceBenchmarks) {
  const auto fx = workbench::fixture_benchmarks(7);
  for (const auto& [text, schema] : std::vector<std::pair<std::string, std::string>>{
           {fx.mcq, "mcq"}, {fx.multi_response, "multi_response"}}) {
    const auto items = parse_benchmark(text, schema, schema).items;
    ASSERT_FALSE(items.empty());
    auto mock = make_gold_echo(items);
    const auto ts = run_eval(items, mock);
    for (std::size_t i = 0; i < items.size(); ++i) EXPECT_EQ(score_item(items[i], ts[i]).normalized, 1.0);
  }
}
