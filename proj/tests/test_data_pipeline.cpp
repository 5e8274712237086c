#include <gtest/gtest.h>

#include <map>
#include <set>

#include "medrl/common.hpp"
#include "medrl/data_pipeline.hpp"
#include "medrl/workbench.hpp"

using namespace medrl;
using namespace medrl::data;

TEST(Stratified, Examples) {
  std::vector<std::string> labels;
  for (int i = 0; i < 10; ++i) labels.push_back("a");
  for (int i = 0; i < 10; ++i) labels.push_back("b");
  const auto idx = stratified_indices(labels, 5, 1);
  std::map<std::string, int> count;
  for (auto i : idx) ++count[labels[i]];
  EXPECT_EQ(count["a"], 5);
  EXPECT_EQ(count["b"], 5);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));

  const std::vector<std::string> three{"a", "a", "a"};
  EXPECT_EQ(stratified_indices(three, 5, 1).size(), 3u);
  EXPECT_TRUE(stratified_indices(labels, 0, 1).empty());
  EXPECT_EQ(stratified_indices(labels, 5, 9), stratified_indices(labels, 5, 9));
}

namespace {

rl::Sample exam(const std::string& id, double signal) {
  rl::Sample s;
  s.id = id;
  s.kind = TaskKind::ExamQuestion;
  s.prompt = "q";
  s.candidates = {{"{\"answer\":\"A\"}", {signal}}, {"{\"answer\":\"B\"}", {0.0}}};
  s.gold = ExamGold{{'A'}, false};
  return s;
}

}  // namespace

TEST(DifficultyFilter, Band) {
  std::vector<rl::Sample> ds{exam("always", 50.0), exam("coin", 0.0)};
  const auto table = rl::RewardTable::build(ds, Verifier{});
  const rl::Policy p{{1.0}, 1.0};
  auto r = difficulty_filter(ds, p, table, 64, 0.1, 0.8, 3);
  EXPECT_EQ(r.stats[0].pass_rate, 1.0);
  EXPECT_EQ(r.kept, (std::vector<std::size_t>{1}));
  r = difficulty_filter(ds, p, table, 64, 0.0, 1.0, 3);
  EXPECT_EQ(r.kept, (std::vector<std::size_t>{0, 1}));
}

TEST(SpoToText, Examples) {
  const auto t = TemplateSet::builtin();
  EXPECT_EQ(spo_to_text({"Metformin", "treats", "type 2 diabetes"}, t, 0),
            "Metformin is used to treat type 2 diabetes.");
  EXPECT_THROW(spo_to_text({"", "treats", "x"}, t), std::invalid_argument);
  EXPECT_THROW(spo_to_text({"a", "treats", "x"}, t, 2), std::out_of_range);
  EXPECT_THROW(spo_to_text({"a", "heals", "x"}, t), std::invalid_argument);
}

TEST(ExtractTriples, Examples) {
  const auto t = TemplateSet::builtin();
  EXPECT_EQ(extract_triples("Metformin is used to treat type 2 diabetes.", t),
            (std::vector<SpoTriple>{{"Metformin", "treats", "type 2 diabetes"}}));
  EXPECT_TRUE(extract_triples("The weather was pleasant.", t).empty());
  const auto two = extract_triples("Metformin is used to treat type 2 diabetes. Smoking may lead to lung cancer.", t);
  EXPECT_EQ(two, (std::vector<SpoTriple>{{"Metformin", "treats", "type 2 diabetes"}, {"Smoking", "causes", "lung cancer"}}));
}

TEST(Roundtrip, ShippedTemplatesAndAdversarialObjects) {
  const auto t = TemplateSet::builtin();
  const std::vector<SpoTriple> good{{"Aspirin", "prevents", "stroke"}, {"Fever", "indicates", "infection"}};
  auto r = roundtrip_filter(good, t);
  EXPECT_EQ(r.accepted.size(), 4u);
  EXPECT_TRUE(r.rejected.empty());

  const std::vector<SpoTriple> bad{{"Metformin", "treats", "people whose drug is used to treat obesity"}};
  r = roundtrip_filter(bad, t);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].reason, "roundtrip_mismatch");

  r = roundtrip_filter({}, t);
  EXPECT_TRUE(r.accepted.empty());
  EXPECT_TRUE(r.rejected.empty());
}

TEST(Roundtrip, QualityReasons) {
  const auto t = TemplateSet::builtin();
  const std::vector<SpoTriple> in{{"", "treats", "x"},
                                  {"A", "heals", "x"},
                                  {"A", "treats", std::string(200, 'x')},
                                  {"A", "treats", "x; y"}};
  const auto r = roundtrip_filter(in, t);
  ASSERT_EQ(r.rejected.size(), 4u);
  EXPECT_EQ(r.rejected[0].reason, "empty_field");
  EXPECT_EQ(r.rejected[1].reason, "unknown_predicate");
  EXPECT_EQ(r.rejected[2].reason, "length");
  EXPECT_EQ(r.rejected[3].reason, "charset");
}

TEST(Roundtrip, DemoTriples) {
  const auto r = roundtrip_filter(workbench::demo_triples(), TemplateSet::builtin());
  std::set<std::string> bad_objects;
  for (const auto& x : r.rejected) {
    if (x.reason == "roundtrip_mismatch") bad_objects.insert(x.triple.object);
  }
  EXPECT_EQ(bad_objects.size(), 2u);
}

TEST(TemplateSet, RejectsUnknownKeysAndBrokenPatterns) {
  using nlohmann::json;
  EXPECT_THROW(TemplateSet::from_json(json::parse(R"({"predicates":{},"extra":1})")), std::invalid_argument);
  EXPECT_THROW(TemplateSet::from_json(json::parse(
                   R"({"predicates":{"p":{"templates":["{S} x {O}."],"pattern":"^(.+) y (.+)\\.$"}}})")),
               std::invalid_argument);
  EXPECT_NO_THROW(TemplateSet::from_json(json::parse(TemplateSet::builtin_json())));
}

TEST(TriplesTsv, ParseAndErrors) {
  const auto f = parse_triples_tsv("# subject\tpredicate\tobject\nA\ttreats\tB\nbroken line\n");
  EXPECT_EQ(f.triples, (std::vector<SpoTriple>{{"A", "treats", "B"}}));
  ASSERT_EQ(f.errors.size(), 1u);
  EXPECT_EQ(f.errors[0].line_no, 3u);
  EXPECT_EQ(parse_triples_tsv(to_tsv(f.triples)).triples, f.triples);
}

TEST(MixByRatio, Counts) {
  const auto m = mix_by_ratio(100, 100, 3.0, 40, 2);
  int primary = 0;
  for (const auto& [src, idx] : m) primary += src == 0;
  EXPECT_EQ(m.size(), 40u);
  EXPECT_EQ(primary, 30);
}

TEST(RewardDiversity, PicksHighestSpread) {
  const std::vector<std::vector<double>> g{{1, 1, 1}, {0, 1, 0}, {0, 0.5, 1}, {0.4, 0.5, 0.6}};
  EXPECT_EQ(select_by_reward_diversity(g, 2), (std::vector<std::size_t>{1, 2}));
}
