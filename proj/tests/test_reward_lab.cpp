#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "medrl/common.hpp"
#include "medrl/reward_lab.hpp"

using namespace medrl;
using namespace medrl::reward;

namespace {

FeatureVector one_hot(std::size_t i, std::size_t n) {
  FeatureVector v(n, 0.0);
  v[i] = 1.0;
  return v;
}

PreferencePair pair(std::size_t w, std::size_t l, std::size_t n) {
  PreferencePair p;
  p.prompt_id = "p";
  p.chosen = one_hot(w, n);
  p.rejected = one_hot(l, n);
  return p;
}

// Pearson correlation by the textbook two-pass formula.
double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(BradleyTerry, UnanimousPreferenceOrders) {
  std::vector<PreferencePair> pairs(20, pair(0, 1, 2));
  const auto fit = fit_bradley_terry(pairs, {});
  EXPECT_GT(score(fit.params, one_hot(0, 2)), score(fit.params, one_hot(1, 2)));
}

TEST(BradleyTerry, BalancedPreferencesTie) {
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 10; ++i) {
    pairs.push_back(pair(0, 1, 2));
    pairs.push_back(pair(1, 0, 2));
  }
  const auto fit = fit_bradley_terry(pairs, {0.5, 300, 1e-3});
  EXPECT_LT(std::abs(score(fit.params, one_hot(0, 2)) - score(fit.params, one_hot(1, 2))), 1e-3);
}

TEST(BradleyTerry, PlantedUtilitiesRecovered) {
  const std::vector<double> u{1.5, 0.8, 0.0, -0.7, -1.6};
  Rng rng(11);
  std::vector<PreferencePair> pairs;
  for (int k = 0; k < 200; ++k) {
    std::size_t i = rng.below(5), j = rng.below(4);
    if (j >= i) ++j;
    const double p = 1.0 / (1.0 + std::exp(-(u[i] - u[j])));
    pairs.push_back(rng.uniform() < p ? pair(i, j, 5) : pair(j, i, 5));
  }
  const auto fit = fit_bradley_terry(pairs, {});
  std::vector<double> s;
  for (std::size_t i = 0; i < 5; ++i) s.push_back(score(fit.params, one_hot(i, 5)));
  EXPECT_GE(kendall_tau(s, u), 0.9);
}

TEST(BradleyTerry, LikelihoodNonDecreasing) {
  std::vector<PreferencePair> pairs{pair(0, 1, 3), pair(1, 2, 3), pair(0, 2, 3), pair(2, 0, 3)};
  const auto fit = fit_bradley_terry(pairs, {0.1, 100, 0.0});
  for (std::size_t e = 1; e < fit.objective_history.size(); ++e) {
    EXPECT_GE(fit.objective_history[e], fit.objective_history[e - 1] - 1e-12);
  }
}

TEST(BradleyTerry, DegenerateFlagged) {
  PreferencePair p;
  p.chosen = {1.0, 2.0};
  p.rejected = {1.0, 2.0};
  const auto fit = fit_bradley_terry(std::vector<PreferencePair>{p, p}, {});
  EXPECT_TRUE(fit.degenerate);
  EXPECT_EQ(fit.params.weights, (std::vector<double>{0.0, 0.0}));
}

TEST(BradleyTerry, RejectsBadInput) {
  EXPECT_THROW(fit_bradley_terry({}, {}), std::invalid_argument);
  PreferencePair p;
  p.chosen = {1.0};
  p.rejected = {1.0, 2.0};
  EXPECT_THROW(fit_bradley_terry(std::vector<PreferencePair>{p}, {}), std::invalid_argument);
}

TEST(Score, Examples) {
  EXPECT_EQ(score({{0.0, 0.0}, 0.3}, std::vector<double>{4.0, 5.0}), 0.3);
  EXPECT_EQ(score({{1.0, 0.0}, 0.25}, std::vector<double>{2.0, 5.0}), 2.25);
  const RewardModelParams m{{0.5, -1.0}, 0.0};
  EXPECT_GT(score(m, std::vector<double>{2.0, 1.0}), score(m, std::vector<double>{1.0, 1.0}));
}

TEST(PreferencePairs, Examples) {
  auto group = [](std::vector<double> rewards) {
    ScoredGroup g;
    g.prompt_id = "q";
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      g.rollouts.push_back({static_cast<int>(i), {static_cast<double>(i)}, rewards[i]});
    }
    return g;
  };
  auto gen = generate_preference_pairs(std::vector<ScoredGroup>{group({0.9, 0.1, 0.5})});
  ASSERT_EQ(gen.pairs.size(), 1u);
  EXPECT_EQ(gen.pairs[0].chosen_index, 0);
  EXPECT_EQ(gen.pairs[0].rejected_index, 1);
  EXPECT_FALSE(gen.pairs[0].low_margin);

  gen = generate_preference_pairs(std::vector<ScoredGroup>{group({0.4, 0.4, 0.4})});
  ASSERT_EQ(gen.pairs.size(), 1u);
  EXPECT_EQ(gen.pairs[0].chosen_index, 0);
  EXPECT_EQ(gen.pairs[0].rejected_index, 1);
  EXPECT_TRUE(gen.pairs[0].low_margin);

  gen = generate_preference_pairs(std::vector<ScoredGroup>{group({0.4})});
  EXPECT_TRUE(gen.pairs.empty());
  EXPECT_EQ(gen.skipped, 1u);
}

TEST(PreferencePairs, JsonRoundTrip) {
  PreferencePair p = pair(0, 1, 3);
  p.source = PairSource::Human;
  const auto back = pair_from_json(to_json(p));
  EXPECT_EQ(back.chosen, p.chosen);
  EXPECT_EQ(back.rejected, p.rejected);
  EXPECT_EQ(back.source, PairSource::Human);
}

TEST(Dimensions, Examples) {
  DimensionScores d{1, 1, 1, 1, {}};
  EXPECT_NEAR(aggregate_dimensions(d), 1.0, 1e-15);
  d = {0.7, 0.2, 0.1, 0.0, {1, 0, 0, 0}};
  EXPECT_EQ(aggregate_dimensions(d), 0.7);
  d = {1, 0, 1, 0, {0.4, 0.3, 0.2, 0.1}};
  EXPECT_NEAR(aggregate_dimensions(d), 0.6, 1e-15);
  d.weights = {0.5, 0.5, 0.5, 0.5};
  EXPECT_THROW(aggregate_dimensions(d), std::invalid_argument);
}

TEST(Consistency, Examples) {
  EXPECT_EQ(consistency_heuristic("metformin lowers glucose in diabetes", "metformin diabetes"), 1.0);
  EXPECT_EQ(consistency_heuristic("aspirin for pain", "metformin diabetes"), 0.0);
  EXPECT_EQ(consistency_heuristic("metformin lowers glucose", "metformin diabetes"), 0.5);
}

TEST(ActiveLearning, Examples) {
  std::vector<CandidateScores> g{{"close", {0.50, 0.51, 0.1}}, {"wide", {0.9, 0.4}}, {"single", {0.3}}};
  const auto flagged = active_learning_select(g, 0.05);
  ASSERT_EQ(flagged.size(), 1u);
  EXPECT_EQ(flagged[0].prompt_id, "close");
  EXPECT_NEAR(flagged[0].gap, 0.01, 1e-12);
}

TEST(LengthAudit, Examples) {
  std::vector<LengthRewardPoint> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({double(i), double(i)});
  auto a = length_hack_audit(pts);
  EXPECT_NEAR(a.correlation, 1.0, 1e-12);
  EXPECT_TRUE(a.warn);

  for (auto& p : pts) p.reward = 0.5;
  a = length_hack_audit(pts);
  EXPECT_EQ(a.correlation, 0.0);
  EXPECT_FALSE(a.warn);

  Rng rng(5);
  std::vector<double> xs, ys;
  pts.clear();
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(0, 100);
    const double y = -0.3 * x + rng.normal() * 5;
    xs.push_back(x);
    ys.push_back(y);
    pts.push_back({x, y});
  }
  a = length_hack_audit(pts);
  EXPECT_LT(a.correlation, 0.0);
  EXPECT_NEAR(a.correlation, pearson(xs, ys), 1e-12);
}

TEST(KendallTau, Basics) {
  const std::vector<double> a{1, 2, 3, 4}, r{4, 3, 2, 1};
  EXPECT_EQ(kendall_tau(a, a), 1.0);
  EXPECT_EQ(kendall_tau(a, r), -1.0);
}
