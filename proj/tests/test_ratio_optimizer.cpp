#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "medrl/common.hpp"
#include "medrl/ratio_optimizer.hpp"

using namespace medrl;
using namespace medrl::bo;

namespace {

std::vector<Observation> obs(std::vector<std::pair<Ratio, double>> xs) {
  std::vector<Observation> out;
  for (auto& [x, y] : xs) out.push_back({x, y});
  return out;
}

}  // namespace

TEST(Kernel, Examples) {
  const KernelHyper h{2.0, 0.4, 0.0};
  const std::vector<double> a{0.1, 0.9}, b{0.6, 0.4}, far{100, -100};
  EXPECT_EQ(kernel(a, a, h), 2.0);
  EXPECT_LT(kernel(a, far, h), 1e-300);
  EXPECT_EQ(kernel(a, b, h), kernel(b, a, h));
}

TEST(Gpr, ConstantTargets) {
  const auto m = gpr_fit(obs({{{0.2, 0.8}, 3.0}, {{0.5, 0.5}, 3.0}, {{0.9, 0.1}, 3.0}}));
  EXPECT_NEAR(gpr_predict(m, std::vector<double>{0.3, 0.7}).mean, 3.0, 1e-6);
}

TEST(Gpr, DuplicateConflictingPointsFit) {
  const auto m = gpr_fit(obs({{{0.5, 0.5}, 1.0}, {{0.5, 0.5}, 2.0}, {{0.1, 0.9}, 0.0}}));
  EXPECT_TRUE(std::isfinite(gpr_predict(m, std::vector<double>{0.5, 0.5}).mean));
}

TEST(Gpr, ChosenHyperparametersMaximizeEvidence) {
  Rng rng(2);
  std::vector<Observation> o;
  for (int i = 0; i < 12; ++i) {
    const auto x = dirichlet_point(rng, 3);
    o.push_back({x, std::sin(4 * x[0]) + x[1] * x[1]});
  }
  const auto grid = HyperGrid::standard();
  const auto best = gpr_fit(o, grid);
  for (const auto& h : grid.points()) {
    EXPECT_GE(best.log_marginal_likelihood, gpr_condition(o, h).log_marginal_likelihood - 1e-9);
  }
}

TEST(Gpr, NoiseFreeInterpolation) {
  const auto o = obs({{{0.2, 0.3, 0.5}, 1.0}, {{0.6, 0.2, 0.2}, -0.5}, {{0.1, 0.1, 0.8}, 0.25}});
  const auto m = gpr_condition(o, {1.0, 0.3, 0.0});
  for (const auto& ob : o) {
    const auto p = gpr_predict(m, ob.x);
    EXPECT_NEAR(p.mean, ob.y, 1e-6);
    EXPECT_LE(p.variance, 1e-6);
  }
}

TEST(Gpr, FarFromDataRevertsToPrior) {
  const auto o = obs({{{0.0, 0.0}, 1.0}, {{0.1, 0.0}, 3.0}});
  const auto m = gpr_condition(o, {1.5, 0.2, 1e-6});
  const auto p = gpr_predict(m, std::vector<double>{50.0, 50.0});
  EXPECT_NEAR(p.mean, 2.0, 1e-9);
  EXPECT_NEAR(p.variance, 1.5, 1e-9);
}

TEST(Gpr, SymmetricMidpoint) {
  const auto o = obs({{{0.0, 1.0}, 0.0}, {{1.0, 0.0}, 1.0}});
  const auto m = gpr_condition(o, {1.0, 0.5, 0.0});
  EXPECT_NEAR(gpr_predict(m, std::vector<double>{0.5, 0.5}).mean, 0.5, 1e-6);
}

TEST(ExpectedImprovement, ClosedForms) {
  EXPECT_EQ(expected_improvement(1.0, 0.0, 1.0), 0.0);
  EXPECT_NEAR(expected_improvement(1.0, 1.0, 1.0), 1.0 / std::sqrt(2 * std::numbers::pi), 1e-15);
  const double ei = expected_improvement(10.0, 1.0, 0.0);
  EXPECT_NEAR(ei, 10.0, 1e-6 * 10.0);
}

TEST(ProposeNext, Invariants) {
  const auto m = gpr_condition(obs({{{0.2, 0.3, 0.5}, 0.1}, {{0.5, 0.25, 0.25}, 0.4}}), {1.0, 0.3, 1e-6});
  const auto one = propose_next(m, 0.4, 1, 7);
  ASSERT_EQ(one.candidates.size(), 1u);
  EXPECT_EQ(one.x, one.candidates[0]);
  const auto p = propose_next(m, 0.4, 500, 7);
  EXPECT_TRUE(on_simplex(p.x));
  for (double e : p.candidate_ei) EXPECT_GE(p.ei, e);
}

TEST(Optimize, ConstantObjective) {
  BoConfig c;
  c.budget = 12;
  c.n_candidates = 200;
  const auto r = optimize([](const Ratio&) { return 0.75; }, c);
  EXPECT_EQ(r.best.y, 0.75);
  EXPECT_EQ(r.trace.size(), 12u);
}

TEST(Optimize, FailuresConsumeBudget) {
  BoConfig c;
  c.budget = 10;
  c.n_candidates = 100;
  int calls = 0;
  const auto r = optimize(
      [&](const Ratio& x) {
        if (++calls % 3 == 0) throw std::runtime_error("boom");
        return -x[0];
      },
      c);
  EXPECT_EQ(r.trace.size(), 10u);
  EXPECT_EQ(r.failures, 3u);
  for (const auto& row : r.trace) EXPECT_EQ(row.failed, std::isnan(row.y));
}

TEST(Optimize, TraceCsvDeterministic) {
  BoConfig c;
  c.budget = 15;
  c.n_candidates = 300;
  c.seed = 4;
  auto f = [](const Ratio& r) { return -std::pow(r[0] - 0.4, 2) - std::pow(r[1] - 0.3, 2); };
  const auto a = trace_csv(optimize(f, c));
  c.parallelism = 3;
  EXPECT_EQ(a, trace_csv(optimize(f, c)));
  EXPECT_EQ(a.substr(0, a.find('\n')), "iteration,r_1,r_2,r_3,r_4,y,best_so_far");
}

TEST(WeightedOverall, Examples) {
  const std::vector<double> s{0.2, 0.4, 0.6}, u{1.0 / 3, 1.0 / 3, 1.0 / 3}, oh{0, 1, 0};
  EXPECT_NEAR(weighted_overall_score(s, u), 0.4, 1e-15);
  EXPECT_EQ(weighted_overall_score(s, oh), 0.4);
  EXPECT_EQ(weighted_overall_score(std::vector<double>{0, 1}, std::vector<double>{0.5, 0.5}), 0.5);
}

TEST(Dirichlet, OnSimplex) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(on_simplex(dirichlet_point(rng, 4)));
}
