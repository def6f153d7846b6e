#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include "extctl/error.hpp"
#include "extctl/serialize.hpp"
#include "extctl/simlab.hpp"

using namespace extctl;

namespace {

MCOptions quick(std::size_t reps, std::uint64_t seed = 11) {
  MCOptions o;
  o.reps = reps;
  o.master_seed = seed;
  o.truth_draws = 200'000;
  return o;
}

ScenarioConfig small(Scenario s = Scenario::i, std::size_t n = 300) {
  ScenarioConfig c;
  c.scenario = s;
  c.n = n;
  return c;
}

}  // namespace

TEST(Generate, SourceShareIsAboutHalf) {
  auto cfg = small(Scenario::i, 1'000'000);
  const auto g = generate(cfg, 123);
  EXPECT_NEAR(g.data.q_hat(), 0.5, 0.002);
  std::size_t treated = 0;
  for (std::size_t i = 0; i < g.data.n(); ++i) {
    if (g.data.d()[i] == 1) treated += g.data.t()[i];
  }
  EXPECT_NEAR(static_cast<double>(treated) / g.data.n1(), 0.5, 0.01);
}

TEST(Generate, ExternalRowsAreControlsAndOutcomesAreMasked) {
  for (auto s : {Scenario::i, Scenario::ii, Scenario::iii, Scenario::iv}) {
    const auto g = generate(small(s, 2000), 7);
    for (std::size_t i = 0; i < g.data.n(); ++i) {
      const int t = g.data.t()[i];
      if (g.data.d()[i] == 0) EXPECT_EQ(t, 0);
      EXPECT_EQ(g.data.y()(i), t == 1 ? g.y1(i) : g.y0(i));
    }
  }
}

TEST(Generate, SeededAndContinuousOnly) {
  const auto a = generate(small(), 5);
  const auto b = generate(small(), 5);
  EXPECT_EQ(a.data.y(), b.data.y());
  EXPECT_NE(generate(small(), 6).data.y(), a.data.y());
  auto cfg = small();
  cfg.outcome_kind = OutcomeKind::binary;
  EXPECT_THROW(generate(cfg, 1), Error);
  cfg = small(Scenario::i, 4);
  EXPECT_THROW(generate(cfg, 1), Error);
}

TEST(Distort, StandardizedComponents) {
  // E z1 = 0, var z1 = 1 under x1 ~ N(0,1); z2 has unit variance by construction.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N(0, 1);
  double s1 = 0, s11 = 0, s22 = 0;
  const int M = 400'000;
  for (int i = 0; i < M; ++i) {
    const auto z = distort(N(rng), N(rng));
    s1 += z[0];
    s11 += z[0] * z[0];
    s22 += z[1] * z[1];
  }
  EXPECT_NEAR(s1 / M, 0.0, 0.01);
  EXPECT_NEAR(s11 / M, 1.0, 0.02);
  EXPECT_NEAR(s22 / M, 1.0, 0.02);
}

TEST(Truth, MixtureIdentityAndZeroEffect) {
  for (auto s : {Scenario::i, Scenario::iv}) {
    const auto t = true_effects(small(s), 200'000);
    EXPECT_NEAR(t.psi, t.q * t.tau + (1 - t.q) * t.xi, 1e-9);
    EXPECT_NEAR(t.q, 0.5, 0.01);
    EXPECT_GT(t.se_tau, 0.0);
  }
  auto cfg = small();
  cfg.dgp.e0 = 0.0;
  cfg.dgp.e1 = 0.0;
  const auto z = true_effects(cfg, 100'000);
  EXPECT_EQ(z.tau, 0.0);
  EXPECT_EQ(z.psi, 0.0);
  EXPECT_EQ(z.xi, 0.0);
}

TEST(Truth, TrialEffectMatchesDirectAverage) {
  // tau = E(e0 + e1 x1 | D=1); with correct arms z1 = x1.
  const auto cfg = small();
  const auto t = true_effects(cfg, 400'000);
  const auto g = generate(small(Scenario::i, 400'000), 99);
  double s = 0;
  for (std::size_t i = 0; i < g.data.n(); ++i) {
    if (g.data.d()[i] == 1) s += g.y1(i) - g.y0(i);
  }
  const double direct = s / g.data.n1();
  EXPECT_NEAR(t.tau, direct, 5 * 0.5 / std::sqrt(200'000.0) + 5 * t.se_tau);
}

TEST(Params, VectorRoundTrip) {
  DgpParams p;
  p.engagement = 0.5;
  p.e1 = -0.25;
  const auto v = p.to_vector();
  ASSERT_EQ(v.size(), DgpParams::size);
  EXPECT_EQ(DgpParams::from_vector(v), p);
  EXPECT_THROW(DgpParams::from_vector({1.0, 2.0}), Error);
}

TEST(Ids, ParseEstimatorIds) {
  const auto a = parse_estimator_id("tau_full_const");
  EXPECT_EQ(a.estimand, Estimand::tau);
  EXPECT_EQ(a.method, Method::full_data);
  EXPECT_TRUE(a.constant_ratio);
  EXPECT_EQ(parse_estimator_id("xi_trial").method, Method::trial_based);
  EXPECT_THROW(parse_estimator_id("tau_magic"), Error);
  EXPECT_EQ(all_estimator_ids().size(), 7u);
}

TEST(MonteCarlo, SingleReplicateHasNoSd) {
  const auto r = run_monte_carlo(small(), quick(1));
  for (const auto& s : r.summaries) {
    EXPECT_EQ(s.reps, 1u);
    EXPECT_FALSE(s.sd.has_value());
    EXPECT_NEAR(s.mse, s.mean_bias * s.mean_bias, 1e-15);
  }
}

TEST(MonteCarlo, SummariesMatchDraws) {
  const auto r = run_monte_carlo(small(), quick(40));
  EXPECT_EQ(r.failures, 0u);
  for (const auto& s : r.summaries) {
    const auto b = r.bias_draws(s.estimator);
    ASSERT_EQ(b.size(), 40u);
    double m = 0, sq = 0;
    for (double v : b) m += v;
    m /= b.size();
    for (double v : b) sq += v * v;
    EXPECT_NEAR(s.mean_bias, m, 1e-12);
    EXPECT_NEAR(s.mse, sq / b.size(), 1e-12);
    EXPECT_NEAR(s.mse, s.mean_bias * s.mean_bias + *s.sd * *s.sd, 1e-12);
    EXPECT_NEAR(s.mean_estimate - s.truth, s.mean_bias, 1e-12);
    EXPECT_GE(s.coverage, 0.0);
    EXPECT_LE(s.coverage, 1.0);
  }
  EXPECT_EQ(r.successful_reps().size(), 40u);
}

TEST(MonteCarlo, JobsDoNotChangeOutput) {
  auto o = quick(300, 5);  // spans two chunks
  const auto a = run_monte_carlo(small(Scenario::ii, 200), o);
  o.jobs = 3;
  const auto b = run_monte_carlo(small(Scenario::ii, 200), o);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(a.draws, b.draws);
}

TEST(MonteCarlo, SpillsPastCapWithSameValues) {
  auto o = quick(30);
  const auto mem = run_monte_carlo(small(), o);
  ASSERT_FALSE(mem.spill_file.has_value());
  o.draw_cap = 10;
  o.spill_path = (std::filesystem::temp_directory_path() / "extctl-test-spill.bin").string();
  const auto disk = run_monte_carlo(small(), o);
  ASSERT_TRUE(disk.spill_file.has_value());
  EXPECT_TRUE(disk.draws.empty());
  EXPECT_EQ(std::filesystem::file_size(*disk.spill_file), 30u * 7u * 2u * sizeof(double));
  EXPECT_EQ(mem.bias_draws("tau_full"), disk.bias_draws("tau_full"));
  EXPECT_EQ(mem.variance_draws("xi_trial"), disk.variance_draws("xi_trial"));
  std::filesystem::remove(*disk.spill_file);
}

TEST(MonteCarlo, BoxplotRowCounts) {
  auto o = quick(6);
  std::vector<MCResult> runs{run_monte_carlo(small(Scenario::i), o),
                             run_monte_carlo(small(Scenario::iii), o)};
  std::ostringstream all, trio;
  export_boxplot_data(all, runs);
  export_boxplot_data(trio, runs, {"tau_full", "tau_full_const", "tau_trial"});
  auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  EXPECT_EQ(lines(all.str()), 1 + 2 * 6 * 7);
  EXPECT_EQ(lines(trio.str()), 1 + 2 * 6 * 3);
  EXPECT_EQ(all.str().substr(0, all.str().find('\n')), "scenario,estimator,replicate,bias");
  std::ostringstream again;
  export_boxplot_data(again, runs, {"tau_full", "tau_full_const", "tau_trial"});
  EXPECT_EQ(again.str(), trio.str());
}

TEST(MonteCarlo, OptionChecks) {
  auto o = quick(0);
  EXPECT_THROW(run_monte_carlo(small(), o), Error);
  o = quick(2);
  o.estimators = {};
  EXPECT_THROW(run_monte_carlo(small(), o), Error);
  o.estimators = {"nope"};
  EXPECT_THROW(run_monte_carlo(small(), o), Error);
}

TEST(MonteCarlo, ConstantRatioVariantMatchesEngine) {
  const auto s = constant_ratio_variant(small(), 10, 3);
  auto o = quick(10, 3);
  o.estimators = {"tau_full_const"};
  o.truth_draws = 10'000'000;
  const auto r = run_monte_carlo(small(), o);
  EXPECT_NEAR(s.mean_bias, r.summary("tau_full_const").mean_bias, 1e-12);
}
