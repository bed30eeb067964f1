#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "amlmc/mlmc.hpp"
#include "amlmc/models.hpp"
#include "oracles.hpp"

using namespace amlmc;
using Vec = Vector<double>;

namespace {

Vec scalar(double v) { return Vec::Constant(1, v); }

/// Logistic drift, no noise.
class SilentLogistic final : public DiffusionModel<double> {
 public:
  SilentLogistic() : DiffusionModel("silent-logistic", ModelShape{0, 1, 1}) {}
  Vec drift(const Vec& x) const override { return Vec::Constant(1, 2.0 * x(0) * (1 - x(0))); }
  Columns raw_diffusion(const Vec&) const override { return Columns::Zero(1, 1); }
};

std::shared_ptr<const LinearSdeModel<double>> scalar_ou(double a = -1.0, double s = 1.0) {
  return build_linear_ou<double>(Eigen::MatrixXd::Constant(1, 1, a), Eigen::MatrixXd::Constant(1, 1, s));
}

RunOptions serial() { return RunOptions{1}; }

}  // namespace

TEST(Allocation, WorkedExample) {
  const auto plan = allocate_amlmc(0.1, 1.0, 1.0);
  EXPECT_EQ(plan.L, 2);
  EXPECT_EQ(plan.M, (std::vector<std::uint64_t>{100, 36, 13}));
  EXPECT_EQ(plan.rule, AllocationRule::Amlmc);
  EXPECT_EQ(plan.finest(), 2);
}

TEST(Allocation, LevelRule) {
  EXPECT_EQ(levels_for_epsilon(0.5), 1);
  EXPECT_EQ(levels_for_epsilon(0.25), 1);
  EXPECT_EQ(levels_for_epsilon(0.1), 2);
  EXPECT_EQ(levels_for_epsilon(0.0625), 2);
  EXPECT_EQ(levels_for_epsilon(0.05), 3);
  EXPECT_THROW(levels_for_epsilon(0.0), ArgumentError);
  EXPECT_THROW(levels_for_epsilon(-0.1), ArgumentError);
  EXPECT_THROW(levels_for_epsilon(1.0), ArgumentError);
  EXPECT_THROW(allocate_amlmc(0.1, 0.0, 1.0), ArgumentError);
}

TEST(Allocation, HalvingEpsilonQuadruplesSamples) {
  const auto a = allocate_amlmc(0.05, 1.0, 1.0);
  const auto b = allocate_amlmc(0.025, 1.0, 1.0);
  for (int i = 0; i <= a.L; ++i) {
    const double ratio = static_cast<double>(b.M[i]) / static_cast<double>(a.M[i]);
    EXPECT_NEAR(ratio, 4.0, 4.0 / static_cast<double>(a.M[i]) + 1e-12) << "level " << i;
  }
}

// Sum of M_l / Delta_l, evaluated independently of the implementation.
TEST(Allocation, PaperCostValues) {
  EXPECT_DOUBLE_EQ(allocate_amlmc(0.1, 1.0, 1.0).paper_cost(), 224.0);
  EXPECT_DOUBLE_EQ(allocate_amlmc(0.05, 1.0, 1.0).paper_cost(), 1028.0);
  EXPECT_DOUBLE_EQ(allocate_amlmc(0.025, 1.0, 1.0).paper_cost(), 4100.0);
  EXPECT_DOUBLE_EQ(allocate_amlmc(0.0125, 1.0, 1.0).paper_cost(), 17990.0);
}

// The cost grows like eps^-2. Between 0.1 and 0.05 the level count also
// grows by one, which pushes that ratio to 1028 / 224 = 4.589.
TEST(Allocation, CostScalesAsInverseSquare) {
  const double c1 = allocate_amlmc(0.1, 1.0, 1.0).paper_cost();
  const double c2 = allocate_amlmc(0.05, 1.0, 1.0).paper_cost();
  const double c3 = allocate_amlmc(0.025, 1.0, 1.0).paper_cost();
  EXPECT_NEAR(c2 / c1, 4.589, 1e-3);
  EXPECT_GE(c3 / c2, 3.5);
  EXPECT_LE(c3 / c2, 4.5);
}

TEST(Allocation, BaseLevelShiftsGrid) {
  const auto plan = allocate_amlmc(0.1, 1.0, 10.0, 5);
  EXPECT_EQ(plan.level(0), 5);
  EXPECT_EQ(plan.finest(), 7);
  EXPECT_DOUBLE_EQ(plan.delta(0), 10.0 / 32);
}

TEST(LevelPlanValidation, RejectsBadPlans) {
  EXPECT_THROW(manual_plan({5, 1}, 1.0), ArgumentError);
  EXPECT_THROW(manual_plan({}, 1.0), ArgumentError);
  EXPECT_THROW(manual_plan({4, 4}, 0.0), ArgumentError);
  EXPECT_THROW(manual_plan({4, 4}, 1.0, kMaxLevel), ConfigError);
  EXPECT_NO_THROW(manual_plan({2}, 1.0));
}

TEST(RunAmlmc, ConstantPayoffIsExact) {
  const auto heston = build_heston<double>(HestonParams{});
  const auto phi = constant_payoff<double>(1.0);
  Vec x0(2);
  x0 << 100, 0.09;
  for (const auto& report : {run_amlmc(*heston, phi, x0, manual_plan({10, 6, 4}, 1.0), 1),
                             run_plain_mlmc(*heston, phi, x0, manual_plan({10, 6, 4}, 1.0), 1),
                             run_ammlmc(*heston, phi, x0, manual_plan({10, 6, 4}, 1.0), 1)}) {
    EXPECT_EQ(report.estimate, 1.0) << report.method;
    for (std::size_t i = 1; i < report.levels.size(); ++i) {
      EXPECT_EQ(report.levels[i].mean, 0.0);
      EXPECT_EQ(report.levels[i].variance, 0.0);
    }
  }
  EXPECT_EQ(run_single_level(*heston, phi, x0, 1.0, 3, 5, 1).estimate, 1.0);
}

TEST(RunAmlmc, ZeroNoiseGivesDeterministicFinestValue) {
  SilentLogistic m;
  const auto phi = coordinate<double>(0);
  const auto report = run_amlmc(m, phi, scalar(0.1), manual_plan({3, 3, 3, 3}, 1.0), 7);
  const double finest = simulate_terminal<double>(m, SchemeKind::Weak2, scalar(0.1), 3, 1.0, {})(0);
  EXPECT_NEAR(report.estimate, finest, 1e-14);
  for (int l = 1; l <= 3; ++l) {
    const double fine = simulate_terminal<double>(m, SchemeKind::Weak2, scalar(0.1), l, 1.0, {})(0);
    const double coarse = simulate_terminal<double>(m, SchemeKind::Weak2, scalar(0.1), l - 1, 1.0, {})(0);
    EXPECT_NEAR(report.levels[l].mean, fine - coarse, 1e-15);
    EXPECT_EQ(report.levels[l].variance, 0.0);
  }
}

TEST(RunAmlmc, OuMeanCoverage) {
  const auto ou = scalar_ou();
  const auto phi = coordinate<double>(0);
  const auto plan = allocate_amlmc(0.02, 1.0, 1.0);
  const double truth = std::exp(-1.0);
  const auto chain = oracle::weak2_ou(ou->a(), ou->c(), 1.0, plan.finest());
  const double bias = std::abs(chain.F(0, 0) - truth);
  int covered = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto report = run_amlmc(*ou, phi, scalar(1.0), plan, seed);
    if (std::abs(report.estimate - truth) <= 3 * std::sqrt(report.estimator_variance()) + bias) ++covered;
  }
  EXPECT_GE(covered, 48);
}

TEST(RunAmlmc, DeterministicAndThreadInvariant) {
  const auto fhn = build_fhn<double>(FhnParams{});
  const auto phi = smooth_clip<double>(0, 0.0, 2.0);
  const auto plan = manual_plan({9000, 5000}, 1.0, 5);
  const Vec x0 = Vec::Zero(2);
  const auto a = run_amlmc(*fhn, phi, x0, plan, 42, serial());
  const auto b = run_amlmc(*fhn, phi, x0, plan, 42, RunOptions{4});
  const auto c = run_amlmc(*fhn, phi, x0, plan, 42, serial());
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.estimate, c.estimate);
  for (std::size_t i = 0; i < a.levels.size(); ++i) {
    EXPECT_EQ(a.levels[i].variance, b.levels[i].variance);
    EXPECT_EQ(a.levels[i].mean_max_gap_sq, b.levels[i].mean_max_gap_sq);
  }
  EXPECT_NE(run_amlmc(*fhn, phi, x0, plan, 43, serial()).estimate, a.estimate);
}

TEST(RunAmlmc, EstimateIsSumOfLevelMeans) {
  const auto gbm = build_gbm_2d<double>();
  const auto report = run_amlmc(*gbm, coordinate<double>(1), Vec(Vec::Ones(2)), manual_plan({200, 100, 50}, 1.0), 3);
  double sum = 0, var = 0;
  for (const auto& lv : report.levels) {
    sum += lv.mean;
    var += lv.variance / static_cast<double>(lv.samples);
  }
  EXPECT_EQ(report.estimate, sum);
  EXPECT_DOUBLE_EQ(report.estimator_variance(), var);
}

TEST(RunAmlmc, CostAccounting) {
  const auto gbm = build_gbm_2d<double>();
  const auto plan = manual_plan({8, 4, 2}, 1.0, 1);
  const auto report = run_amlmc(*gbm, coordinate<double>(0), Vec(Vec::Ones(2)), plan, 3);
  // Level 1 single path: 2 steps; levels 2, 3 quads: 3 * 2^l steps.
  EXPECT_DOUBLE_EQ(report.step_cost, 8 * 2 + 4 * 3 * 4 + 2 * 3 * 8);
  EXPECT_DOUBLE_EQ(report.paper_cost, plan.paper_cost());
  EXPECT_DOUBLE_EQ(report.paper_cost, 8 * 2 + 4 * 4 + 2 * 8);
}

// The coarse leg of the quad at fine level l + 1 and the fine legs at level l
// estimate the same expectation.
TEST(RunAmlmc, TelescopingAcrossLevels) {
  const auto heston = build_heston<double>(HestonParams{});
  const auto phi = coordinate<double>(0);
  Vec x0(2);
  x0 << 100, 0.09;
  const int n = 20000;
  for (int level = 1; level <= 3; ++level) {
    RunningMoments fine, coarse;
    for (int i = 0; i < n; ++i) {
      const auto f = simulate_antithetic_quad<double>(*heston, x0, level, 1.0,
                                                      StreamKey{1, static_cast<std::uint64_t>(i), 0, 0});
      fine.add(0.5 * (phi(f.x_bar_f) + phi(f.x_tilde_f)));
      const auto c = simulate_antithetic_quad<double>(*heston, x0, level + 1, 1.0,
                                                      StreamKey{2, static_cast<std::uint64_t>(i), 0, 0});
      coarse.add(0.5 * (phi(c.x_bar_c) + phi(c.x_tilde_c)));
    }
    EXPECT_NEAR(fine.mean, coarse.mean, 4 * std::hypot(fine.std_error(), coarse.std_error())) << "level " << level;
  }
}

TEST(RunAmlmc, UnbiasedAgainstSingleLevel) {
  const auto heston = build_heston<double>(HestonParams{});
  const auto phi = coordinate<double>(0);
  Vec x0(2);
  x0 << 100, 0.09;
  const auto ml = run_amlmc(*heston, phi, x0, manual_plan({40000, 20000, 10000, 5000}, 1.0), 5);
  const auto sl = run_single_level(*heston, phi, x0, 1.0, 3, 40000, 6);
  EXPECT_NEAR(ml.estimate, sl.estimate, 4 * std::sqrt(ml.estimator_variance() + sl.estimator_variance()));
}

TEST(RunAmlmc, ReportedVarianceMatchesReplicates) {
  const auto ou = scalar_ou(-0.5, 0.8);
  const auto phi = coordinate<double>(0);
  const auto plan = manual_plan({200, 100, 50}, 1.0);
  RunningMoments estimates, reported;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto r = run_amlmc(*ou, phi, scalar(1.0), plan, 100 + seed);
    estimates.add(r.estimate);
    reported.add(r.estimator_variance());
  }
  const double ratio = estimates.variance() / reported.mean;
  EXPECT_GT(ratio, 0.7);
  EXPECT_LT(ratio, 1.4);
}

TEST(RunAmlmc, AntitheticVarianceDecaysFasterThanPlain) {
  const auto gbm = build_gbm_2d<double>();
  const auto phi = coordinate<double>(0);
  const Vec x0 = Vec::Ones(2);
  std::vector<double> log_delta, log_quad, log_pair;
  for (int level = 2; level <= 6; ++level) {
    const auto seed = forward_level_seed(9, level);
    const auto quad = sample_level<double>(*gbm, phi, x0, 1.0, level, 20000, seed, LevelCoupling::Antithetic);
    const auto pair = sample_level<double>(*gbm, phi, x0, 1.0, level, 20000, seed, LevelCoupling::PlainPair);
    log_delta.push_back(std::log2(level_delta(1.0, level - 1)));
    log_quad.push_back(std::log2(quad.variance));
    log_pair.push_back(std::log2(pair.variance));
  }
  const double quad_slope = fit_line(log_delta, log_quad).slope;
  const double pair_slope = fit_line(log_delta, log_pair).slope;
  EXPECT_NEAR(quad_slope, 2.0, 0.3);
  EXPECT_NEAR(pair_slope, 1.0, 0.3);
}

TEST(RunAmlmc, NonFinitePayoffAborts) {
  const auto ou = scalar_ou();
  const TestFunction<double> phi(
      [](const Vec& x) { return x(0) > 1.2 ? std::numeric_limits<double>::quiet_NaN() : x(0); }, "trap");
  const std::uint64_t seed = 12;
  std::uint64_t first = 0;
  while (simulate_terminal<double>(*ou, SchemeKind::Weak2, scalar(1.0), 0, 1.0,
                                   StreamKey{forward_level_seed(seed, 0), first, 0, 0})(0) <= 1.2)
    ++first;
  try {
    run_amlmc(*ou, phi, scalar(1.0), manual_plan({5000, 10}, 1.0), seed, serial());
    FAIL() << "expected a non-finite abort";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.level(), 0);
    EXPECT_EQ(e.sample(), first);
  }
}

TEST(RunSingleLevel, OuMeanWithinInterval) {
  const auto ou = scalar_ou();
  const auto phi = coordinate<double>(0);
  const auto r = run_single_level(*ou, phi, scalar(1.0), 1.0, 4, 50000, 3);
  const auto chain = oracle::weak2_ou(ou->a(), ou->c(), 1.0, 4);
  EXPECT_NEAR(r.estimate, chain.F(0, 0), 4 * std::sqrt(r.estimator_variance()));
  EXPECT_DOUBLE_EQ(r.paper_cost, 50000.0 * 16);
  EXPECT_THROW(run_single_level(*ou, phi, scalar(1.0), 1.0, 4, 1, 3), ArgumentError);
}

TEST(RunSingleLevel, SharesBaseLevelNoise) {
  const auto ou = scalar_ou();
  const auto phi = coordinate<double>(0);
  const auto single = run_single_level(*ou, phi, scalar(1.0), 1.0, 2, 100, 8);
  const auto ml = run_amlmc(*ou, phi, scalar(1.0), manual_plan({100, 10}, 1.0, 2), 8);
  EXPECT_EQ(single.levels[0].mean, ml.levels[0].mean);
}

TEST(SampleLevel, CoupledLevelZeroIsUsageError) {
  const auto ou = scalar_ou();
  EXPECT_THROW(sample_level<double>(*ou, coordinate<double>(0), scalar(1.0), 1.0, 0, 10, 1, LevelCoupling::Antithetic),
               UsageError);
}
