#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "amlmc/noise.hpp"
#include "amlmc/stats.hpp"
#include "oracles.hpp"

using namespace amlmc;
using Noise = HalfStepNoise<double>;

namespace {

Noise draw(std::uint64_t sample, double delta, Regime regime, int d, std::uint64_t seed = 1) {
  return sample_half_step<double>(StreamKey{seed, sample, 2, 0}, delta, regime, d);
}

Noise make_noise(std::initializer_list<double> db, std::initializer_list<double> tilde,
                 std::initializer_list<double> ti) {
  Noise n = Noise::zero(static_cast<int>(db.size()));
  int k = 0;
  for (double v : db) n.db(k++) = v;
  k = 0;
  for (double v : tilde) n.db_tilde(k++) = v;
  k = 0;
  for (double v : ti) n.time_int(k++) = v;
  return n;
}

/// Covariance estimate with a standard error from the spread of the centred products.
struct CovEstimate {
  double value;
  double std_error;
};

CovEstimate covariance(const std::vector<double>& x, const std::vector<double>& y) {
  RunningMoments mx, my;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx.add(x[i]);
    my.add(y[i]);
  }
  RunningMoments prod;
  for (std::size_t i = 0; i < x.size(); ++i) prod.add((x[i] - mx.mean) * (y[i] - my.mean));
  return {prod.mean, prod.std_error()};
}

}  // namespace

TEST(SampleHalfStep, ZeroDrawsGiveZeroNoise) {
  auto zero = [] { return 0.0; };
  const auto n = sample_half_step<double>(zero, zero, zero, 0.5, Regime::HypoElliptic, 3);
  EXPECT_TRUE(n.db.isZero(0));
  EXPECT_TRUE(n.db_tilde.isZero(0));
  EXPECT_TRUE(n.time_int.isZero(0));
  EXPECT_EQ(n.db_tilde.size(), 2);
}

TEST(SampleHalfStep, RejectsNonPositiveStep) {
  EXPECT_THROW(draw(0, 0.0, Regime::Elliptic, 1), ArgumentError);
  EXPECT_THROW(draw(0, -1.0, Regime::Elliptic, 1), ArgumentError);
}

TEST(SampleHalfStep, ElliptcRegimeHasNoTimeIntegral) {
  const auto n = draw(3, 0.25, Regime::Elliptic, 2);
  EXPECT_TRUE(n.time_int.isZero(0));
  EXPECT_EQ(n.db_tilde.size(), 1);
  EXPECT_EQ(draw(3, 0.25, Regime::Elliptic, 1).db_tilde.size(), 0);
}

TEST(SampleHalfStep, DeterministicPerKey) {
  EXPECT_EQ(draw(17, 0.25, Regime::HypoElliptic, 2), draw(17, 0.25, Regime::HypoElliptic, 2));
  EXPECT_FALSE(draw(17, 0.25, Regime::HypoElliptic, 2) == draw(18, 0.25, Regime::HypoElliptic, 2));
}

// The covariance targets D^2/2 and D^3/3 are the moments of (B_D, int_0^D B ds).
// Reproduced first by a Riemann sum over simulated Brownian paths.
TEST(SampleHalfStep, RiemannSumOracleAgreesWithClosedForm) {
  const double delta = 0.25;
  const int grid = 1 << 10;
  const int paths = 20000;
  const double h = delta / grid;
  std::vector<double> b(paths), integral(paths);
  for (int p = 0; p < paths; ++p) {
    CounterStream s(StreamKey{77, static_cast<std::uint64_t>(p), 0, 0}, StreamTag::Exact);
    double w = 0, acc = 0;
    for (int i = 0; i < grid; ++i) {
      const double next = w + std::sqrt(h) * s.normal();
      acc += 0.5 * (w + next) * h;
      w = next;
    }
    b[p] = w;
    integral[p] = acc;
  }
  const auto cov = covariance(b, integral);
  const auto var = covariance(integral, integral);
  EXPECT_NEAR(cov.value, delta * delta / 2, 4 * cov.std_error);
  EXPECT_NEAR(var.value, delta * delta * delta / 3, 4 * var.std_error);
}

TEST(SampleHalfStep, TimeIntegralCovariance) {
  const double delta = 0.25;
  const int n = 1000000;
  std::vector<double> db(n), ti(n);
  for (int i = 0; i < n; ++i) {
    const auto s = draw(static_cast<std::uint64_t>(i), delta, Regime::HypoElliptic, 1);
    db[i] = s.db(0);
    ti[i] = s.time_int(0);
  }
  const auto cov = covariance(db, ti);
  EXPECT_NEAR(cov.value, 0.03125, 3 * cov.std_error);
  const auto var = covariance(ti, ti);
  EXPECT_NEAR(var.value, 0.005208333333333333, 3 * var.std_error);
  const auto vdb = covariance(db, db);
  EXPECT_NEAR(vdb.value, delta, 3 * vdb.std_error);
}

TEST(SampleHalfStep, AuxiliaryIndependentOfBrownian) {
  const int n = 200000;
  std::vector<double> db(n), tilde(n);
  for (int i = 0; i < n; ++i) {
    const auto s = draw(static_cast<std::uint64_t>(i), 0.5, Regime::Elliptic, 2);
    db[i] = s.db(1);
    tilde[i] = s.db_tilde(0);
  }
  const auto cov = covariance(db, tilde);
  EXPECT_NEAR(cov.value / 0.5, 0.0, 4.0 / std::sqrt(n));
}

TEST(AggregateCoarse, ZeroHalvesGiveZero) {
  const auto z = Noise::zero(2);
  const auto c = aggregate_coarse(z, z, 0.5);
  EXPECT_TRUE(c.db.isZero(0));
  EXPECT_TRUE(c.db_tilde.isZero(0));
  EXPECT_TRUE(c.time_int.isZero(0));
}

TEST(AggregateCoarse, Additivity) {
  const auto c = aggregate_coarse(make_noise({0.3}, {}, {0.01}), make_noise({-0.1}, {}, {0.02}), 0.5);
  EXPECT_DOUBLE_EQ(c.db(0), 0.2);
  EXPECT_DOUBLE_EQ(c.time_int(0), 0.18);
}

TEST(AggregateCoarse, InvariantsHoldExactlyOnSampledSteps) {
  for (std::uint32_t k = 0; k < 1000; ++k) {
    const auto step = sample_coarse_step<double>(StreamKey{5, k, 3, 0}, k, 0.125, Regime::HypoElliptic, 3);
    const auto& a = step.fine_first;
    const auto& b = step.fine_second;
    ASSERT_EQ(step.coarse.db, a.db + b.db);
    ASSERT_EQ(step.coarse.db_tilde, a.db_tilde + b.db_tilde);
    ASSERT_EQ(step.coarse.time_int, a.time_int + b.time_int + 0.125 * a.db);
  }
}

TEST(BuildEta, ZeroNoise) {
  const auto eta = build_eta(Noise::zero(2), 0.5, Regime::HypoElliptic).eta;
  EXPECT_DOUBLE_EQ(eta(0, 0), 0.125);
  EXPECT_DOUBLE_EQ(eta(1, 1), -0.25);
  EXPECT_DOUBLE_EQ(eta(2, 2), -0.25);
  EXPECT_EQ(eta(1, 2), 0.0);
  EXPECT_EQ(eta(2, 1), 0.0);
  EXPECT_EQ(eta(0, 1), 0.0);
  EXPECT_EQ(eta(1, 0), 0.0);
}

TEST(BuildEta, EllipticFormula) {
  const auto eta = build_eta(make_noise({1, 2}, {0}, {0, 0}), 1.0, Regime::Elliptic).eta;
  EXPECT_DOUBLE_EQ(eta(1, 2), 1.0);
  EXPECT_DOUBLE_EQ(eta(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(eta(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(eta(0, 0), 0.5);
}

TEST(BuildEta, HypoEllipticUsesTimeIntegral) {
  const auto eta = build_eta(make_noise({0.4}, {}, {0.12}), 0.5, Regime::HypoElliptic).eta;
  EXPECT_DOUBLE_EQ(eta(1, 0), 0.12);
  EXPECT_NEAR(eta(0, 1), 0.08, 1e-15);
}

TEST(BuildEta, AuxiliaryAreaProduct) {
  const auto table = build_eta(make_noise({0.5, -1.0, 2.0}, {0.3, 0.7}, {0, 0, 0}), 1.0, Regime::Elliptic);
  EXPECT_DOUBLE_EQ(table.a_tilde(0, 1), 0.5 * 0.3);
  EXPECT_DOUBLE_EQ(table.a_tilde(0, 2), 0.5 * 0.7);
  EXPECT_DOUBLE_EQ(table.a_tilde(1, 2), -1.0 * 0.7);
}

TEST(BuildEta, IntegrationByPartsIdentity) {
  for (auto regime : {Regime::Elliptic, Regime::HypoElliptic}) {
    for (std::uint64_t i = 0; i < 2000; ++i) {
      const double delta = 0.3;
      const auto n = draw(i, delta, regime, 3);
      const auto eta = build_eta(n, delta, regime).eta;
      for (int j = 1; j <= 3; ++j) {
        const double want = delta * n.db(j - 1);
        ASSERT_NEAR(eta(0, j) + eta(j, 0), want, 4 * std::numeric_limits<double>::epsilon() * (1 + std::abs(want)));
      }
    }
  }
}

TEST(BuildEta, MomentConditions) {
  const double delta = 0.5;
  const int n = 200000;
  const int d = 2;
  std::vector<RunningMoments> entries((d + 1) * (d + 1));
  RunningMoments area;
  for (int i = 0; i < n; ++i) {
    const auto s = draw(static_cast<std::uint64_t>(i), delta, Regime::HypoElliptic, d, 23);
    const auto t = build_eta(s, delta, Regime::HypoElliptic);
    for (int a = 0; a <= d; ++a)
      for (int b = 0; b <= d; ++b) entries[a * (d + 1) + b].add(t.eta(a, b));
    area.add(t.a_tilde(0, 1));
  }
  for (int a = 0; a <= d; ++a)
    for (int b = 0; b <= d; ++b) {
      if (a == 0 && b == 0) continue;
      const auto& m = entries[a * (d + 1) + b];
      EXPECT_NEAR(m.mean, 0.0, 4 * m.std_error()) << a << "," << b;
    }
  EXPECT_NEAR(area.mean, 0.0, 4 * area.std_error());
  // Var of a product of independent N(0, D) variables is D^2; its own
  // sampling sd is sqrt((E X^4 - D^4) / n) = D^2 sqrt(8 / n).
  EXPECT_NEAR(area.variance(), delta * delta, 4 * delta * delta * std::sqrt(8.0 / n));
}

TEST(SwapFineHalves, Involution) {
  const auto step = sample_coarse_step<double>(StreamKey{9, 1, 4, 0}, 5, 0.25, Regime::HypoElliptic, 2);
  EXPECT_EQ(swap_fine_halves(swap_fine_halves(step)), step);
}

TEST(SwapFineHalves, ExchangesOrderKeepsSums) {
  const auto step = make_coarse_step(make_noise({0.3}, {}, {0.01}), make_noise({-0.1}, {}, {0.02}), 0.5);
  const auto swapped = swap_fine_halves(step);
  EXPECT_DOUBLE_EQ(swapped.fine_first.db(0), -0.1);
  EXPECT_DOUBLE_EQ(swapped.fine_second.db(0), 0.3);
  EXPECT_DOUBLE_EQ(swapped.coarse.db(0), step.coarse.db(0));
  EXPECT_NE(swapped.coarse.time_int(0), step.coarse.time_int(0));
}

TEST(SwapFineHalves, EqualInLaw) {
  const int n = 100000;
  std::vector<double> orig_db, orig_ti, swap_db, swap_ti;
  for (int i = 0; i < n; ++i) {
    const auto a = sample_coarse_step<double>(StreamKey{31, static_cast<std::uint64_t>(i), 2, 0}, 0, 0.25,
                                              Regime::HypoElliptic, 1);
    const auto b = swap_fine_halves(sample_coarse_step<double>(
        StreamKey{31, static_cast<std::uint64_t>(i + n), 2, 0}, 0, 0.25, Regime::HypoElliptic, 1));
    orig_db.push_back(a.fine_first.db(0));
    swap_db.push_back(b.fine_first.db(0));
    orig_ti.push_back(a.coarse.time_int(0));
    swap_ti.push_back(b.coarse.time_int(0));
  }
  const double crit = oracle::ks_critical(n, n, 1e-3);
  EXPECT_LT(oracle::ks_statistic(orig_db, swap_db), crit);
  EXPECT_LT(oracle::ks_statistic(orig_ti, swap_ti), crit);
}

TEST(Mirrored, NegatesEverything) {
  const auto n = draw(4, 0.5, Regime::HypoElliptic, 2);
  const auto m = n.mirrored();
  EXPECT_EQ(m.db, -n.db);
  EXPECT_EQ(m.db_tilde, -n.db_tilde);
  EXPECT_EQ(m.time_int, -n.time_int);
}
