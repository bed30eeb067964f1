#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "amlmc/models.hpp"
#include "amlmc/schemes.hpp"
#include "amlmc/stats.hpp"
#include "oracles.hpp"

using namespace amlmc;
using Vec = Vector<double>;
using Noise = HalfStepNoise<double>;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

/// FHN drift with every diffusion column identically zero.
class SilentFhn final : public DiffusionModel<double> {
 public:
  SilentFhn() : DiffusionModel("silent-fhn", ModelShape{1, 1, 2}) {}
  Vec drift(const Vec& x) const override {
    const FhnParams p;
    return vec2((x(0) - x(0) * x(0) * x(0) - x(1) - p.s) / p.epsilon, p.gamma * x(0) - x(1) + p.beta);
  }
  Columns raw_diffusion(const Vec&) const override { return Columns::Zero(2, 2); }
};

/// Constant drift (1, -2), zero diffusion: every scheme is exact.
class ConstantDrift final : public DiffusionModel<double> {
 public:
  ConstantDrift() : DiffusionModel("constant-drift", ModelShape{0, 2, 2}) {}
  Vec drift(const Vec&) const override { return vec2(1.0, -2.0); }
  Columns raw_diffusion(const Vec&) const override { return Columns::Zero(2, 2); }
};

/// dX = -X^3 dt + (0.5 + 0.2 sin X) dB.
class Nonlinear1d final : public DiffusionModel<double> {
 public:
  Nonlinear1d() : DiffusionModel("nonlinear-1d", ModelShape{0, 1, 1}) {}
  Vec drift(const Vec& x) const override { return Vec::Constant(1, -x(0) * x(0) * x(0)); }
  Columns raw_diffusion(const Vec& x) const override { return Columns::Constant(1, 1, 0.5 + 0.2 * std::sin(x(0))); }
};

/// Determinant of the sample covariance of 2-vectors.
struct Cov2 {
  RunningCovariance xx, yy, xy;
  void add(const Vec& v) {
    xx.add(v(0), v(0));
    yy.add(v(1), v(1));
    xy.add(v(0), v(1));
  }
  double determinant() const { return xx.covariance() * yy.covariance() - xy.covariance() * xy.covariance(); }
};

/// dX_k = a_k X_k dt + v_k X_k dB^k, k = 1, 2; diagonal (hence commuting) noise.
std::shared_ptr<const LinearSdeModel<double>> diagonal_gbm(double a1, double v1, double a2, double v2) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = a1;
  a(1, 1) = a2;
  Eigen::MatrixXd b1 = Eigen::MatrixXd::Zero(2, 2), b2 = Eigen::MatrixXd::Zero(2, 2);
  b1(0, 0) = v1;
  b2(1, 1) = v2;
  return std::make_shared<LinearSdeModel<double>>("diag", a, std::vector<Eigen::MatrixXd>{b1, b2},
                                                  Eigen::MatrixXd::Zero(2, 2), 1.0, true);
}

Noise scalar_noise(double db) {
  Noise n = Noise::zero(1);
  n.db(0) = db;
  return n;
}

}  // namespace

TEST(Weak2Step, ZeroNoiseIsSecondOrderTaylor) {
  SilentFhn m;
  const Vec x = vec2(0.3, -0.2);
  const double delta = 0.1;
  const Noise z = Noise::zero(2);
  const Vec got = weak2_step(m, x, z, build_eta(z, delta, m.regime()), delta);
  const Vec want = x + delta * m.drift(x) + 0.5 * delta * delta * m.lie(0, 0, x);
  EXPECT_TRUE((got - want).isZero(1e-14));
}

TEST(Weak2Step, FhnZeroNoiseMatchesSymbolicStep) {
  const auto fhn = build_fhn<double>(FhnParams{});
  // Columns are constant, so zero increments leave only the drift terms.
  const Noise z = Noise::zero(1);
  const Vec got = weak2_step(*fhn, vec2(0, 0), z, build_eta(z, 0.5, fhn->regime()), 0.5);
  EXPECT_NEAR(got(0), -0.55, 1e-14);
  EXPECT_NEAR(got(1), 0.09375, 1e-14);
}

TEST(Weak2Step, SingleColumnIgnoresBracketSign) {
  const auto gbm = build_gbm_1d<double>(0.05, 0.4);
  const auto n = sample_half_step<double>(StreamKey{1, 2, 3, 4}, 0.25, Regime::Elliptic, 1);
  const auto eta = build_eta(n, 0.25, Regime::Elliptic);
  Vec x(1);
  x << 1.3;
  EXPECT_EQ(weak2_step(*gbm, x, n, eta, 0.25, +1), weak2_step(*gbm, x, n, eta, 0.25, -1));
}

TEST(Weak2Step, BracketSignMattersWithNonCommutingNoise) {
  const auto gbm = build_gbm_2d<double>();
  const auto n = sample_half_step<double>(StreamKey{1, 2, 3, 4}, 0.25, Regime::Elliptic, 2);
  const auto eta = build_eta(n, 0.25, Regime::Elliptic);
  EXPECT_NE(weak2_step(*gbm, vec2(1, 1), n, eta, 0.25, +1), weak2_step(*gbm, vec2(1, 1), n, eta, 0.25, -1));
}

TEST(TruncatedMilstein, ZeroNoiseIsForwardEuler) {
  SilentFhn m;
  const Vec x = vec2(0.3, -0.2);
  EXPECT_TRUE((truncated_milstein_step(m, x, Noise::zero(2), 0.1) - (x + 0.1 * m.drift(x))).isZero(1e-15));
}

TEST(TruncatedMilstein, GbmHandFormula) {
  const auto gbm = build_gbm_1d<double>(0.0, 1.0);
  Vec x(1);
  x << 1.0;
  EXPECT_DOUBLE_EQ(truncated_milstein_step(*gbm, x, scalar_noise(1.0), 1.0)(0), 2.0);
  // x (1 + r D + v dB + v^2 (dB^2 - D) / 2) at r = 0.05, v = 0.4, D = 0.25, dB = -0.3.
  const auto g2 = build_gbm_1d<double>(0.05, 0.4);
  x << 1.7;
  const double want = 1.7 * (1 + 0.05 * 0.25 + 0.4 * -0.3 + 0.5 * 0.16 * (0.09 - 0.25));
  EXPECT_NEAR(truncated_milstein_step(*g2, x, scalar_noise(-0.3), 0.25)(0), want, 1e-15);
}

TEST(TruncatedMilstein, AdditiveNoiseEqualsEuler) {
  Eigen::MatrixXd a(2, 2);
  a << -1, 0.3, 0.1, -0.5;
  Eigen::MatrixXd s(2, 2);
  s << 0.4, 0.1, 0.0, 0.7;
  const auto ou = build_linear_ou<double>(a, s);
  const auto n = sample_half_step<double>(StreamKey{8, 0, 0, 0}, 0.1, Regime::Elliptic, 2);
  const Vec x = vec2(0.5, -1.0);
  EXPECT_EQ(truncated_milstein_step(*ou, x, n, 0.1), euler_step(*ou, x, n, 0.1));
  EXPECT_EQ(milstein_commutative_step(*ou, x, n, 0.1), euler_step(*ou, x, n, 0.1));
}

TEST(EulerStep, ConstantCoefficientIncrement) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(1, 1);
  const auto bm = build_linear_ou<double>(a, Eigen::MatrixXd::Constant(1, 1, 0.5));
  Vec x(1);
  x << 2.0;
  EXPECT_DOUBLE_EQ(euler_step(*bm, x, scalar_noise(0.3), 0.1)(0), 2.15);
}

TEST(MilsteinCommutative, RejectsNonCommutativeModel) {
  const auto gbm = build_gbm_2d<double>();
  EXPECT_THROW(milstein_commutative_step(*gbm, vec2(1, 1), Noise::zero(2), 0.1), UsageError);
  EXPECT_THROW(scheme_step(*gbm, SchemeKind::MilsteinCommutative, vec2(1, 1), Noise::zero(2), 0.1), UsageError);
}

TEST(MilsteinCommutative, SingleColumnEqualsTruncated) {
  const auto gbm = build_gbm_1d<double>(0.05, 0.4);
  Vec x(1);
  x << 1.2;
  const auto n = scalar_noise(0.17);
  EXPECT_EQ(milstein_commutative_step(*gbm, x, n, 0.1), truncated_milstein_step(*gbm, x, n, 0.1));
}

TEST(MilsteinCommutative, DiagonalNoiseIsComponentwise) {
  const auto m = diagonal_gbm(0.05, 0.4, -0.1, 0.7);
  Noise n = Noise::zero(2);
  n.db << 0.21, -0.13;
  n.db_tilde << 0.5;
  const double delta = 0.1;
  const Vec got = milstein_commutative_step(*m, vec2(1.5, 0.8), n, delta);
  const auto one_d = [&](double x, double r, double v, double db) {
    return x * (1 + r * delta + v * db + 0.5 * v * v * (db * db - delta));
  };
  EXPECT_NEAR(got(0), one_d(1.5, 0.05, 0.4, 0.21), 1e-15);
  EXPECT_NEAR(got(1), one_d(0.8, -0.1, 0.7, -0.13), 1e-15);
}

TEST(SimulatePath, GridLengthAndLevelZero) {
  const auto fhn = build_fhn<double>(FhnParams{});
  const StreamKey key{3, 0, 0, 0};
  EXPECT_EQ(simulate_path(*fhn, SchemeKind::Weak2, vec2(0, 0), 0, 0.5, key).size(), 2u);
  EXPECT_EQ(simulate_path(*fhn, SchemeKind::Weak2, vec2(0, 0), 5, 1.0, key).size(), 33u);
}

TEST(SimulatePath, ErrorsOnBadInput) {
  const auto fhn = build_fhn<double>(FhnParams{});
  const StreamKey key{3, 0, 0, 0};
  EXPECT_THROW(simulate_path(*fhn, SchemeKind::Weak2, vec2(0, 0), kMaxLevel + 1, 1.0, key), ConfigError);
  EXPECT_THROW(simulate_path(*fhn, SchemeKind::Weak2, vec2(0, 0), -1, 1.0, key), ArgumentError);
  EXPECT_THROW(simulate_path(*fhn, SchemeKind::Weak2, vec2(0, 0), 2, 0.0, key), ArgumentError);
}

TEST(SimulatePath, ReplayIsBitIdentical) {
  const auto heston = build_heston<double>(HestonParams{});
  const StreamKey key{11, 4, 0, 0};
  const auto a = simulate_path(*heston, SchemeKind::Weak2, vec2(100, 0.09), 6, 1.0, key);
  const auto b = simulate_path(*heston, SchemeKind::Weak2, vec2(100, 0.09), 6, 1.0, key);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  const StreamKey other{11, 5, 0, 0};
  EXPECT_NE(simulate_terminal(*heston, SchemeKind::Weak2, vec2(100, 0.09), 6, 1.0, other), a.back());
}

TEST(SimulatePath, ZeroNoiseFhnConvergesAtSecondOrder) {
  SilentFhn m;
  const double horizon = 10.0;
  auto f = [&](const Eigen::VectorXd& y) { return Eigen::VectorXd(m.drift(y)); };
  const Eigen::VectorXd reference = oracle::rk4(f, Eigen::VectorXd(vec2(0.2, 0.1)), horizon, 1 << 16);
  std::vector<double> log_delta, log_err;
  for (int level = 8; level <= 11; ++level) {
    const Vec end = simulate_terminal<double>(m, SchemeKind::Weak2, vec2(0.2, 0.1), level, horizon, {});
    log_delta.push_back(std::log2(level_delta(horizon, level)));
    log_err.push_back(std::log2((end - reference).norm()));
  }
  const auto fit = fit_line(log_delta, log_err);
  EXPECT_NEAR(fit.slope, 2.0, 0.2);
}

TEST(AntitheticQuad, LevelZeroIsUsageError) {
  const auto fhn = build_fhn<double>(FhnParams{});
  EXPECT_THROW(simulate_antithetic_quad<double>(*fhn, vec2(0, 0), 0, 1.0, {}), UsageError);
  EXPECT_THROW(simulate_antithetic_triple_tm<double>(*fhn, vec2(0, 0), 0, 1.0, {}), UsageError);
  EXPECT_THROW(simulate_coupled_pair<double>(*fhn, SchemeKind::Weak2, vec2(0, 0), 0, 1.0, {}), UsageError);
}

TEST(AntitheticQuad, ZeroNoiseLegsCoincide) {
  SilentFhn m;
  auto quad = AntitheticQuad<double>::start(vec2(0.3, 0.1));
  advance_quad<double>(m, quad, 4, 0.05, {}, 0, 1);
  // Two fine Taylor steps and one coarse step differ, so compare legs pairwise.
  EXPECT_EQ(quad.x_bar_f, quad.x_tilde_f);
  EXPECT_EQ(quad.x_bar_c, quad.x_tilde_c);
  auto triple = AntitheticTriple<double>::start(vec2(0.3, 0.1));
  advance_triple_tm<double>(m, triple, 4, 0.05, {}, 0, 1);
  EXPECT_EQ(triple.x_bar_f, triple.x_tilde_f);
}

TEST(AntitheticQuad, ZeroNoiseConstantDriftAllLegsEqual) {
  ConstantDrift m;
  const auto quad = simulate_antithetic_quad<double>(m, vec2(0.3, 0.1), 3, 1.0, {});
  EXPECT_EQ(quad.x_bar_f, quad.x_bar_c);
  EXPECT_EQ(quad.x_tilde_f, quad.x_tilde_c);
  EXPECT_EQ(quad.x_bar_f, quad.x_tilde_f);
  EXPECT_EQ(quad.max_gap, 0.0);
}

TEST(AntitheticQuad, SingleColumnCoarseLegsAgree) {
  // On a scalar linear model each step multiplies by a scalar and the
  // half-swap is invisible, so use a nonlinear one.
  Nonlinear1d m;
  Vec x0(1);
  x0 << 0.4;
  const auto quad = simulate_antithetic_quad<double>(m, x0, 5, 1.0, StreamKey{2, 9, 0, 0});
  EXPECT_EQ(quad.x_bar_c, quad.x_tilde_c);
  EXPECT_NE(quad.x_bar_f, quad.x_tilde_f);
}

TEST(AntitheticQuad, StandardFineLegIsTheSingleLevelPath) {
  const auto heston = build_heston<double>(HestonParams{});
  const StreamKey key{21, 3, 0, 0};
  const auto quad = simulate_antithetic_quad<double>(*heston, vec2(100, 0.09), 5, 1.0, key);
  EXPECT_EQ(quad.x_bar_f, simulate_terminal<double>(*heston, SchemeKind::Weak2, vec2(100, 0.09), 5, 1.0, key));
}

TEST(AntitheticQuad, MarginalLawPreserved) {
  const auto fhn = build_fhn<double>(FhnParams{});
  const int n = 20000;
  RunningMoments quad_mean, single_mean, tilde_mean;
  for (int i = 0; i < n; ++i) {
    const auto q = simulate_antithetic_quad<double>(*fhn, vec2(0, 0), 5, 1.0,
                                                    StreamKey{1, static_cast<std::uint64_t>(i), 0, 0});
    quad_mean.add(q.x_bar_f(0));
    tilde_mean.add(q.x_tilde_f(0));
    single_mean.add(simulate_terminal<double>(*fhn, SchemeKind::Weak2, vec2(0, 0), 5, 1.0,
                                              StreamKey{2, static_cast<std::uint64_t>(i), 0, 0})(0));
  }
  const double se = std::hypot(quad_mean.std_error(), single_mean.std_error());
  EXPECT_NEAR(quad_mean.mean, single_mean.mean, 3 * se);
  EXPECT_NEAR(tilde_mean.mean, single_mean.mean, 3 * std::hypot(tilde_mean.std_error(), single_mean.std_error()));
}

TEST(AntitheticQuad, MaxGapTracksCoarseTimes) {
  const auto fhn = build_fhn<double>(FhnParams{});
  const auto quad = simulate_antithetic_quad<double>(*fhn, vec2(0, 0), 4, 1.0, StreamKey{5, 0, 0, 0});
  EXPECT_GE(quad.max_gap, (quad.x_hat_f() - quad.x_hat_c()).norm());
  EXPECT_GT(quad.max_gap, 0.0);
}

TEST(AntitheticTriple, AdditiveNoiseLegsAreEulerReplays) {
  Eigen::MatrixXd a(2, 2);
  a << -1, 0.3, 0.1, -0.5;
  const auto ou = build_linear_ou<double>(a, 0.5 * Eigen::MatrixXd::Identity(2, 2));
  const StreamKey key{4, 1, 0, 0};
  const double df = level_delta(1.0, 1);
  const auto triple = simulate_antithetic_triple_tm<double>(*ou, vec2(1, -1), 1, 1.0, key);
  StreamKey k = key;
  k.level = 1;
  const auto step = sample_coarse_step<double>(k, 0, df, Regime::Elliptic, 2);
  const Vec bar = euler_step(*ou, euler_step(*ou, vec2(1, -1), step.fine_first, df), step.fine_second, df);
  const Vec tilde = euler_step(*ou, euler_step(*ou, vec2(1, -1), step.fine_second, df), step.fine_first, df);
  EXPECT_EQ(triple.x_bar_f, bar);
  EXPECT_EQ(triple.x_tilde_f, tilde);
  EXPECT_NE(triple.x_bar_f, triple.x_tilde_f);
  EXPECT_EQ(triple.x_bar_c, euler_step(*ou, vec2(1, -1), step.coarse, 2 * df));
}

TEST(AntitheticTriple, MarginalLawPreserved) {
  const auto heston = build_heston<double>(HestonParams{});
  const int n = 20000;
  RunningMoments triple_mean, single_mean;
  for (int i = 0; i < n; ++i) {
    const auto t = simulate_antithetic_triple_tm<double>(*heston, vec2(100, 0.09), 4, 1.0,
                                                         StreamKey{7, static_cast<std::uint64_t>(i), 0, 0});
    triple_mean.add(t.x_tilde_f(0));
    single_mean.add(simulate_terminal<double>(*heston, SchemeKind::TruncatedMilstein, vec2(100, 0.09), 4, 1.0,
                                              StreamKey{8, static_cast<std::uint64_t>(i), 0, 0})(0));
  }
  EXPECT_NEAR(triple_mean.mean, single_mean.mean, 3 * std::hypot(triple_mean.std_error(), single_mean.std_error()));
}

TEST(HypoEllipticStep, CovarianceIsNonDegenerate) {
  const FhnParams p;
  const auto fhn = build_fhn<double>(p);
  const double delta = 0.01;
  const Vec x = vec2(0, 0);
  const int n = 200000;
  Cov2 hypo, ell;
  for (int i = 0; i < n; ++i) {
    const auto noise = sample_half_step<double>(StreamKey{13, static_cast<std::uint64_t>(i), 0, 0}, delta,
                                                Regime::HypoElliptic, 1);
    hypo.add(weak2_step(*fhn, x, noise, build_eta(noise, delta, Regime::HypoElliptic), delta));
    ell.add(weak2_step(*fhn, x, noise, build_eta(noise, delta, Regime::Elliptic), delta));
  }
  const double c = fhn->lie(1, 0, x)(0);
  const double want = c * c * std::pow(delta, 4) * p.sigma * p.sigma / 12;
  EXPECT_NEAR(hypo.determinant(), want, 0.1 * want);
  EXPECT_LT(std::abs(ell.determinant()), 0.05 * want);
}

TEST(TrajectoryRecorder, WritesOneRowPerLegAndCoarseTime) {
  const auto fhn = build_fhn<double>(FhnParams{});
  TrajectoryRecorder<double> rec;
  simulate_antithetic_quad_recorded<double>(*fhn, vec2(0, 0), 3, 1.0, StreamKey{1, 0, 0, 0}, rec);
  EXPECT_EQ(rec.size(), 4u * 5u);
  std::ostringstream out;
  rec.write_csv(out);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "time,leg,x0,x1");
  EXPECT_NE(text.find("\n0.5,tilde_c,"), std::string::npos);
}
