#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "amlmc/errors.hpp"
#include "amlmc/model.hpp"
#include "amlmc/parallel.hpp"
#include "amlmc/rng.hpp"
#include "amlmc/schemes.hpp"
#include "amlmc/stats.hpp"

namespace amlmc {

enum class AllocationRule { Amlmc, Mlpf, Amlpf, Manual };

inline const char* to_string(AllocationRule rule) {
  switch (rule) {
    case AllocationRule::Amlmc: return "amlmc";
    case AllocationRule::Mlpf: return "mlpf";
    case AllocationRule::Amlpf: return "amlpf";
    case AllocationRule::Manual: return "manual";
  }
  return "?";
}

/// Levels base_level, ..., base_level + L with M[i] samples at level
/// base_level + i. base_level lets stiff models start from a grid on which
/// the explicit schemes are stable; the default 0 gives Delta_0 = T.
struct LevelPlan {
  int base_level = 0;
  int L = 0;
  std::vector<std::uint64_t> M;
  double epsilon = 0.0;
  AllocationRule rule = AllocationRule::Manual;
  double horizon = 1.0;

  int level(int i) const noexcept { return base_level + i; }
  int finest() const noexcept { return base_level + L; }
  double delta(int i) const { return level_delta(horizon, level(i)); }

  void validate() const {
    if (L < 0) throw ArgumentError("plan: L must be >= 0");
    if (base_level < 0) throw ArgumentError("plan: base level must be >= 0");
    if (M.size() != static_cast<std::size_t>(L + 1)) throw ArgumentError("plan: need L + 1 sample counts");
    for (auto m : M)
      if (m < 2) throw ArgumentError("plan: every M_l must be >= 2");
    if (!(horizon > 0)) throw ArgumentError("plan: horizon must be positive");
    check_level(finest());
  }

  /// The paper's cost measure sum_l M_l / Delta_l.
  double paper_cost() const {
    double total = 0;
    for (int i = 0; i <= L; ++i) total += static_cast<double>(M[static_cast<std::size_t>(i)]) / delta(i);
    return total;
  }
};

namespace detail {

/// ceil with a relative guard so that values like 36.000000000000004 from
/// rounding in eps^-2 do not jump to the next integer.
inline std::uint64_t guarded_ceil(double x) {
  const double guarded = x * (1.0 - 1e-12);
  return static_cast<std::uint64_t>(std::ceil(guarded));
}

inline std::uint64_t at_least_two(double x) { return std::max<std::uint64_t>(2, guarded_ceil(x)); }

}  // namespace detail

/// L = ceil(log2(1/eps) / 2), so that the squared Weak-2 bias Delta_L^2 is of
/// order eps; the constant in L = O(log eps^{-1/2}) is a free choice.
inline int levels_for_epsilon(double epsilon) {
  if (!(epsilon > 0) || !(epsilon < 1)) throw ArgumentError("epsilon must lie in (0, 1)");
  return std::max(0, static_cast<int>(std::ceil(0.5 * std::log2(1.0 / epsilon) - 1e-12)));
}

/// M_l = max(2, ceil(c eps^-2 Delta_l^{3/2})).
inline LevelPlan allocate_amlmc(double epsilon, double c, double horizon, int base_level = 0) {
  if (!(c > 0)) throw ArgumentError("allocation constant must be positive");
  LevelPlan plan;
  plan.L = levels_for_epsilon(epsilon);
  plan.base_level = base_level;
  plan.epsilon = epsilon;
  plan.horizon = horizon;
  plan.rule = AllocationRule::Amlmc;
  for (int i = 0; i <= plan.L; ++i)
    plan.M.push_back(detail::at_least_two(c / (epsilon * epsilon) * std::pow(plan.delta(i), 1.5)));
  plan.validate();
  return plan;
}

/// Hand-specified plan.
inline LevelPlan manual_plan(std::vector<std::uint64_t> m, double horizon, int base_level = 0) {
  LevelPlan plan;
  plan.L = static_cast<int>(m.size()) - 1;
  plan.M = std::move(m);
  plan.horizon = horizon;
  plan.base_level = base_level;
  plan.validate();
  return plan;
}

/// How the two (or four) paths of a level difference are generated.
enum class LevelCoupling {
  SingleLevel,     // phi(X^[l]) on its own
  PlainPair,       // Weak-2 fine/coarse sharing the Brownian path
  Antithetic,      // Weak-2 antithetic quad
  TruncatedTriple, // truncated-Milstein antithetic triple
};

struct LevelStats {
  int level = 0;
  std::uint64_t samples = 0;
  double mean = 0.0;         // mean of P_f - P_c (or of P_0 on the base level)
  double variance = 0.0;     // sample variance of the same quantity
  double second_moment = 0.0;
  double mean_fine = 0.0;
  double mean_coarse = 0.0;
  double mean_max_gap_sq = 0.0;  // E max_t ||X^f_hat - X^c_hat||^2 (antithetic only)
  double step_cost = 0.0;        // fine steps of single legs, summed over samples
  double paper_cost = 0.0;       // M_l / Delta_l
};

struct MlmcReport {
  std::string method;
  double estimate = 0.0;
  std::vector<LevelStats> levels;
  double step_cost = 0.0;
  double paper_cost = 0.0;
  double wall_seconds = 0.0;

  /// sum_l Var_l / M_l.
  double estimator_variance() const {
    double v = 0;
    for (const auto& lv : levels) v += lv.variance / static_cast<double>(lv.samples);
    return v;
  }
};

struct RunOptions {
  int threads = 0;  // 0 = hardware concurrency
};

/// Seed of the stream family used for forward-problem level `level`. Shared by
/// every forward method, so e.g. single-level runs and the base level of a
/// multilevel run at the same level consume identical noise.
inline std::uint64_t forward_level_seed(std::uint64_t seed, int level) {
  return derive_seed(seed, 0x464f5257u, static_cast<std::uint64_t>(level));
}

namespace detail {

struct LevelAccumulator {
  RunningMoments diff;
  RunningMoments fine;
  RunningMoments coarse;
  RunningMoments gap;
};

inline void merge_level(LevelAccumulator& a, const LevelAccumulator& b) {
  a.diff.merge(b.diff);
  a.fine.merge(b.fine);
  a.coarse.merge(b.coarse);
  a.gap.merge(b.gap);
}

inline double steps_per_sample(LevelCoupling coupling, int level) {
  const double fine = std::ldexp(1.0, level);
  switch (coupling) {
    case LevelCoupling::SingleLevel: return fine;
    case LevelCoupling::PlainPair: return 1.5 * fine;
    case LevelCoupling::Antithetic: return 3.0 * fine;
    case LevelCoupling::TruncatedTriple: return 2.5 * fine;
  }
  return fine;
}

}  // namespace detail

/// Draws M samples of one level's correction and returns its statistics.
/// For SingleLevel the payoff itself is sampled with `scheme`; the coupled
/// variants use their fixed schemes and require level >= 1.
template <typename Scalar>
LevelStats sample_level(const DiffusionModel<Scalar>& model, const TestFunction<Scalar>& phi,
                        const Vector<Scalar>& x0, Scalar horizon, int level, std::uint64_t samples,
                        std::uint64_t level_seed, LevelCoupling coupling, SchemeKind scheme = SchemeKind::Weak2,
                        RunOptions options = {}) {
  check_level(level);
  if (coupling != LevelCoupling::SingleLevel && level == 0)
    throw UsageError("coupled level corrections need level >= 1");

  auto payoff = [&](const Vector<Scalar>& x, std::uint64_t sample) {
    const double value = static_cast<double>(phi(x));
    if (!std::isfinite(value)) throw NonFiniteError(level, sample);
    return value;
  };

  auto chunk = [&](std::uint64_t begin, std::uint64_t end) {
    detail::LevelAccumulator acc;
    for (std::uint64_t i = begin; i < end; ++i) {
      const StreamKey key{level_seed, i, 0, 0};
      double fine = 0, coarse = 0, gap = 0;
      switch (coupling) {
        case LevelCoupling::SingleLevel:
          fine = payoff(simulate_terminal(model, scheme, x0, level, horizon, key), i);
          break;
        case LevelCoupling::PlainPair: {
          const auto pair = simulate_coupled_pair(model, SchemeKind::Weak2, x0, level, horizon, key);
          fine = payoff(pair.fine, i);
          coarse = payoff(pair.coarse, i);
          break;
        }
        case LevelCoupling::Antithetic: {
          const auto quad = simulate_antithetic_quad(model, x0, level, horizon, key);
          fine = 0.5 * (payoff(quad.x_bar_f, i) + payoff(quad.x_tilde_f, i));
          coarse = 0.5 * (payoff(quad.x_bar_c, i) + payoff(quad.x_tilde_c, i));
          gap = static_cast<double>(quad.max_gap * quad.max_gap);
          break;
        }
        case LevelCoupling::TruncatedTriple: {
          const auto triple = simulate_antithetic_triple_tm(model, x0, level, horizon, key);
          fine = 0.5 * (payoff(triple.x_bar_f, i) + payoff(triple.x_tilde_f, i));
          coarse = payoff(triple.x_bar_c, i);
          break;
        }
      }
      acc.diff.add(fine - coarse);
      acc.fine.add(fine);
      acc.coarse.add(coarse);
      acc.gap.add(gap);
    }
    return acc;
  };

  const auto acc = chunked_reduce<detail::LevelAccumulator>(samples, options.threads, chunk, detail::merge_level);
  LevelStats out;
  out.level = level;
  out.samples = samples;
  out.mean = acc.diff.mean;
  out.variance = acc.diff.variance();
  out.second_moment =
      samples > 0 ? acc.diff.m2 / static_cast<double>(samples) + acc.diff.mean * acc.diff.mean : 0.0;
  out.mean_fine = acc.fine.mean;
  out.mean_coarse = acc.coarse.mean;
  out.mean_max_gap_sq = acc.gap.mean;
  out.step_cost = static_cast<double>(samples) * detail::steps_per_sample(coupling, level);
  out.paper_cost = static_cast<double>(samples) / static_cast<double>(level_delta(horizon, level));
  return out;
}

namespace detail {

template <typename Scalar>
MlmcReport run_levels(const char* method, const DiffusionModel<Scalar>& model, const TestFunction<Scalar>& phi,
                      const Vector<Scalar>& x0, const LevelPlan& plan, std::uint64_t seed, SchemeKind base_scheme,
                      LevelCoupling coupling, RunOptions options) {
  plan.validate();
  const auto start = std::chrono::steady_clock::now();
  MlmcReport report;
  report.method = method;
  const auto horizon = static_cast<Scalar>(plan.horizon);
  for (int i = 0; i <= plan.L; ++i) {
    const int level = plan.level(i);
    const auto m = plan.M[static_cast<std::size_t>(i)];
    const auto kind = i == 0 ? LevelCoupling::SingleLevel : coupling;
    report.levels.push_back(
        sample_level(model, phi, x0, horizon, level, m, forward_level_seed(seed, level), kind, base_scheme, options));
  }
  for (const auto& lv : report.levels) {
    report.estimate += lv.mean;
    report.step_cost += lv.step_cost;
    report.paper_cost += lv.paper_cost;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace detail

/// Antithetic MLMC with the Weak-2 quad on levels >= 1.
template <typename Scalar>
MlmcReport run_amlmc(const DiffusionModel<Scalar>& model, const TestFunction<Scalar>& phi, const Vector<Scalar>& x0,
                     const LevelPlan& plan, std::uint64_t seed, RunOptions options = {}) {
  return detail::run_levels("amlmc", model, phi, x0, plan, seed, SchemeKind::Weak2, LevelCoupling::Antithetic,
                            options);
}

/// Non-antithetic MLMC: Weak-2 fine and coarse legs sharing the Brownian path.
template <typename Scalar>
MlmcReport run_plain_mlmc(const DiffusionModel<Scalar>& model, const TestFunction<Scalar>& phi,
                          const Vector<Scalar>& x0, const LevelPlan& plan, std::uint64_t seed,
                          RunOptions options = {}) {
  return detail::run_levels("mlmc", model, phi, x0, plan, seed, SchemeKind::Weak2, LevelCoupling::PlainPair,
                            options);
}

/// Antithetic MLMC with truncated Milstein (base level also truncated Milstein).
template <typename Scalar>
MlmcReport run_ammlmc(const DiffusionModel<Scalar>& model, const TestFunction<Scalar>& phi,
                      const Vector<Scalar>& x0, const LevelPlan& plan, std::uint64_t seed, RunOptions options = {}) {
  return detail::run_levels("ammlmc", model, phi, x0, plan, seed, SchemeKind::TruncatedMilstein,
                            LevelCoupling::TruncatedTriple, options);
}

/// Plain Monte Carlo at a single level.
template <typename Scalar>
MlmcReport run_single_level(const DiffusionModel<Scalar>& model, const TestFunction<Scalar>& phi,
                            const Vector<Scalar>& x0, Scalar horizon, int level, std::uint64_t samples,
                            std::uint64_t seed, SchemeKind scheme = SchemeKind::Weak2, RunOptions options = {}) {
  if (samples < 2) throw ArgumentError("single-level run needs at least two samples");
  LevelPlan plan;
  plan.base_level = level;
  plan.L = 0;
  plan.M = {samples};
  plan.horizon = static_cast<double>(horizon);
  return detail::run_levels("stdmc", model, phi, x0, plan, seed, scheme, LevelCoupling::SingleLevel, options);
}

}  // namespace amlmc
