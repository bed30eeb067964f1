#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amlmc/errors.hpp"
#include "amlmc/mlmc.hpp"
#include "amlmc/model.hpp"
#include "amlmc/parallel.hpp"
#include "amlmc/rng.hpp"
#include "amlmc/schemes.hpp"

namespace amlmc {

using Observation = Eigen::VectorXd;

/// Diffusion observed at times obs_interval * k, k = 1..K, with likelihood g.
template <typename Scalar>
struct StateSpaceModel {
  ModelPtr<Scalar> dynamics;
  Vector<Scalar> x0;
  Scalar obs_interval = Scalar(1);
  /// log g(x, y). g must be positive; see gaussian_observation for the bound.
  std::function<double(const Vector<Scalar>&, const Observation&)> log_density;
  std::vector<Observation> observations;

  int steps() const noexcept { return static_cast<int>(observations.size()); }
};

/// y | x ~ N(x_component, sd^2); bounded above by 1 / (sd sqrt(2 pi)).
template <typename Scalar>
std::function<double(const Vector<Scalar>&, const Observation&)> gaussian_observation(int component, double sd) {
  if (!(sd > 0)) throw ArgumentError("observation sd must be positive");
  const double log_norm = -std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
  return [component, sd, log_norm](const Vector<Scalar>& x, const Observation& y) {
    const double z = (y(0) - static_cast<double>(x(component))) / sd;
    return log_norm - 0.5 * z * z;
  };
}

/// Vacuous likelihood g = 1.
template <typename Scalar>
std::function<double(const Vector<Scalar>&, const Observation&)> flat_observation() {
  return [](const Vector<Scalar>&, const Observation&) { return 0.0; };
}

/// Weighted particle cloud of one leg.
template <typename Scalar>
struct ParticleEnsemble {
  std::vector<Vector<Scalar>> particles;
  Eigen::VectorXd weights;

  /// 1 / sum w^2 for normalized weights.
  double ess() const { return 1.0 / weights.squaredNorm(); }
};

/// Effective sample size of a normalized weight vector.
inline double effective_sample_size(const Eigen::VectorXd& weights) { return 1.0 / weights.squaredNorm(); }

enum class ResamplePolicy { Always, AdaptiveEss };

// ---------------------------------------------------------------------------
// Index sampling and the coupled resampling kernels.

namespace detail {

inline void check_pmf(const Eigen::VectorXd& w, const char* what) {
  if (w.size() == 0) throw ArgumentError(std::string(what) + ": empty pmf");
  if ((w.array() < 0).any()) throw ArgumentError(std::string(what) + ": negative mass");
  if (std::abs(w.sum() - 1.0) > 1e-9) throw ArgumentError(std::string(what) + ": pmf not normalized");
}

/// Inverse-CDF draw from unnormalized non-negative masses.
inline int draw_index(const Eigen::VectorXd& mass, double total, double u) {
  const double target = u * total;
  double acc = 0.0;
  const auto n = mass.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += mass(i);
    if (target < acc) return static_cast<int>(i);
  }
  // Rounding at the top end: last index with positive mass.
  for (Eigen::Index i = n - 1; i >= 0; --i)
    if (mass(i) > 0) return static_cast<int>(i);
  return static_cast<int>(n - 1);
}

}  // namespace detail

/// Maximal coupling of two pmfs: with probability sum_i min(W1, W2) both
/// indices equal a draw from the normalized overlap, otherwise independent
/// draws from the normalized residuals. Indices are 0-based.
template <typename Uniform>
std::pair<int, int> maximal_coupling_sample(const Eigen::VectorXd& w1, const Eigen::VectorXd& w2, Uniform&& uniform) {
  detail::check_pmf(w1, "maximal coupling");
  detail::check_pmf(w2, "maximal coupling");
  if (w1.size() != w2.size()) throw ArgumentError("maximal coupling: pmfs differ in size");
  const Eigen::VectorXd overlap = w1.cwiseMin(w2);
  const double alpha = overlap.sum();
  const double residual = 1.0 - alpha;
  if (residual < 1e-14 || uniform() < alpha) {
    const int i = detail::draw_index(overlap, alpha, uniform());
    return {i, i};
  }
  const int i1 = detail::draw_index(w1 - overlap, residual, uniform());
  const int i2 = detail::draw_index(w2 - overlap, residual, uniform());
  return {i1, i2};
}

/// Four-way analogue: common draw from min_j W_j with probability
/// sum_i min_j W_j(i), otherwise independent residual draws per pmf.
template <typename Uniform>
std::array<int, 4> four_way_coupling_sample(const std::array<const Eigen::VectorXd*, 4>& w, Uniform&& uniform) {
  for (const auto* wj : w) {
    detail::check_pmf(*wj, "four-way coupling");
    if (wj->size() != w[0]->size()) throw ArgumentError("four-way coupling: pmfs differ in size");
  }
  const Eigen::VectorXd overlap = w[0]->cwiseMin(*w[1]).cwiseMin(*w[2]).cwiseMin(*w[3]);
  const double alpha = overlap.sum();
  const double residual = 1.0 - alpha;
  if (residual < 1e-14 || uniform() < alpha) {
    const int i = detail::draw_index(overlap, alpha, uniform());
    return {i, i, i, i};
  }
  std::array<int, 4> out{};
  for (int j = 0; j < 4; ++j) out[static_cast<std::size_t>(j)] = detail::draw_index(*w[j] - overlap, residual, uniform());
  return out;
}

template <typename Uniform>
std::array<int, 4> four_way_coupling_sample(const Eigen::VectorXd& w1, const Eigen::VectorXd& w2,
                                            const Eigen::VectorXd& w3, const Eigen::VectorXd& w4,
                                            Uniform&& uniform) {
  return four_way_coupling_sample(std::array<const Eigen::VectorXd*, 4>{&w1, &w2, &w3, &w4},
                                  std::forward<Uniform>(uniform));
}

// ---------------------------------------------------------------------------
// Particle filters. All variants share one engine: every particle carries
// one state per leg, legs are propagated jointly with shared noise, each leg
// has its own weights, and resampling couples the legs' index draws.
//
// Leg layouts:
//   PF       [x]
//   CPF      [coarse, fine]
//   ACPF     [bar_c, tilde_c, bar_f, tilde_f]
//   AMM-CPF  [bar_c, bar_f, tilde_f]  (resampled four-way with bar_c duplicated)
// Leg 0 is always the (bar) coarse leg; its ESS drives adaptive resampling.

enum class FilterKind { Single, Coupled, Antithetic, TruncatedAntithetic };

struct FilterOptions {
  ResamplePolicy policy = ResamplePolicy::AdaptiveEss;
  int threads = 0;
};

struct FilterResult {
  int level = 0;
  std::uint64_t particles = 0;
  /// Per observation step: the PF estimate, or the level difference for
  /// coupled filters. Computed before resampling.
  std::vector<double> estimate;
  std::vector<double> fine;    // fine-side estimate (PF: same as estimate)
  std::vector<double> coarse;  // coarse-side estimate (PF: zero)
  std::vector<double> reference_ess;
  int resample_events = 0;
  double step_cost = 0.0;
  double paper_cost = 0.0;
};

/// Seed family of the level-`level` filter; shared by all multilevel
/// variants so their level-0 filters coincide.
inline std::uint64_t filter_level_seed(std::uint64_t seed, int level) {
  return derive_seed(seed, 0x46494c54u, static_cast<std::uint64_t>(level));
}

namespace detail {

inline int leg_count(FilterKind kind) {
  switch (kind) {
    case FilterKind::Single: return 1;
    case FilterKind::Coupled: return 2;
    case FilterKind::Antithetic: return 4;
    case FilterKind::TruncatedAntithetic: return 3;
  }
  return 1;
}

/// Weight of each leg in the per-step estimate.
inline std::array<double, 4> leg_coefficients(FilterKind kind) {
  switch (kind) {
    case FilterKind::Single: return {1.0, 0, 0, 0};
    case FilterKind::Coupled: return {-1.0, 1.0, 0, 0};
    case FilterKind::Antithetic: return {-0.5, -0.5, 0.5, 0.5};
    case FilterKind::TruncatedAntithetic: return {-1.0, 0.5, 0.5, 0};
  }
  return {};
}

inline double steps_per_interval(FilterKind kind, int level) {
  const double fine = std::ldexp(1.0, level);
  switch (kind) {
    case FilterKind::Single: return fine;
    case FilterKind::Coupled: return 1.5 * fine;
    case FilterKind::Antithetic: return 3.0 * fine;
    case FilterKind::TruncatedAntithetic: return 2.5 * fine;
  }
  return fine;
}

template <typename Scalar>
using LegStates = std::array<Vector<Scalar>, 4>;

template <typename Scalar>
void propagate(const DiffusionModel<Scalar>& model, FilterKind kind, LegStates<Scalar>& legs, int level,
               Scalar delta, StreamKey key, std::uint32_t interval) {
  const std::uint32_t fine_steps = std::uint32_t{1} << level;
  switch (kind) {
    case FilterKind::Single: {
      PathOptions opt;
      opt.first_step = interval * fine_steps;
      opt.steps = fine_steps;
      // horizon chosen so that T / 2^level == delta
      legs[0] = simulate_terminal(model, SchemeKind::Weak2, legs[0], level, std::ldexp(delta, level), key, opt);
      break;
    }
    case FilterKind::Coupled: {
      CoupledPair<Scalar> pair{legs[1], legs[0]};
      advance_pair(model, SchemeKind::Weak2, pair, level, delta, key, interval * fine_steps / 2, fine_steps / 2);
      legs[0] = pair.coarse;
      legs[1] = pair.fine;
      break;
    }
    case FilterKind::Antithetic: {
      AntitheticQuad<Scalar> quad{legs[2], legs[3], legs[0], legs[1], Scalar(0)};
      advance_quad(model, quad, level, delta, key, interval * fine_steps / 2, fine_steps / 2);
      legs[0] = quad.x_bar_c;
      legs[1] = quad.x_tilde_c;
      legs[2] = quad.x_bar_f;
      legs[3] = quad.x_tilde_f;
      break;
    }
    case FilterKind::TruncatedAntithetic: {
      AntitheticTriple<Scalar> triple{legs[1], legs[2], legs[0]};
      advance_triple_tm(model, triple, level, delta, key, interval * fine_steps / 2, fine_steps / 2);
      legs[0] = triple.x_bar_c;
      legs[1] = triple.x_bar_f;
      legs[2] = triple.x_tilde_f;
      break;
    }
  }
}

/// Normalizes log-weights in place into `w`; returns false if no finite mass.
inline bool normalize_log_weights(const Eigen::VectorXd& log_w, Eigen::VectorXd& w) {
  const double top = log_w.maxCoeff();
  if (!std::isfinite(top)) return false;
  w = (log_w.array() - top).exp();
  const double total = w.sum();
  if (!(total > 0) || !std::isfinite(total)) return false;
  w /= total;
  return true;
}

}  // namespace detail

/// Runs one (possibly coupled) particle filter at fine level `level` with
/// step obs_interval / 2^level. Coupled kinds need level >= 1.
template <typename Scalar>
FilterResult run_filter(const StateSpaceModel<Scalar>& ssm, FilterKind kind, int level, std::uint64_t particles,
                        const TestFunction<Scalar>& phi, std::uint64_t level_seed, FilterOptions options = {}) {
  check_level(level);
  if (kind != FilterKind::Single && level == 0) throw UsageError("coupled filters need level >= 1");
  if (particles < 1) throw ArgumentError("filter needs at least one particle");
  if (!ssm.dynamics || !ssm.log_density) throw ArgumentError("state-space model is incomplete");
  const auto& model = *ssm.dynamics;
  const int legs = detail::leg_count(kind);
  const auto coeff = detail::leg_coefficients(kind);
  const auto m = static_cast<Eigen::Index>(particles);
  const Scalar delta = std::ldexp(ssm.obs_interval, -level);

  std::vector<detail::LegStates<Scalar>> state(particles);
  for (auto& s : state)
    for (int j = 0; j < legs; ++j) s[static_cast<std::size_t>(j)] = ssm.x0;
  std::vector<Eigen::VectorXd> log_w(static_cast<std::size_t>(legs), Eigen::VectorXd::Zero(m));
  std::vector<Eigen::VectorXd> w(static_cast<std::size_t>(legs), Eigen::VectorXd::Constant(m, 1.0 / m));
  std::vector<double> phi_values(static_cast<std::size_t>(legs) * particles);

  FilterResult out;
  out.level = level;
  out.particles = particles;
  const int steps = ssm.steps();

  for (int k = 0; k < steps; ++k) {
    const Observation& y = ssm.observations[static_cast<std::size_t>(k)];
    const auto interval = static_cast<std::uint32_t>(k);
    chunked_reduce<int>(
        particles, options.threads,
        [&](std::uint64_t begin, std::uint64_t end) {
          for (std::uint64_t p = begin; p < end; ++p) {
            detail::propagate(model, kind, state[p], level, delta, StreamKey{level_seed, p, 0, 0}, interval);
            for (int j = 0; j < legs; ++j) {
              const auto& x = state[p][static_cast<std::size_t>(j)];
              log_w[static_cast<std::size_t>(j)](static_cast<Eigen::Index>(p)) += ssm.log_density(x, y);
              phi_values[static_cast<std::size_t>(j) * particles + p] = static_cast<double>(phi(x));
            }
          }
          return 0;
        },
        [](int&, const int&) {});

    double estimate = 0.0, fine = 0.0, coarse = 0.0;
    for (int j = 0; j < legs; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      if (!detail::normalize_log_weights(log_w[uj], w[uj])) throw DegenerateWeightsError(k + 1, j);
      double leg_estimate = 0.0;
      for (Eigen::Index p = 0; p < m; ++p)
        leg_estimate += w[uj](p) * phi_values[uj * particles + static_cast<std::size_t>(p)];
      if (!std::isfinite(leg_estimate)) throw NonFiniteError(level, 0);
      estimate += coeff[uj] * leg_estimate;
      if (kind == FilterKind::Single)
        fine += leg_estimate;
      else if (coeff[uj] > 0)
        fine += coeff[uj] * leg_estimate;
      else
        coarse -= coeff[uj] * leg_estimate;
    }
    out.estimate.push_back(estimate);
    out.fine.push_back(fine);
    out.coarse.push_back(coarse);
    const double ess = effective_sample_size(w[0]);
    out.reference_ess.push_back(ess);

    const bool last = k + 1 == steps;
    const bool resample =
        !last && (options.policy == ResamplePolicy::Always || ess < 0.5 * static_cast<double>(particles));
    if (!resample) continue;
    ++out.resample_events;

    const auto previous = state;
    for (std::uint64_t p = 0; p < particles; ++p) {
      CounterStream stream(StreamKey{level_seed, p, static_cast<std::uint32_t>(level), interval},
                           StreamTag::Resample);
      auto uniform = [&] { return stream.uniform(); };
      switch (kind) {
        case FilterKind::Single: {
          const int i = detail::draw_index(w[0], 1.0, uniform());
          state[p][0] = previous[static_cast<std::size_t>(i)][0];
          break;
        }
        case FilterKind::Coupled: {
          const auto [ic, jf] = maximal_coupling_sample(w[0], w[1], uniform);
          state[p][0] = previous[static_cast<std::size_t>(ic)][0];
          state[p][1] = previous[static_cast<std::size_t>(jf)][1];
          break;
        }
        case FilterKind::Antithetic: {
          const auto idx = four_way_coupling_sample(w[0], w[1], w[2], w[3], uniform);
          for (std::size_t j = 0; j < 4; ++j) state[p][j] = previous[static_cast<std::size_t>(idx[j])][j];
          break;
        }
        case FilterKind::TruncatedAntithetic: {
          const auto idx = four_way_coupling_sample(w[0], w[0], w[1], w[2], uniform);
          state[p][0] = previous[static_cast<std::size_t>(idx[0])][0];
          state[p][1] = previous[static_cast<std::size_t>(idx[2])][1];
          state[p][2] = previous[static_cast<std::size_t>(idx[3])][2];
          break;
        }
      }
    }
    for (int j = 0; j < legs; ++j) {
      log_w[static_cast<std::size_t>(j)].setZero();
      w[static_cast<std::size_t>(j)].setConstant(1.0 / static_cast<double>(m));
    }
  }

  out.step_cost = static_cast<double>(particles) * static_cast<double>(steps) * detail::steps_per_interval(kind, level);
  out.paper_cost = static_cast<double>(particles) / static_cast<double>(delta);
  return out;
}

template <typename Scalar>
FilterResult pf_run(const StateSpaceModel<Scalar>& ssm, int level, std::uint64_t particles,
                    const TestFunction<Scalar>& phi, std::uint64_t seed, FilterOptions options = {}) {
  return run_filter(ssm, FilterKind::Single, level, particles, phi, seed, options);
}

template <typename Scalar>
FilterResult cpf_run(const StateSpaceModel<Scalar>& ssm, int level, std::uint64_t particles,
                     const TestFunction<Scalar>& phi, std::uint64_t seed, FilterOptions options = {}) {
  return run_filter(ssm, FilterKind::Coupled, level, particles, phi, seed, options);
}

template <typename Scalar>
FilterResult acpf_run(const StateSpaceModel<Scalar>& ssm, int level, std::uint64_t particles,
                      const TestFunction<Scalar>& phi, std::uint64_t seed, FilterOptions options = {}) {
  return run_filter(ssm, FilterKind::Antithetic, level, particles, phi, seed, options);
}

template <typename Scalar>
FilterResult ammcpf_run(const StateSpaceModel<Scalar>& ssm, int level, std::uint64_t particles,
                        const TestFunction<Scalar>& phi, std::uint64_t seed, FilterOptions options = {}) {
  return run_filter(ssm, FilterKind::TruncatedAntithetic, level, particles, phi, seed, options);
}

// ---------------------------------------------------------------------------
// Multilevel drivers.

enum class MlpfVariant { Mlpf, Amlpf, Ammlpf };

inline const char* to_string(MlpfVariant v) {
  switch (v) {
    case MlpfVariant::Mlpf: return "mlpf";
    case MlpfVariant::Amlpf: return "amlpf";
    case MlpfVariant::Ammlpf: return "ammlpf";
  }
  return "?";
}

/// Filter allocations with Delta_l = obs_interval / 2^l:
///   MLPF          M_l = c eps^-2 Delta_l^{3/4} Delta_L^{-1/4}
///   AMLPF/AMMLPF  M_l = c eps^-2 Delta_l max(L, 1)
/// L = ceil(log2(1/eps) / 2) as in the forward problem.
inline LevelPlan allocate_mlpf(double epsilon, double c, MlpfVariant variant, double obs_interval,
                               int base_level = 0) {
  if (!(c > 0)) throw ArgumentError("allocation constant must be positive");
  LevelPlan plan;
  plan.L = levels_for_epsilon(epsilon);
  plan.base_level = base_level;
  plan.epsilon = epsilon;
  plan.horizon = obs_interval;
  plan.rule = variant == MlpfVariant::Mlpf ? AllocationRule::Mlpf : AllocationRule::Amlpf;
  const double scale = c / (epsilon * epsilon);
  const double finest = plan.delta(plan.L);
  for (int i = 0; i <= plan.L; ++i) {
    const double di = plan.delta(i);
    const double raw = variant == MlpfVariant::Mlpf ? scale * std::pow(di, 0.75) * std::pow(finest, -0.25)
                                                    : scale * di * std::max(plan.L, 1);
    plan.M.push_back(detail::at_least_two(raw));
  }
  plan.validate();
  return plan;
}

struct MlpfReport {
  std::string method;
  std::vector<double> estimate;  // per observation step
  std::vector<FilterResult> levels;
  double step_cost = 0.0;
  double paper_cost = 0.0;
  double wall_seconds = 0.0;
};

/// Level-0 PF plus independent coupled filters on levels 1..L of `plan`
/// (plan.horizon is the observation interval).
template <typename Scalar>
MlpfReport run_mlpf(const StateSpaceModel<Scalar>& ssm, const LevelPlan& plan, const TestFunction<Scalar>& phi,
                    std::uint64_t seed, MlpfVariant variant, FilterOptions options = {}) {
  plan.validate();
  const auto start = std::chrono::steady_clock::now();
  MlpfReport report;
  report.method = to_string(variant);
  const FilterKind coupled = variant == MlpfVariant::Mlpf    ? FilterKind::Coupled
                             : variant == MlpfVariant::Amlpf ? FilterKind::Antithetic
                                                             : FilterKind::TruncatedAntithetic;
  report.estimate.assign(static_cast<std::size_t>(ssm.steps()), 0.0);
  for (int i = 0; i <= plan.L; ++i) {
    const int level = plan.level(i);
    const auto kind = i == 0 ? FilterKind::Single : coupled;
    auto result = run_filter(ssm, kind, level, plan.M[static_cast<std::size_t>(i)], phi,
                             filter_level_seed(seed, level), options);
    for (std::size_t k = 0; k < report.estimate.size(); ++k) report.estimate[k] += result.estimate[k];
    report.step_cost += result.step_cost;
    report.paper_cost += result.paper_cost;
    report.levels.push_back(std::move(result));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// Plain PF wrapped as a report.
template <typename Scalar>
MlpfReport run_pf_report(const StateSpaceModel<Scalar>& ssm, int level, std::uint64_t particles,
                         const TestFunction<Scalar>& phi, std::uint64_t seed, FilterOptions options = {}) {
  const auto start = std::chrono::steady_clock::now();
  MlpfReport report;
  report.method = "pf";
  auto result = pf_run(ssm, level, particles, phi, filter_level_seed(seed, level), options);
  report.estimate = result.estimate;
  report.step_cost = result.step_cost;
  report.paper_cost = result.paper_cost;
  report.levels.push_back(std::move(result));
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic data.

template <typename Scalar>
struct SyntheticData {
  std::vector<Observation> observations;
  std::vector<Vector<Scalar>> latent;  // state at each observation time
};

/// Simulates the latent diffusion with Weak-2 at `level` per observation
/// interval and observes `component` with Gaussian noise of sd `obs_sd`.
template <typename Scalar>
SyntheticData<Scalar> generate_synthetic(const DiffusionModel<Scalar>& model, const Vector<Scalar>& x0,
                                         Scalar obs_interval, int steps, int component, double obs_sd, int level,
                                         std::uint64_t seed) {
  if (steps < 1) throw ArgumentError("synthetic data needs at least one step");
  if (component < 0 || component >= model.dim_total()) throw ArgumentError("observed component out of range");
  SyntheticData<Scalar> data;
  Vector<Scalar> x = x0;
  const std::uint32_t fine = std::uint32_t{1} << level;
  const StreamKey key{derive_seed(seed, 0x53594e54u), 0, 0, 0};
  for (int k = 0; k < steps; ++k) {
    PathOptions opt;
    opt.first_step = static_cast<std::uint32_t>(k) * fine;
    opt.steps = fine;
    x = simulate_terminal(model, SchemeKind::Weak2, x, level, obs_interval, key, opt);
    CounterStream noise(StreamKey{key.seed, 0, static_cast<std::uint32_t>(level), static_cast<std::uint32_t>(k)},
                        StreamTag::Synthetic);
    Observation y(1);
    y(0) = static_cast<double>(x(component)) + obs_sd * noise.normal();
    data.observations.push_back(y);
    data.latent.push_back(x);
  }
  return data;
}

}  // namespace amlmc
