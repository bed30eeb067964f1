#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "amlmc/errors.hpp"
#include "amlmc/model.hpp"
#include "amlmc/noise.hpp"
#include "amlmc/rng.hpp"
#include "amlmc/types.hpp"

namespace amlmc {

enum class SchemeKind { EulerMaruyama, MilsteinCommutative, TruncatedMilstein, Weak2 };

inline const char* to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::EulerMaruyama: return "euler";
    case SchemeKind::MilsteinCommutative: return "milstein";
    case SchemeKind::TruncatedMilstein: return "truncated-milstein";
    case SchemeKind::Weak2: return "weak2";
  }
  return "?";
}

/// Finest admissible level; 2^24 steps per path is already far beyond any
/// experiment in this repository.
inline constexpr int kMaxLevel = 24;

inline void check_level(int level) {
  if (level < 0) throw ArgumentError("level must be non-negative");
  if (level > kMaxLevel)
    throw ConfigError("level " + std::to_string(level) + " exceeds the cap " + std::to_string(kMaxLevel));
}

/// Step length at level l for horizon T: T / 2^l.
template <typename Scalar>
Scalar level_delta(Scalar horizon, int level) {
  return std::ldexp(horizon, -level);
}

template <typename Scalar>
Vector<Scalar> euler_step(const DiffusionModel<Scalar>& model, const Vector<Scalar>& x,
                          const HalfStepNoise<Scalar>& noise, Scalar delta) {
  return x + delta * model.drift(x) + model.diffusion(x) * noise.db;
}

/// x + s0 D + sum s_j dB^j + 1/2 sum_{j1,j2>=1} L_j1 s_j2 (dB^j1 dB^j2 - D 1{j1=j2}).
template <typename Scalar>
Vector<Scalar> truncated_milstein_step(const DiffusionModel<Scalar>& model, const Vector<Scalar>& x,
                                       const HalfStepNoise<Scalar>& noise, Scalar delta) {
  const int d = model.brownian_dim();
  Vector<Scalar> next = euler_step(model, x, noise, delta);
  const LieTable<Scalar> lie = model.diffusion_lie_table(x);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      Scalar w = noise.db(i) * noise.db(j);
      if (i == j) w -= delta;
      next += Scalar(0.5) * w * lie.col(i * d + j);
    }
  }
  return next;
}

/// Milstein without Levy area; exact only when the diffusion columns commute.
template <typename Scalar>
Vector<Scalar> milstein_commutative_step(const DiffusionModel<Scalar>& model, const Vector<Scalar>& x,
                                         const HalfStepNoise<Scalar>& noise, Scalar delta) {
  if (!model.commutative())
    throw UsageError("commutative Milstein requested for non-commutative model '" + model.name() + "'");
  return truncated_milstein_step(model, x, noise, delta);
}

/// One step of the weak second-order scheme. `bracket_sign` is +1 on the
/// standard legs and -1 on the antithetic ones; it multiplies only the
/// commutator / auxiliary-area term.
template <typename Scalar>
Vector<Scalar> weak2_step(const DiffusionModel<Scalar>& model, const Vector<Scalar>& x,
                          const HalfStepNoise<Scalar>& noise, const EtaTable<Scalar>& eta, Scalar delta,
                          int bracket_sign = 1) {
  const int d = model.brownian_dim();
  const int fields = d + 1;
  const LieTable<Scalar> lie = model.lie_table(x);
  Vector<Scalar> next = x + delta * model.drift(x) + model.diffusion(x) * noise.db;
  for (int i = 0; i < fields; ++i)
    for (int j = 0; j < fields; ++j) next += eta.eta(i, j) * lie.col(i * fields + j);
  const Scalar half_sign = Scalar(0.5) * Scalar(bracket_sign);
  for (int j1 = 1; j1 <= d; ++j1) {
    for (int j2 = j1 + 1; j2 <= d; ++j2) {
      const Scalar a = eta.a_tilde(j1 - 1, j2 - 1);
      next += half_sign * a * (lie.col(j1 * fields + j2) - lie.col(j2 * fields + j1));
    }
  }
  return next;
}

/// Dispatches one step of `kind`; the Weak-2 eta table is built here.
template <typename Scalar>
Vector<Scalar> scheme_step(const DiffusionModel<Scalar>& model, SchemeKind kind, const Vector<Scalar>& x,
                           const HalfStepNoise<Scalar>& noise, Scalar delta, int bracket_sign = 1) {
  switch (kind) {
    case SchemeKind::EulerMaruyama: return euler_step(model, x, noise, delta);
    case SchemeKind::MilsteinCommutative: return milstein_commutative_step(model, x, noise, delta);
    case SchemeKind::TruncatedMilstein: return truncated_milstein_step(model, x, noise, delta);
    case SchemeKind::Weak2:
      return weak2_step(model, x, noise, build_eta(noise, delta, model.regime()), delta, bracket_sign);
  }
  throw ArgumentError("unknown scheme");
}

template <typename Scalar>
HalfStepNoise<Scalar> draw_step_noise(const DiffusionModel<Scalar>& model, StreamKey key, int level,
                                      std::uint32_t step, Scalar delta, bool mirrored) {
  key.level = static_cast<std::uint32_t>(level);
  key.step = step;
  auto noise = sample_half_step<Scalar>(key, delta, model.regime(), model.brownian_dim());
  return mirrored ? noise.mirrored() : noise;
}

/// Options for single-leg path simulation. `first_step` offsets the step
/// counter (filters continue one path across observation intervals);
/// `mirrored` negates every underlying normal (antithetic-variates pairing).
struct PathOptions {
  std::uint32_t first_step = 0;
  std::uint32_t steps = 0;  // 0 = 2^level
  bool mirrored = false;
};

/// Advances x0 by `steps` steps of size T/2^level, calling visit(k, x_k) at
/// every grid point including the start. Noise for step k comes from the
/// stream (key.seed, key.sample, level, first_step + k).
template <typename Scalar, typename Visitor>
Vector<Scalar> simulate_path_visit(const DiffusionModel<Scalar>& model, SchemeKind kind, const Vector<Scalar>& x0,
                                   int level, Scalar horizon, StreamKey key, Visitor&& visit,
                                   PathOptions options = {}) {
  check_level(level);
  if (!(horizon > Scalar(0))) throw ArgumentError("horizon must be positive");
  const Scalar delta = level_delta(horizon, level);
  const std::uint32_t steps = options.steps == 0 ? (std::uint32_t{1} << level) : options.steps;
  Vector<Scalar> x = x0;
  visit(std::uint32_t{0}, x);
  for (std::uint32_t k = 0; k < steps; ++k) {
    const auto noise = draw_step_noise(model, key, level, options.first_step + k, delta, options.mirrored);
    x = scheme_step(model, kind, x, noise, delta);
    visit(k + 1, x);
  }
  return x;
}

template <typename Scalar>
Vector<Scalar> simulate_terminal(const DiffusionModel<Scalar>& model, SchemeKind kind, const Vector<Scalar>& x0,
                                 int level, Scalar horizon, StreamKey key, PathOptions options = {}) {
  return simulate_path_visit(model, kind, x0, level, horizon, key, [](std::uint32_t, const Vector<Scalar>&) {},
                             options);
}

/// Full trajectory on the grid {k T / 2^level}; 2^level + 1 states.
template <typename Scalar>
std::vector<Vector<Scalar>> simulate_path(const DiffusionModel<Scalar>& model, SchemeKind kind,
                                          const Vector<Scalar>& x0, int level, Scalar horizon, StreamKey key,
                                          PathOptions options = {}) {
  check_level(level);
  std::vector<Vector<Scalar>> path;
  path.reserve((options.steps == 0 ? (std::size_t{1} << level) : options.steps) + 1);
  simulate_path_visit(
      model, kind, x0, level, horizon, key, [&](std::uint32_t, const Vector<Scalar>& x) { path.push_back(x); },
      options);
  return path;
}

/// States of the four antithetic legs:
///   x_bar_f    fine, halves in order, bracket +
///   x_tilde_f  fine, halves swapped, bracket -
///   x_bar_c    coarse, aggregated noise, bracket +
///   x_tilde_c  coarse, same noise, bracket -
template <typename Scalar>
struct AntitheticQuad {
  Vector<Scalar> x_bar_f;
  Vector<Scalar> x_tilde_f;
  Vector<Scalar> x_bar_c;
  Vector<Scalar> x_tilde_c;
  /// Running max over coarse times of ||x_hat_f - x_hat_c||.
  Scalar max_gap = Scalar(0);

  static AntitheticQuad start(const Vector<Scalar>& x0) { return {x0, x0, x0, x0, Scalar(0)}; }

  Vector<Scalar> x_hat_f() const { return Scalar(0.5) * (x_bar_f + x_tilde_f); }
  Vector<Scalar> x_hat_c() const { return Scalar(0.5) * (x_bar_c + x_tilde_c); }
};

/// Advances a quad by `coarse_steps` coarse steps starting at coarse step
/// index `first_coarse_step` of fine level `level` (fine steps 2k, 2k+1).
template <typename Scalar>
void advance_quad(const DiffusionModel<Scalar>& model, AntitheticQuad<Scalar>& quad, int level, Scalar delta_fine,
                  StreamKey key, std::uint32_t first_coarse_step, std::uint32_t coarse_steps) {
  const Regime regime = model.regime();
  const int d = model.brownian_dim();
  const Scalar delta_coarse = Scalar(2) * delta_fine;
  key.level = static_cast<std::uint32_t>(level);
  for (std::uint32_t k = 0; k < coarse_steps; ++k) {
    const auto step = sample_coarse_step<Scalar>(key, first_coarse_step + k, delta_fine, regime, d);
    const auto& a = step.fine_first;
    const auto& b = step.fine_second;
    const auto eta_a = build_eta(a, delta_fine, regime);
    const auto eta_b = build_eta(b, delta_fine, regime);

    quad.x_bar_f = weak2_step(model, quad.x_bar_f, a, eta_a, delta_fine, +1);
    quad.x_bar_f = weak2_step(model, quad.x_bar_f, b, eta_b, delta_fine, +1);
    quad.x_tilde_f = weak2_step(model, quad.x_tilde_f, b, eta_b, delta_fine, -1);
    quad.x_tilde_f = weak2_step(model, quad.x_tilde_f, a, eta_a, delta_fine, -1);

    const auto eta_c = build_eta(step.coarse, delta_coarse, regime);
    quad.x_bar_c = weak2_step(model, quad.x_bar_c, step.coarse, eta_c, delta_coarse, +1);
    quad.x_tilde_c = weak2_step(model, quad.x_tilde_c, step.coarse, eta_c, delta_coarse, -1);

    using std::max;
    quad.max_gap = max(quad.max_gap, (quad.x_hat_f() - quad.x_hat_c()).norm());
  }
}

/// Whole-horizon quad at fine level `level` >= 1.
template <typename Scalar>
AntitheticQuad<Scalar> simulate_antithetic_quad(const DiffusionModel<Scalar>& model, const Vector<Scalar>& x0,
                                                int level, Scalar horizon, StreamKey key) {
  check_level(level);
  if (level == 0) throw UsageError("antithetic quad needs a fine level >= 1");
  auto quad = AntitheticQuad<Scalar>::start(x0);
  advance_quad(model, quad, level, level_delta(horizon, level), key, 0, std::uint32_t{1} << (level - 1));
  return quad;
}

/// Truncated-Milstein antithetic triple: two fine legs and one plain coarse leg.
template <typename Scalar>
struct AntitheticTriple {
  Vector<Scalar> x_bar_f;
  Vector<Scalar> x_tilde_f;
  Vector<Scalar> x_bar_c;

  static AntitheticTriple start(const Vector<Scalar>& x0) { return {x0, x0, x0}; }

  Vector<Scalar> x_hat_f() const { return Scalar(0.5) * (x_bar_f + x_tilde_f); }
};

template <typename Scalar>
void advance_triple_tm(const DiffusionModel<Scalar>& model, AntitheticTriple<Scalar>& triple, int level,
                       Scalar delta_fine, StreamKey key, std::uint32_t first_coarse_step,
                       std::uint32_t coarse_steps) {
  const Regime regime = model.regime();
  const int d = model.brownian_dim();
  key.level = static_cast<std::uint32_t>(level);
  for (std::uint32_t k = 0; k < coarse_steps; ++k) {
    const auto step = sample_coarse_step<Scalar>(key, first_coarse_step + k, delta_fine, regime, d);
    triple.x_bar_f = truncated_milstein_step(model, triple.x_bar_f, step.fine_first, delta_fine);
    triple.x_bar_f = truncated_milstein_step(model, triple.x_bar_f, step.fine_second, delta_fine);
    triple.x_tilde_f = truncated_milstein_step(model, triple.x_tilde_f, step.fine_second, delta_fine);
    triple.x_tilde_f = truncated_milstein_step(model, triple.x_tilde_f, step.fine_first, delta_fine);
    triple.x_bar_c = truncated_milstein_step(model, triple.x_bar_c, step.coarse, Scalar(2) * delta_fine);
  }
}

template <typename Scalar>
AntitheticTriple<Scalar> simulate_antithetic_triple_tm(const DiffusionModel<Scalar>& model,
                                                       const Vector<Scalar>& x0, int level, Scalar horizon,
                                                       StreamKey key) {
  check_level(level);
  if (level == 0) throw UsageError("antithetic triple needs a fine level >= 1");
  auto triple = AntitheticTriple<Scalar>::start(x0);
  advance_triple_tm(model, triple, level, level_delta(horizon, level), key, 0, std::uint32_t{1} << (level - 1));
  return triple;
}

/// Plain two-leg coupling: fine and coarse paths of the same scheme driven
/// by the same Brownian path.
template <typename Scalar>
struct CoupledPair {
  Vector<Scalar> fine;
  Vector<Scalar> coarse;

  static CoupledPair start(const Vector<Scalar>& x0) { return {x0, x0}; }
};

template <typename Scalar>
void advance_pair(const DiffusionModel<Scalar>& model, SchemeKind kind, CoupledPair<Scalar>& pair, int level,
                  Scalar delta_fine, StreamKey key, std::uint32_t first_coarse_step, std::uint32_t coarse_steps) {
  const Regime regime = model.regime();
  const int d = model.brownian_dim();
  key.level = static_cast<std::uint32_t>(level);
  for (std::uint32_t k = 0; k < coarse_steps; ++k) {
    const auto step = sample_coarse_step<Scalar>(key, first_coarse_step + k, delta_fine, regime, d);
    pair.fine = scheme_step(model, kind, pair.fine, step.fine_first, delta_fine);
    pair.fine = scheme_step(model, kind, pair.fine, step.fine_second, delta_fine);
    pair.coarse = scheme_step(model, kind, pair.coarse, step.coarse, Scalar(2) * delta_fine);
  }
}

template <typename Scalar>
CoupledPair<Scalar> simulate_coupled_pair(const DiffusionModel<Scalar>& model, SchemeKind kind,
                                          const Vector<Scalar>& x0, int level, Scalar horizon, StreamKey key) {
  check_level(level);
  if (level == 0) throw UsageError("coupled pair needs a fine level >= 1");
  auto pair = CoupledPair<Scalar>::start(x0);
  advance_pair(model, kind, pair, level, level_delta(horizon, level), key, 0, std::uint32_t{1} << (level - 1));
  return pair;
}

/// Records the legs of a coupled simulation at coarse times and writes
/// them as CSV rows: time,leg,x0,...,x{N-1}.
template <typename Scalar>
class TrajectoryRecorder {
 public:
  void record(Scalar time, const std::string& leg, const Vector<Scalar>& x) { rows_.push_back({time, leg, x}); }

  void record(Scalar time, const AntitheticQuad<Scalar>& quad) {
    record(time, "bar_f", quad.x_bar_f);
    record(time, "tilde_f", quad.x_tilde_f);
    record(time, "bar_c", quad.x_bar_c);
    record(time, "tilde_c", quad.x_tilde_c);
  }

  std::size_t size() const noexcept { return rows_.size(); }

  void write_csv(std::ostream& out) const {
    const int n = rows_.empty() ? 0 : static_cast<int>(rows_.front().x.size());
    out << "time,leg";
    for (int k = 0; k < n; ++k) out << ",x" << k;
    out << '\n';
    const auto old_precision = out.precision(17);
    for (const auto& row : rows_) {
      out << row.time << ',' << row.leg;
      for (int k = 0; k < row.x.size(); ++k) out << ',' << row.x(k);
      out << '\n';
    }
    out.precision(old_precision);
  }

 private:
  struct Row {
    Scalar time;
    std::string leg;
    Vector<Scalar> x;
  };
  std::vector<Row> rows_;
};

/// Quad over [0, T] that also records every coarse time.
template <typename Scalar>
AntitheticQuad<Scalar> simulate_antithetic_quad_recorded(const DiffusionModel<Scalar>& model,
                                                         const Vector<Scalar>& x0, int level, Scalar horizon,
                                                         StreamKey key, TrajectoryRecorder<Scalar>& recorder) {
  check_level(level);
  if (level == 0) throw UsageError("antithetic quad needs a fine level >= 1");
  const Scalar delta_fine = level_delta(horizon, level);
  auto quad = AntitheticQuad<Scalar>::start(x0);
  recorder.record(Scalar(0), quad);
  const std::uint32_t coarse_steps = std::uint32_t{1} << (level - 1);
  for (std::uint32_t k = 0; k < coarse_steps; ++k) {
    advance_quad(model, quad, level, delta_fine, key, k, 1);
    recorder.record(Scalar(2) * delta_fine * Scalar(k + 1), quad);
  }
  return quad;
}

}  // namespace amlmc
