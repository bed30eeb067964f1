#pragma once

#include <cmath>

#include "amlmc/errors.hpp"
#include "amlmc/model.hpp"
#include "amlmc/rng.hpp"
#include "amlmc/types.hpp"

namespace amlmc {

/// All random variables of one step of length delta.
///   db        Brownian increments, N(0, delta I_d)
///   db_tilde  increments of the independent auxiliary motion (components 2..d)
///   time_int  I_j = int (B_s^j - B_start^j) ds; zero in the elliptic regime
template <typename Scalar>
struct HalfStepNoise {
  NoiseVector<Scalar> db;
  NoiseVector<Scalar> db_tilde;
  NoiseVector<Scalar> time_int;

  static HalfStepNoise zero(int d) {
    return {NoiseVector<Scalar>::Zero(d), NoiseVector<Scalar>::Zero(d - 1), NoiseVector<Scalar>::Zero(d)};
  }

  /// The same draw with every underlying normal negated (equal in law).
  HalfStepNoise mirrored() const { return {-db, -db_tilde, -time_int}; }

  friend bool operator==(const HalfStepNoise& a, const HalfStepNoise& b) {
    return a.db == b.db && a.db_tilde == b.db_tilde && a.time_int == b.time_int;
  }
};

/// Noise for one coarse step: its two fine halves and the coarse aggregate.
template <typename Scalar>
struct CoarseStepNoise {
  HalfStepNoise<Scalar> fine_first;
  HalfStepNoise<Scalar> fine_second;
  HalfStepNoise<Scalar> coarse;
  Scalar delta_fine{};

  friend bool operator==(const CoarseStepNoise& a, const CoarseStepNoise& b) {
    return a.fine_first == b.fine_first && a.fine_second == b.fine_second && a.coarse == b.coarse &&
           a.delta_fine == b.delta_fine;
  }
};

/// eta(j1, j2) for 0 <= j1, j2 <= d (index 0 is time) and
/// a_tilde(j1-1, j2-1) = dB^j1 * dB~^j2 for 1 <= j1 < j2 <= d.
template <typename Scalar>
struct EtaTable {
  FieldPairMatrix<Scalar> eta;
  FieldPairMatrix<Scalar> a_tilde;
};

/// Draws one step of noise from any source of standard normals. The time
/// integral uses the conditional decomposition
///   I = (delta/2) dB + delta^{3/2}/sqrt(12) xi,  xi independent of dB,
/// which realizes the exact joint covariance [[D, D^2/2], [D^2/2, D^3/3]].
template <typename Scalar, typename BrownianSource, typename AuxSource, typename IntegralSource>
HalfStepNoise<Scalar> sample_half_step(BrownianSource&& brownian, AuxSource&& auxiliary, IntegralSource&& integral,
                                       Scalar delta, Regime regime, int d) {
  using std::sqrt;
  if (!(delta > Scalar(0))) throw ArgumentError("sample_half_step: delta must be positive");
  const Scalar sd = sqrt(delta);
  HalfStepNoise<Scalar> out = HalfStepNoise<Scalar>::zero(d);
  for (int j = 0; j < d; ++j) out.db(j) = sd * Scalar(brownian());
  for (int j = 0; j < d - 1; ++j) out.db_tilde(j) = sd * Scalar(auxiliary());
  if (regime == Regime::HypoElliptic) {
    const Scalar cond_sd = delta * sd / sqrt(Scalar(12));
    for (int j = 0; j < d; ++j) out.time_int(j) = Scalar(0.5) * delta * out.db(j) + cond_sd * Scalar(integral());
  }
  return out;
}

/// Counter-stream version: the key identifies (seed, sample, level, fine step).
template <typename Scalar>
HalfStepNoise<Scalar> sample_half_step(const StreamKey& key, Scalar delta, Regime regime, int d) {
  CounterStream brownian(key, StreamTag::Brownian);
  CounterStream auxiliary(key, StreamTag::Auxiliary);
  CounterStream integral(key, StreamTag::TimeIntegral);
  return sample_half_step<Scalar>([&] { return brownian.normal(); }, [&] { return auxiliary.normal(); },
                                  [&] { return integral.normal(); }, delta, regime, d);
}

/// Coarse-interval variables from two consecutive fine halves of length
/// delta_fine; time integrals pick up the first half's increment over the
/// second half.
template <typename Scalar>
HalfStepNoise<Scalar> aggregate_coarse(const HalfStepNoise<Scalar>& first, const HalfStepNoise<Scalar>& second,
                                       Scalar delta_fine) {
  return {first.db + second.db, first.db_tilde + second.db_tilde,
          first.time_int + second.time_int + delta_fine * first.db};
}

template <typename Scalar>
CoarseStepNoise<Scalar> make_coarse_step(const HalfStepNoise<Scalar>& first, const HalfStepNoise<Scalar>& second,
                                         Scalar delta_fine) {
  return {first, second, aggregate_coarse(first, second, delta_fine), delta_fine};
}

/// Draws coarse step k at fine level `key.level`: fine steps 2k and 2k+1.
template <typename Scalar>
CoarseStepNoise<Scalar> sample_coarse_step(StreamKey key, std::uint32_t coarse_step, Scalar delta_fine, Regime regime,
                                           int d) {
  key.step = 2 * coarse_step;
  const auto first = sample_half_step<Scalar>(key, delta_fine, regime, d);
  key.step = 2 * coarse_step + 1;
  const auto second = sample_half_step<Scalar>(key, delta_fine, regime, d);
  return make_coarse_step(first, second, delta_fine);
}

/// Exchanges the two fine halves and re-aggregates. db and db_tilde of the
/// aggregate are unchanged; the time integral generally is not.
template <typename Scalar>
CoarseStepNoise<Scalar> swap_fine_halves(const CoarseStepNoise<Scalar>& step) {
  return make_coarse_step(step.fine_second, step.fine_first, step.delta_fine);
}

/// Second-order noise functionals of one step, per regime:
///   elliptic      eta(j1,j2) = (dB^j1 dB^j2 - delta 1{j1=j2!=0}) / 2, with dB^0 = delta
///   hypo-elliptic eta(0,j) = delta dB^j - I_j, eta(j,0) = I_j; other entries as elliptic
template <typename Scalar>
EtaTable<Scalar> build_eta(const HalfStepNoise<Scalar>& noise, Scalar delta, Regime regime) {
  const int d = static_cast<int>(noise.db.size());
  EtaTable<Scalar> table;
  table.eta.resize(d + 1, d + 1);
  auto increment = [&](int j) { return j == 0 ? delta : noise.db(j - 1); };
  for (int j1 = 0; j1 <= d; ++j1) {
    for (int j2 = 0; j2 <= d; ++j2) {
      Scalar value = increment(j1) * increment(j2);
      if (j1 == j2 && j1 != 0) value -= delta;
      table.eta(j1, j2) = Scalar(0.5) * value;
    }
  }
  if (regime == Regime::HypoElliptic) {
    for (int j = 1; j <= d; ++j) {
      table.eta(j, 0) = noise.time_int(j - 1);
      table.eta(0, j) = delta * noise.db(j - 1) - noise.time_int(j - 1);
    }
  }
  table.a_tilde = FieldPairMatrix<Scalar>::Zero(d, d);
  for (int j1 = 1; j1 <= d; ++j1)
    for (int j2 = j1 + 1; j2 <= d; ++j2) table.a_tilde(j1 - 1, j2 - 1) = noise.db(j1 - 1) * noise.db_tilde(j2 - 2);
  return table;
}

}  // namespace amlmc
