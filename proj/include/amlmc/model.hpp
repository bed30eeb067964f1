#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "amlmc/errors.hpp"
#include "amlmc/types.hpp"

namespace amlmc {

/// Elliptic: every coordinate is driven by noise. HypoElliptic: the first
/// `dim_smooth` coordinates carry no noise.
enum class Regime { Elliptic, HypoElliptic };

/// Shape of an SDE dX = s0(X) dt + sum_j s_j(X) dB^j on R^N with d Brownian
/// drivers, where the first N_S rows of every s_j vanish.
struct ModelShape {
  int dim_smooth = 0;
  int dim_rough = 1;
  int brownian_dim = 1;

  int dim_total() const noexcept { return dim_smooth + dim_rough; }
  Regime regime() const noexcept { return dim_smooth == 0 ? Regime::Elliptic : Regime::HypoElliptic; }
};

/// Base class for diffusion models. Vector fields are indexed 0..d with
/// field 0 the drift and field j >= 1 the j-th diffusion column.
///
/// Concrete models implement the raw (unscaled) drift and diffusion columns
/// and, when available, their analytic Jacobians and curvature terms. The
/// defaults fall back to central finite differences with step
/// cbrt(eps) * (1 + |x|). The small-noise parameter mu multiplies every
/// diffusion column and is applied here, never inside concrete models.
///
/// Instances are immutable after construction and may be shared across
/// threads; all coefficient functions must be pure.
template <typename Scalar>
class DiffusionModel {
 public:
  using Vec = Vector<Scalar>;
  using Columns = ColumnMatrix<Scalar>;
  using Jacobian = SquareMatrix<Scalar>;

  DiffusionModel(std::string name, ModelShape shape, Scalar noise_scale = Scalar(1), bool commutative = false)
      : name_(std::move(name)), shape_(shape), noise_scale_(noise_scale), commutative_(commutative) {
    if (shape.dim_smooth < 0 || shape.dim_rough < 1 || shape.brownian_dim < 1)
      throw ArgumentError("model shape requires N_S >= 0, N_R >= 1, d >= 1");
    if (shape.dim_total() > kMaxStateDim || shape.brownian_dim > kMaxBrownianDim)
      throw ArgumentError("model dimension exceeds compiled capacity");
    if (!(noise_scale > Scalar(0)) || noise_scale > Scalar(1)) throw ArgumentError("noise_scale must lie in (0, 1]");
  }

  virtual ~DiffusionModel() = default;

  const std::string& name() const noexcept { return name_; }
  const ModelShape& shape() const noexcept { return shape_; }
  int dim_total() const noexcept { return shape_.dim_total(); }
  int dim_smooth() const noexcept { return shape_.dim_smooth; }
  int dim_rough() const noexcept { return shape_.dim_rough; }
  int brownian_dim() const noexcept { return shape_.brownian_dim; }
  Regime regime() const noexcept { return shape_.regime(); }
  Scalar noise_scale() const noexcept { return noise_scale_; }
  /// Annotation that all diffusion columns commute. Not verified.
  bool commutative() const noexcept { return commutative_ || shape_.brownian_dim == 1; }

  virtual Vec drift(const Vec& x) const = 0;

  /// Unscaled diffusion columns (noise_scale not applied).
  virtual Columns raw_diffusion(const Vec& x) const = 0;

  /// Jacobian of raw field `field` (0 = drift).
  virtual Jacobian raw_jacobian(int field, const Vec& x) const { return fd_jacobian(field, x); }

  /// 1/2 sum_i D^2 f[c_i, c_i] for the raw field f = `field` and raw columns c_i.
  virtual Vec raw_curvature(int field, const Vec& x) const { return fd_curvature(field, x); }

  Vec raw_field(int field, const Vec& x) const {
    if (field == 0) return drift(x);
    return raw_diffusion(x).col(field - 1);
  }

  Columns diffusion(const Vec& x) const { return noise_scale_ * raw_diffusion(x); }

  Vec diffusion_col(int j, const Vec& x) const {
    check_column(j);
    return noise_scale_ * raw_diffusion(x).col(j - 1);
  }

  /// L_i s_j(x) for 0 <= i, j <= d, with L_0 the generator (drift derivative
  /// plus half the second-order term) and L_i the derivative along s_i.
  Vec lie(int i, int j, const Vec& x) const {
    check_field(i);
    check_field(j);
    const Scalar field_scale = j == 0 ? Scalar(1) : noise_scale_;
    const Jacobian jac = raw_jacobian(j, x);
    if (i == 0) {
      return field_scale * (jac * drift(x) + noise_scale_ * noise_scale_ * raw_curvature(j, x));
    }
    return field_scale * noise_scale_ * (jac * raw_diffusion(x).col(i - 1));
  }

  /// Every L_i s_j at once; column i*(d+1)+j. Evaluates each Jacobian once.
  LieTable<Scalar> lie_table(const Vec& x) const {
    const int n = dim_total();
    const int d = brownian_dim();
    const int fields = d + 1;
    LieTable<Scalar> table(n, fields * fields);
    const Vec s0 = drift(x);
    const Columns cols = raw_diffusion(x);
    const Scalar mu = noise_scale_;
    for (int j = 0; j < fields; ++j) {
      const Scalar field_scale = j == 0 ? Scalar(1) : mu;
      const Jacobian jac = raw_jacobian(j, x);
      table.col(j) = field_scale * (jac * s0 + mu * mu * raw_curvature(j, x));
      for (int i = 1; i < fields; ++i) table.col(i * fields + j) = field_scale * mu * (jac * cols.col(i - 1));
    }
    return table;
  }

  /// Only the L_i s_j with i, j >= 1 (Milstein-type terms); column (i-1)*d+(j-1).
  LieTable<Scalar> diffusion_lie_table(const Vec& x) const {
    const int n = dim_total();
    const int d = brownian_dim();
    LieTable<Scalar> table(n, d * d);
    const Columns cols = raw_diffusion(x);
    const Scalar mu2 = noise_scale_ * noise_scale_;
    for (int j = 1; j <= d; ++j) {
      const Jacobian jac = raw_jacobian(j, x);
      for (int i = 1; i <= d; ++i) table.col((i - 1) * d + (j - 1)) = mu2 * (jac * cols.col(i - 1));
    }
    return table;
  }

 protected:
  static Scalar fd_step(Scalar xk) {
    using std::abs;
    using std::cbrt;
    return cbrt(std::numeric_limits<Scalar>::epsilon()) * (Scalar(1) + abs(xk));
  }

  Jacobian fd_jacobian(int field, const Vec& x) const {
    const int n = dim_total();
    Jacobian jac(n, n);
    for (int k = 0; k < n; ++k) {
      const Scalar h = fd_step(x(k));
      Vec xp = x;
      Vec xm = x;
      xp(k) += h;
      xm(k) -= h;
      jac.col(k) = (raw_field(field, xp) - raw_field(field, xm)) / (xp(k) - xm(k));
    }
    return jac;
  }

  Vec fd_curvature(int field, const Vec& x) const {
    using std::sqrt;
    const int n = dim_total();
    const Columns cols = raw_diffusion(x);
    const Vec center = raw_field(field, x);
    Vec acc = Vec::Zero(n);
    // Second difference along each column direction, Richardson-extrapolated.
    // The step keeps every coordinate displacement within root * (1 + |x_k|).
    const Scalar root = sqrt(sqrt(std::numeric_limits<Scalar>::epsilon()));
    auto second = [&](const Vec& dir, Scalar t) {
      return Vec((raw_field(field, x + t * dir) - Scalar(2) * center + raw_field(field, x - t * dir)) / (t * t));
    };
    for (int i = 0; i < cols.cols(); ++i) {
      const Vec dir = cols.col(i);
      Scalar reach(0);
      for (int k = 0; k < n; ++k) {
        using std::abs;
        reach = std::max(reach, Scalar(abs(dir(k)) / (Scalar(1) + abs(x(k)))));
      }
      if (reach == Scalar(0)) continue;
      const Scalar t = root / reach;
      acc += (Scalar(4) * second(dir, t / 2) - second(dir, t)) / Scalar(3);
    }
    return Scalar(0.5) * acc;
  }

 private:
  void check_field(int j) const {
    if (j < 0 || j > brownian_dim()) throw ArgumentError("field index out of range: " + std::to_string(j));
  }
  void check_column(int j) const {
    if (j < 1 || j > brownian_dim()) throw ArgumentError("diffusion column out of range: " + std::to_string(j));
  }

  std::string name_;
  ModelShape shape_;
  Scalar noise_scale_;
  bool commutative_;
};

template <typename Scalar>
using ModelPtr = std::shared_ptr<const DiffusionModel<Scalar>>;

/// [s_j1, s_j2](x) = L_j1 s_j2(x) - L_j2 s_j1(x), 1 <= j1, j2 <= d.
template <typename Scalar>
Vector<Scalar> commutator(const DiffusionModel<Scalar>& model, int j1, int j2, const Vector<Scalar>& x) {
  const int d = model.brownian_dim();
  if (j1 < 1 || j1 > d || j2 < 1 || j2 > d)
    throw ArgumentError("commutator indices must lie in 1..d");
  if (j1 == j2) return Vector<Scalar>::Zero(model.dim_total());
  return model.lie(j1, j2, x) - model.lie(j2, j1, x);
}

/// L_0 s_0(x), the drift-drift term of the second-order schemes.
template <typename Scalar>
Vector<Scalar> lie_drift_drift(const DiffusionModel<Scalar>& model, const Vector<Scalar>& x) {
  return model.lie(0, 0, x);
}

namespace detail {

/// Step along `dir` keeping every coordinate displacement within base * (1 + |x_k|); 0 if dir vanishes.
template <typename Scalar>
Scalar scaled_step(const Vector<Scalar>& dir, const Vector<Scalar>& x, Scalar base) {
  using std::abs;
  Scalar reach(0);
  for (Eigen::Index k = 0; k < x.size(); ++k) reach = std::max(reach, Scalar(abs(dir(k)) / (Scalar(1) + abs(x(k)))));
  return reach == Scalar(0) ? Scalar(0) : base / reach;
}

/// Richardson-extrapolated central first derivative of f along dir.
template <typename Scalar, typename Field>
Vector<Scalar> first_difference(Field&& f, const Vector<Scalar>& x, const Vector<Scalar>& dir, Scalar t) {
  auto d = [&](Scalar h) {
    return Vector<Scalar>((f(Vector<Scalar>(x + h * dir)) - f(Vector<Scalar>(x - h * dir))) / (Scalar(2) * h));
  };
  return (Scalar(4) * d(t / 2) - d(t)) / Scalar(3);
}

/// Richardson-extrapolated second derivative of f along dir.
template <typename Scalar, typename Field>
Vector<Scalar> second_difference(Field&& f, const Vector<Scalar>& x, const Vector<Scalar>& dir, Scalar t,
                                 const Vector<Scalar>& center) {
  auto d = [&](Scalar h) {
    return Vector<Scalar>((f(Vector<Scalar>(x + h * dir)) - Scalar(2) * center + f(Vector<Scalar>(x - h * dir))) /
                          (h * h));
  };
  return (Scalar(4) * d(t / 2) - d(t)) / Scalar(3);
}

}  // namespace detail

/// L_i applied to an arbitrary vector field, by central differences along column i.
template <typename Scalar, typename Field>
Vector<Scalar> apply_lie(const DiffusionModel<Scalar>& model, int i, Field&& target, const Vector<Scalar>& x) {
  if (i < 1 || i > model.brownian_dim()) throw ArgumentError("apply_lie: index must lie in 1..d");
  using std::pow;
  const Vector<Scalar> dir = model.diffusion_col(i, x);
  const Scalar t = detail::scaled_step(dir, x, Scalar(pow(std::numeric_limits<Scalar>::epsilon(), Scalar(0.2))));
  if (t == Scalar(0)) return Vector<Scalar>::Zero(target(x).size());
  return detail::first_difference(target, x, dir, t);
}

/// L_0 applied componentwise to an arbitrary vector field, by central differences.
template <typename Scalar, typename Field>
Vector<Scalar> apply_generator(const DiffusionModel<Scalar>& model, Field&& target, const Vector<Scalar>& x) {
  using std::pow;
  const Vector<Scalar> center = target(x);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  Vector<Scalar> result = Vector<Scalar>::Zero(center.size());
  const Vector<Scalar> s0 = model.drift(x);
  if (const Scalar t = detail::scaled_step(s0, x, Scalar(pow(eps, Scalar(0.2)))); t > Scalar(0))
    result += detail::first_difference(target, x, s0, t);
  const auto cols = model.diffusion(x);
  for (int j = 0; j < cols.cols(); ++j) {
    const Vector<Scalar> dir = cols.col(j);
    if (const Scalar t = detail::scaled_step(dir, x, Scalar(pow(eps, Scalar(1) / 6))); t > Scalar(0))
      result += Scalar(0.5) * detail::second_difference(target, x, dir, t, center);
  }
  return result;
}

/// Payoff / test function phi: R^N -> R with an observable evaluation count.
template <typename Scalar>
class TestFunction {
 public:
  using Fn = std::function<Scalar(const Vector<Scalar>&)>;

  explicit TestFunction(Fn fn, std::string name = "phi") : fn_(std::move(fn)), name_(std::move(name)) {}
  TestFunction(const TestFunction& other) : fn_(other.fn_), name_(other.name_) {}

  Scalar operator()(const Vector<Scalar>& x) const {
    evaluations_.fetch_add(1, std::memory_order_relaxed);
    return fn_(x);
  }

  std::uint64_t evaluations() const noexcept { return evaluations_.load(std::memory_order_relaxed); }
  void reset_count() const noexcept { evaluations_.store(0, std::memory_order_relaxed); }
  const std::string& name() const noexcept { return name_; }

 private:
  Fn fn_;
  std::string name_;
  mutable std::atomic<std::uint64_t> evaluations_{0};
};

template <typename Scalar>
TestFunction<Scalar> coordinate(int k) {
  return TestFunction<Scalar>([k](const Vector<Scalar>& x) { return x(k); }, "x" + std::to_string(k + 1));
}

/// Smooth bounded surrogate of x_k: center + scale * tanh((x_k - center) / scale).
template <typename Scalar>
TestFunction<Scalar> smooth_clip(int k, Scalar center, Scalar scale) {
  return TestFunction<Scalar>(
      [k, center, scale](const Vector<Scalar>& x) {
        using std::tanh;
        return center + scale * tanh((x(k) - center) / scale);
      },
      "clip(x" + std::to_string(k + 1) + ")");
}

template <typename Scalar>
TestFunction<Scalar> constant_payoff(Scalar value) {
  return TestFunction<Scalar>([value](const Vector<Scalar>&) { return value; }, "const");
}

}  // namespace amlmc
