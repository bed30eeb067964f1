#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "amlmc/errors.hpp"
#include "amlmc/model.hpp"
#include "amlmc/types.hpp"

namespace amlmc {

// ---------------------------------------------------------------------------
// Stochastic FitzHugh-Nagumo. Coordinate 1 is smooth (no noise), coordinate
// 2 carries the noise:
//   dX1 = (X1 - X1^3 - X2 - s) / eps dt
//   dX2 = (gamma X1 - X2 + beta) dt + sigma dB

struct FhnParams {
  double epsilon = 0.1;
  double sigma = 0.3;
  double gamma = 1.5;
  double beta = 0.3;
  double s = 0.01;
  double x1 = 0.0;
  double x2 = 0.0;
  double horizon = 100.0;
};

template <typename Scalar>
class FhnModel final : public DiffusionModel<Scalar> {
 public:
  using Base = DiffusionModel<Scalar>;
  using typename Base::Columns;
  using typename Base::Jacobian;
  using typename Base::Vec;

  FhnModel(const FhnParams& p, Scalar noise_scale)
      : Base("fhn", ModelShape{1, 1, 1}, noise_scale),
        eps_(p.epsilon), sigma_(p.sigma), gamma_(p.gamma), beta_(p.beta), s_(p.s) {
    if (!(p.epsilon > 0) || !(p.sigma > 0)) throw ArgumentError("fhn: epsilon and sigma must be positive");
  }

  Vec drift(const Vec& x) const override {
    Vec out(2);
    out << (x(0) - x(0) * x(0) * x(0) - x(1) - s_) / eps_, gamma_ * x(0) - x(1) + beta_;
    return out;
  }

  Columns raw_diffusion(const Vec&) const override {
    Columns out(2, 1);
    out << Scalar(0), sigma_;
    return out;
  }

  Jacobian raw_jacobian(int field, const Vec& x) const override {
    Jacobian jac = Jacobian::Zero(2, 2);
    if (field == 0) jac << (Scalar(1) - Scalar(3) * x(0) * x(0)) / eps_, Scalar(-1) / eps_, gamma_, Scalar(-1);
    return jac;
  }

  // The only non-linear term depends on x1, which the noise never moves.
  Vec raw_curvature(int, const Vec&) const override { return Vec::Zero(2); }

 private:
  Scalar eps_, sigma_, gamma_, beta_, s_;
};

template <typename Scalar = double>
ModelPtr<Scalar> build_fhn(const FhnParams& params, Scalar noise_scale = Scalar(1)) {
  auto model = std::make_shared<FhnModel<Scalar>>(params, noise_scale);
  if (model->regime() != Regime::HypoElliptic) throw ArgumentError("fhn must be hypo-elliptic");
  return model;
}

// ---------------------------------------------------------------------------
// Heston with full truncation: every sqrt(v) is sqrt(max(v, 0)), and the
// v-derivatives of the diffusion are taken as zero where v <= 0.
//   dS = r S dt + sqrt(v) S dB1
//   dv = alpha (theta - v) dt + mu sqrt(v) (rho dB1 + sqrt(1 - rho^2) dB2)

struct HestonParams {
  double r = 0.04;
  double alpha = 2.0;
  double theta = 0.09;
  double mu = 0.1;
  double rho = 0.7;
  double s0 = 100.0;
  double v0 = 0.09;
  double horizon = 1.0;
};

template <typename Scalar>
class HestonModel final : public DiffusionModel<Scalar> {
 public:
  using Base = DiffusionModel<Scalar>;
  using typename Base::Columns;
  using typename Base::Jacobian;
  using typename Base::Vec;

  HestonModel(const HestonParams& p, Scalar noise_scale)
      : Base("heston", ModelShape{0, 2, 2}, noise_scale),
        r_(p.r), alpha_(p.alpha), theta_(p.theta), mu_(p.mu), rho_(p.rho) {
    using std::sqrt;
    if (!(std::abs(p.rho) < 1)) throw ArgumentError("heston: |rho| must be < 1");
    if (!(p.mu > 0)) throw ArgumentError("heston: mu must be positive");
    if (p.v0 < 0) throw ArgumentError("heston: v0 must be non-negative");
    rho_bar_ = sqrt(Scalar(1) - rho_ * rho_);
  }

  Vec drift(const Vec& x) const override {
    Vec out(2);
    out << r_ * x(0), alpha_ * (theta_ - x(1));
    return out;
  }

  Columns raw_diffusion(const Vec& x) const override {
    const Scalar sv = root(x(1));
    Columns out(2, 2);
    out << sv * x(0), Scalar(0), mu_ * rho_ * sv, mu_ * rho_bar_ * sv;
    return out;
  }

  Jacobian raw_jacobian(int field, const Vec& x) const override {
    Jacobian jac = Jacobian::Zero(2, 2);
    const Scalar sv = root(x(1));
    const Scalar inv = sv > Scalar(0) ? Scalar(0.5) / sv : Scalar(0);  // d sqrt(v) / dv
    switch (field) {
      case 0: jac << r_, Scalar(0), Scalar(0), -alpha_; break;
      case 1: jac << sv, x(0) * inv, Scalar(0), mu_ * rho_ * inv; break;
      case 2: jac << Scalar(0), Scalar(0), Scalar(0), mu_ * rho_bar_ * inv; break;
      default: throw ArgumentError("heston: field index out of range");
    }
    return jac;
  }

  Vec raw_curvature(int field, const Vec& x) const override {
    Vec out = Vec::Zero(2);
    const Scalar sv = root(x(1));
    if (field == 0 || sv == Scalar(0)) return out;
    const Scalar mu2 = mu_ * mu_;
    if (field == 1) {
      out(0) = Scalar(0.5) * (mu_ * rho_ * x(0) * sv - mu2 * x(0) / (Scalar(4) * sv));
      out(1) = -mu2 * mu_ * rho_ / (Scalar(8) * sv);
    } else {
      out(1) = -mu2 * mu_ * rho_bar_ / (Scalar(8) * sv);
    }
    return out;
  }

 private:
  static Scalar root(Scalar v) {
    using std::sqrt;
    return v > Scalar(0) ? sqrt(v) : Scalar(0);
  }

  Scalar r_, alpha_, theta_, mu_, rho_, rho_bar_{};
};

template <typename Scalar = double>
ModelPtr<Scalar> build_heston(const HestonParams& params, Scalar noise_scale = Scalar(1)) {
  auto model = std::make_shared<HestonModel<Scalar>>(params, noise_scale);
  if (model->regime() != Regime::Elliptic) throw ArgumentError("heston must be elliptic");
  return model;
}

// ---------------------------------------------------------------------------
// Linear SDE dX = A X dt + sum_j (B_j X + c_j) dB^j. With every B_j = 0 this is
// Ornstein-Uhlenbeck and the Gaussian transition is available in closed form.

template <typename Scalar>
class LinearSdeModel final : public DiffusionModel<Scalar> {
 public:
  using Base = DiffusionModel<Scalar>;
  using typename Base::Columns;
  using typename Base::Jacobian;
  using typename Base::Vec;
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  LinearSdeModel(std::string name, Dense a, std::vector<Dense> b, Dense c, Scalar noise_scale, bool commutative)
      : Base(std::move(name), ModelShape{0, static_cast<int>(a.rows()), static_cast<int>(c.cols())}, noise_scale,
             commutative),
        a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {
    const auto n = a_.rows();
    if (a_.cols() != n || c_.rows() != n || static_cast<Eigen::Index>(b_.size()) != c_.cols())
      throw ArgumentError("linear model: dimension mismatch");
    for (const auto& bj : b_)
      if (bj.rows() != n || bj.cols() != n) throw ArgumentError("linear model: B_j must be N x N");
  }

  Vec drift(const Vec& x) const override { return a_ * x; }

  Columns raw_diffusion(const Vec& x) const override {
    Columns out = c_;
    for (std::size_t j = 0; j < b_.size(); ++j) out.col(static_cast<Eigen::Index>(j)) += b_[j] * x;
    return out;
  }

  Jacobian raw_jacobian(int field, const Vec&) const override {
    if (field == 0) return a_;
    return b_.at(static_cast<std::size_t>(field - 1));
  }

  Vec raw_curvature(int, const Vec&) const override { return Vec::Zero(a_.rows()); }

  const Dense& a() const noexcept { return a_; }
  const Dense& c() const noexcept { return c_; }
  const std::vector<Dense>& b() const noexcept { return b_; }
  bool additive() const {
    for (const auto& bj : b_)
      if (!bj.isZero(0)) return false;
    return true;
  }

 private:
  Dense a_;
  std::vector<Dense> b_;
  Dense c_;
};

/// Exact Gaussian transition of dX = A X dt + S dB over one step h:
///   X' = F X + Z,  Z ~ N(0, Q),  Cov(Z, dB) = K.
/// `sample_joint` draws (dB, Z) together so a scheme driven by the same dB is
/// pathwise coupled to the exact solution.
template <typename Scalar>
struct OuTransition {
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using DenseVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar step{};
  Dense F;
  Dense Q;
  Dense K;
  Dense joint_factor;  // lower Cholesky factor of Cov((dB, Z))

  OuTransition(const Dense& a, const Dense& s, Scalar h) : step(h) {
    const auto n = a.rows();
    const auto d = s.cols();
    // Van Loan: exp([[-A, S S^T], [0, A^T]] h) = [[., G], [0, H]]; F = H^T, Q = F G.
    Dense van_loan = Dense::Zero(2 * n, 2 * n);
    van_loan.topLeftCorner(n, n) = -a;
    van_loan.topRightCorner(n, n) = s * s.transpose();
    van_loan.bottomRightCorner(n, n) = a.transpose();
    const Dense e = (van_loan * h).exp();
    F = e.bottomRightCorner(n, n).transpose();
    Q = F * e.topRightCorner(n, n);
    Q = Scalar(0.5) * (Q + Q.transpose()).eval();
    // int_0^h exp(A u) du from exp([[A, I], [0, 0]] h).
    Dense aug = Dense::Zero(2 * n, 2 * n);
    aug.topLeftCorner(n, n) = a;
    aug.topRightCorner(n, n) = Dense::Identity(n, n);
    const Dense phi = (aug * h).exp().topRightCorner(n, n);
    K = phi * s;
    Dense joint(d + n, d + n);
    joint.topLeftCorner(d, d) = h * Dense::Identity(d, d);
    joint.topRightCorner(d, n) = K.transpose();
    joint.bottomLeftCorner(n, d) = K;
    joint.bottomRightCorner(n, n) = Q;
    Eigen::LLT<Dense> llt(joint);
    if (llt.info() != Eigen::Success) throw ArgumentError("OU transition: joint covariance not positive definite");
    joint_factor = llt.matrixL();
  }

  /// Given d + n standard normals, returns (dB, Z) stacked.
  DenseVec sample_joint(const DenseVec& normals) const { return joint_factor * normals; }
};

template <typename Scalar = double>
std::shared_ptr<const LinearSdeModel<Scalar>> build_linear_ou(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& sigma, Scalar noise_scale = Scalar(1)) {
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.rows() != a.cols() || sigma.rows() != a.rows()) throw ArgumentError("linear-ou: dimension mismatch");
  std::vector<Dense> b(static_cast<std::size_t>(sigma.cols()), Dense::Zero(a.rows(), a.rows()));
  return std::make_shared<LinearSdeModel<Scalar>>("linear-ou", a, std::move(b), sigma, noise_scale, true);
}

/// E[X_T] = exp(A T) x0 for any linear model with zero-mean noise.
template <typename Scalar>
Vector<Scalar> linear_mean(const LinearSdeModel<Scalar>& model, const Vector<Scalar>& x0, Scalar horizon) {
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Dense e = (model.a() * horizon).exp();
  return e * x0;
}

/// Two-dimensional linear model with non-commuting noise:
///   B1 = [[s, 0], [0, 0]], B2 = [[0, s], [s, 0]], drift A = a I.
template <typename Scalar = double>
std::shared_ptr<const LinearSdeModel<Scalar>> build_gbm_2d(Scalar drift_rate = Scalar(0.05),
                                                           Scalar vol = Scalar(0.4),
                                                           Scalar noise_scale = Scalar(1)) {
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Dense a = drift_rate * Dense::Identity(2, 2);
  Dense b1 = Dense::Zero(2, 2);
  b1(0, 0) = vol;
  Dense b2 = Dense::Zero(2, 2);
  b2(0, 1) = vol;
  b2(1, 0) = vol;
  return std::make_shared<LinearSdeModel<Scalar>>("gbm-2d", a, std::vector<Dense>{b1, b2}, Dense::Zero(2, 2),
                                                  noise_scale, false);
}

/// dX = r X dt + v X dB on the line.
template <typename Scalar = double>
std::shared_ptr<const LinearSdeModel<Scalar>> build_gbm_1d(Scalar rate, Scalar vol, Scalar noise_scale = Scalar(1)) {
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  return std::make_shared<LinearSdeModel<Scalar>>("gbm-1d", Dense::Constant(1, 1, rate),
                                                  std::vector<Dense>{Dense::Constant(1, 1, vol)},
                                                  Dense::Zero(1, 1), noise_scale, true);
}

// ---------------------------------------------------------------------------
// Registry. Parameters come from flat key=value maps; unknown keys are
// rejected so typos in config files do not pass silently.

using ParamMap = std::map<std::string, double>;

/// A registered model plus the problem data that travels with it.
struct BundledModel {
  ModelPtr<double> model;
  Vector<double> x0;
  double horizon = 1.0;
  double obs_interval = 1.0;
  double obs_sd = 1.0;
  int observed = 0;  // coordinate observed with Gaussian noise and used as payoff
};

namespace detail {

inline double take(ParamMap& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  const double value = it->second;
  params.erase(it);
  return value;
}

inline void reject_leftovers(const std::string& model, const ParamMap& params) {
  if (!params.empty()) throw ConfigError("unknown parameter '" + params.begin()->first + "' for model " + model);
}

}  // namespace detail

inline BundledModel make_model(const std::string& name, ParamMap params = {}) {
  using detail::take;
  BundledModel out;
  const double noise_scale = take(params, "noise_scale", 1.0);
  if (name == "fhn") {
    FhnParams p;
    p.epsilon = take(params, "epsilon", p.epsilon);
    p.sigma = take(params, "sigma", p.sigma);
    p.gamma = take(params, "gamma", p.gamma);
    p.beta = take(params, "beta", p.beta);
    p.s = take(params, "s", p.s);
    p.x1 = take(params, "x1", p.x1);
    p.x2 = take(params, "x2", p.x2);
    p.horizon = take(params, "T", p.horizon);
    out.obs_interval = take(params, "obs_interval", 1.0);
    out.obs_sd = take(params, "obs_sd", 0.1);
    detail::reject_leftovers(name, params);
    out.model = build_fhn<double>(p, noise_scale);
    out.x0 = Vector<double>(2);
    out.x0 << p.x1, p.x2;
    out.horizon = p.horizon;
  } else if (name == "heston") {
    HestonParams p;
    p.r = take(params, "r", p.r);
    p.alpha = take(params, "alpha", p.alpha);
    p.theta = take(params, "theta", p.theta);
    p.mu = take(params, "mu", p.mu);
    p.rho = take(params, "rho", p.rho);
    p.s0 = take(params, "s0", p.s0);
    p.v0 = take(params, "v0", p.v0);
    p.horizon = take(params, "T", p.horizon);
    out.obs_interval = take(params, "obs_interval", 0.01);
    out.obs_sd = take(params, "obs_sd", 2.0);
    detail::reject_leftovers(name, params);
    out.model = build_heston<double>(p, noise_scale);
    out.x0 = Vector<double>(2);
    out.x0 << p.s0, p.v0;
    out.horizon = p.horizon;
  } else if (name == "linear-ou") {
    const int dim = static_cast<int>(take(params, "dim", 1));
    if (dim < 1 || dim > 2) throw ConfigError("linear-ou: dim must be 1 or 2");
    Eigen::MatrixXd a = take(params, "a", -1.0) * Eigen::MatrixXd::Identity(dim, dim);
    if (dim == 2) a(0, 1) = take(params, "a12", 0.5);
    const Eigen::MatrixXd sigma = take(params, "sigma", 1.0) * Eigen::MatrixXd::Identity(dim, dim);
    const double x0 = take(params, "x0", 1.0);
    out.horizon = take(params, "T", 1.0);
    out.obs_interval = take(params, "obs_interval", 1.0);
    out.obs_sd = take(params, "obs_sd", 0.5);
    detail::reject_leftovers(name, params);
    out.model = build_linear_ou<double>(a, sigma, noise_scale);
    out.x0 = Vector<double>::Constant(dim, x0);
  } else if (name == "gbm-2d") {
    const double rate = take(params, "a", 0.05);
    const double vol = take(params, "vol", 0.4);
    out.horizon = take(params, "T", 1.0);
    out.obs_interval = take(params, "obs_interval", 0.1);
    out.obs_sd = take(params, "obs_sd", 0.2);
    const double x0 = take(params, "x0", 1.0);
    detail::reject_leftovers(name, params);
    out.model = build_gbm_2d<double>(rate, vol, noise_scale);
    out.x0 = Vector<double>::Constant(2, x0);
  } else {
    throw ConfigError("unknown model '" + name + "' (expected fhn, heston, linear-ou, gbm-2d)");
  }
  return out;
}

}  // namespace amlmc
