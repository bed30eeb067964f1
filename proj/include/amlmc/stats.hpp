#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "amlmc/errors.hpp"

namespace amlmc {

/// Welford accumulator; `merge` is Chan's parallel update, so accumulators
/// combined in a fixed order give a result independent of how the samples
/// were partitioned across threads.
struct RunningMoments {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const RunningMoments& other) noexcept {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double n1 = static_cast<double>(count);
    const double n2 = static_cast<double>(other.count);
    const double delta = other.mean - mean;
    const double n = n1 + n2;
    mean += delta * n2 / n;
    m2 += other.m2 + delta * delta * n1 * n2 / n;
    count += other.count;
  }

  /// Unbiased sample variance; zero for fewer than two samples.
  double variance() const noexcept { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
  double std_error() const noexcept { return count > 0 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0; }
};

/// Sample covariance of two streams, same merge semantics as RunningMoments.
struct RunningCovariance {
  std::uint64_t count = 0;
  double mean_x = 0.0;
  double mean_y = 0.0;
  double c_xy = 0.0;

  void add(double x, double y) noexcept {
    ++count;
    const double dx = x - mean_x;
    mean_x += dx / static_cast<double>(count);
    mean_y += (y - mean_y) / static_cast<double>(count);
    c_xy += dx * (y - mean_y);
  }

  void merge(const RunningCovariance& other) noexcept {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double n1 = static_cast<double>(count);
    const double n2 = static_cast<double>(other.count);
    const double n = n1 + n2;
    const double dx = other.mean_x - mean_x;
    const double dy = other.mean_y - mean_y;
    c_xy += other.c_xy + dx * dy * n1 * n2 / n;
    mean_x += dx * n2 / n;
    mean_y += dy * n2 / n;
    count += other.count;
  }

  double covariance() const noexcept { return count > 1 ? c_xy / static_cast<double>(count - 1) : 0.0; }
};

/// Ordinary least squares y = slope * x + intercept.
struct LinearFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ArgumentError("fit_line: size mismatch");
  if (x.size() < 2) throw ArgumentError("fit_line: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw ArgumentError("fit_line: x values are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  fit.points = x.size();
  return fit;
}

/// Fit of log(y) against log(x) (natural logs; the slope is base independent).
inline LinearFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw ArgumentError("fit_loglog: values must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return fit_line(lx, ly);
}

}  // namespace amlmc
