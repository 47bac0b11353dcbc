#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace rvesel {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// P(|Z| <= delta) for a standard normal Z.
inline double gaussian_acceptance(double delta) { return std::erf(delta / std::sqrt(2.0)); }

inline double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Unbiased sample variance (n - 1 denominator).
inline double variance_of(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("variance_of: need at least 2 samples");
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double covariance_of(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("covariance_of: need two equal series, length >= 2");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - mx) * (y[k] - my);
  return s / static_cast<double>(x.size() - 1);
}

inline double skewness_of(std::span<const double> x) {
  const double m = mean_of(x);
  double m2 = 0.0, m3 = 0.0;
  for (double v : x) {
    const double d = v - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(x.size());
  m3 /= static_cast<double>(x.size());
  return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

inline double excess_kurtosis_of(std::span<const double> x) {
  const double m = mean_of(x);
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - m;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(x.size());
  m4 /= static_cast<double>(x.size());
  return m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
}

/// Unbiased variance with one element optionally removed (skip = -1: none).
inline double variance_excluding(std::span<const double> x, int skip) {
  double s = 0.0, s2 = 0.0;
  std::size_t m = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (static_cast<int>(k) == skip) continue;
    s += x[k];
    s2 += x[k] * x[k];
    ++m;
  }
  if (m < 2) throw std::invalid_argument("variance_excluding: need at least 2 samples");
  return (s2 - s * s / static_cast<double>(m)) / static_cast<double>(m - 1);
}

inline double covariance_excluding(std::span<const double> x, std::span<const double> y,
                                   int skip) {
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  std::size_t m = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (static_cast<int>(k) == skip) continue;
    sx += x[k];
    sy += y[k];
    sxy += x[k] * y[k];
    ++m;
  }
  if (m < 2) throw std::invalid_argument("covariance_excluding: need at least 2 samples");
  return (sxy - sx * sy / static_cast<double>(m)) / static_cast<double>(m - 1);
}

/// An estimate with its (jackknife or analytic) standard error.
struct Estimate {
  double value = 0.0;
  double se = 0.0;

  double ci_halfwidth() const { return 1.96 * se; }
  bool ci_excludes_zero() const { return std::abs(value) > ci_halfwidth(); }
};

/// Delete-1 jackknife over n samples: `stat(skip)` evaluates the statistic
/// with sample `skip` removed (skip = -1 means the full sample).
inline Estimate jackknife(int n, const std::function<double(int)>& stat) {
  if (n < 2) throw std::invalid_argument("jackknife: need at least 2 samples");
  Estimate est;
  est.value = stat(-1);
  std::vector<double> loo(static_cast<std::size_t>(n));
  double mean_loo = 0.0;
  for (int i = 0; i < n; ++i) {
    loo[static_cast<std::size_t>(i)] = stat(i);
    mean_loo += loo[static_cast<std::size_t>(i)];
  }
  mean_loo /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : loo) ss += (v - mean_loo) * (v - mean_loo);
  est.se = std::sqrt(ss * static_cast<double>(n - 1) / static_cast<double>(n));
  return est;
}

/// Jackknife for a statistic of two independent samples (e.g. a variance
/// ratio): deletes one observation at a time from either sample.
inline Estimate jackknife_two_sample(int n_first, int n_second,
                                     const std::function<double(int, int)>& stat) {
  if (n_first < 2 || n_second < 2)
    throw std::invalid_argument("jackknife_two_sample: need at least 2 samples each");
  Estimate est;
  est.value = stat(-1, -1);

  double var = 0.0;
  {
    std::vector<double> loo(static_cast<std::size_t>(n_first));
    double m = 0.0;
    for (int i = 0; i < n_first; ++i) {
      loo[static_cast<std::size_t>(i)] = stat(i, -1);
      m += loo[static_cast<std::size_t>(i)];
    }
    m /= static_cast<double>(n_first);
    double ss = 0.0;
    for (double v : loo) ss += (v - m) * (v - m);
    var += ss * static_cast<double>(n_first - 1) / static_cast<double>(n_first);
  }
  {
    std::vector<double> loo(static_cast<std::size_t>(n_second));
    double m = 0.0;
    for (int j = 0; j < n_second; ++j) {
      loo[static_cast<std::size_t>(j)] = stat(-1, j);
      m += loo[static_cast<std::size_t>(j)];
    }
    m /= static_cast<double>(n_second);
    double ss = 0.0;
    for (double v : loo) ss += (v - m) * (v - m);
    var += ss * static_cast<double>(n_second - 1) / static_cast<double>(n_second);
  }
  est.se = std::sqrt(var);
  return est;
}

/// Least-squares slope of y against x.
inline double fit_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_slope: need two equal series, length >= 2");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  return sxy / sxx;
}

}  // namespace rvesel
