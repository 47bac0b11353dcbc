#include <catch2/catch_amalgamated.hpp>

#include "rvesel/rng.hpp"
#include "rvesel/stats.hpp"

using namespace rvesel;

TEST_CASE("moments agree with hand values") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  CHECK(mean_of(x) == Catch::Approx(2.5));
  CHECK(variance_of(x) == Catch::Approx(5.0 / 3.0));
  const std::vector<double> y{2.0, 4.0, 6.0, 8.0};
  CHECK(covariance_of(x, y) == Catch::Approx(10.0 / 3.0));
  CHECK(variance_excluding(x, 0) == Catch::Approx(1.0));
  CHECK(covariance_excluding(x, y, 3) == Catch::Approx(2.0));
}

TEST_CASE("normal cdf and the Gaussian acceptance prediction") {
  CHECK(normal_cdf(0.0) == Catch::Approx(0.5));
  CHECK(normal_cdf(1.959963985) == Catch::Approx(0.975).margin(1e-6));
  CHECK(gaussian_acceptance(0.5) == Catch::Approx(0.382924922548026).margin(1e-12));
  CHECK(gaussian_acceptance(1.0) == Catch::Approx(0.682689492137086).margin(1e-12));
  CHECK(gaussian_acceptance(0.25) == Catch::Approx(0.197412).margin(1e-5));
}

TEST_CASE("jackknife of the mean reproduces the classical standard error") {
  CounterRng rng({10, 1}, 0);
  std::vector<double> x(200);
  for (double& v : x) v = rng.normal() * 2.0 + 1.0;
  const Estimate est = jackknife(static_cast<int>(x.size()), [&](int skip) {
    double s = 0.0;
    int m = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (static_cast<int>(k) == skip) continue;
      s += x[k];
      ++m;
    }
    return s / m;
  });
  const double classical = std::sqrt(variance_of(x) / static_cast<double>(x.size()));
  CHECK(est.value == Catch::Approx(mean_of(x)));
  CHECK(est.se == Catch::Approx(classical).epsilon(1e-10));
}

TEST_CASE("jackknife variance se roughly matches the Gaussian formula") {
  CounterRng rng({12, 5}, 0);
  const int n = 4000;
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  const Estimate est =
      jackknife(n, [&](int skip) { return variance_excluding(x, skip); });
  // For Gaussians, sd(s^2) = s^2 sqrt(2/(n-1)).
  const double predicted = est.value * std::sqrt(2.0 / (n - 1.0));
  CHECK(est.se == Catch::Approx(predicted).epsilon(0.2));
}

TEST_CASE("two-sample jackknife of a variance ratio") {
  CounterRng rng({13, 2}, 0);
  const int n = 3000;
  std::vector<double> x(n), y(n);
  for (double& v : x) v = rng.normal() * 2.0;
  for (double& v : y) v = rng.normal();
  const Estimate est = jackknife_two_sample(n, n, [&](int skip_x, int skip_y) {
    return variance_excluding(y, skip_y) / variance_excluding(x, skip_x);
  });
  CHECK(est.value == Catch::Approx(0.25).margin(0.03));
  // Relative sd of a Gaussian variance ratio: sqrt(2/n + 2/n).
  CHECK(est.se == Catch::Approx(est.value * std::sqrt(4.0 / n)).epsilon(0.25));
  CHECK(est.ci_excludes_zero());
}

TEST_CASE("fit_slope recovers an exact line") {
  const std::vector<double> x{1.0, 2.0, 3.0, 5.0};
  std::vector<double> y;
  for (double v : x) y.push_back(-2.0 * v + 0.7);
  CHECK(fit_slope(x, y) == Catch::Approx(-2.0).margin(1e-13));
}

TEST_CASE("skewness and kurtosis vanish for symmetric two-point data") {
  const std::vector<double> x{-1.0, 1.0, -1.0, 1.0};
  CHECK(skewness_of(x) == Catch::Approx(0.0).margin(1e-14));
  CHECK(excess_kurtosis_of(x) == Catch::Approx(-2.0).margin(1e-12));
}
