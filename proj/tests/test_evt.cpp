#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "spext/error.hpp"
#include "spext/evt.hpp"

using namespace spext::evt;

namespace {

// Simpson's rule on z = s / (1 - s), or on [0, endpoint] for bounded support.
double integrate_density(const GpdParams& p) {
  const int n = 200000;
  const double end = upper_endpoint(p);
  const bool bounded = std::isfinite(end);
  auto f = [&](double s) {
    if (bounded) return std::exp(gpd_logpdf(s * (end - p.u), p)) * (end - p.u);
    if (s >= 1.0) return 0.0;
    const double z = s / (1.0 - s);
    return std::exp(gpd_logpdf(z, p)) / ((1.0 - s) * (1.0 - s));
  };
  double acc = f(0.0) + f(1.0);
  const double h = 1.0 / n;
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return acc * h / 3.0;
}

// Solves zeta * P(Z > z | Z > u) = 1 / (N n_y) for z by bisection.
double return_level_by_bisection(const ReturnSpec& s, const GpdParams& p) {
  const double target = 1.0 / (s.years * s.obs_per_year);
  double lo = p.u, hi = std::isfinite(upper_endpoint(p)) ? upper_endpoint(p) : p.u + 1.0;
  while (!std::isfinite(upper_endpoint(p)) && s.zeta_u * conditional_exceedance(hi, p) > target)
    hi = p.u + 2.0 * (hi - p.u);
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    (s.zeta_u * conditional_exceedance(mid, p) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_SUITE("evt") {

TEST_CASE("gpd density") {
  CHECK(gpd_logpdf(1e-12, {0, 1, 0}) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(gpd_logpdf(2.0, {0, 1, 0.5}) == doctest::Approx(-std::log(8.0)).epsilon(1e-14));
  CHECK(gpd_logpdf(3.0, {0, 1, -0.5}) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(gpd_logpdf(1.0, {0, 0.0, 0.1}), spext::Error);
  CHECK_THROWS_AS(gpd_logpdf(1.0, {0, -1.0, 0.1}), spext::Error);
  const std::vector<double> z = {0.5, 1.0, 1.5};
  const GpdParams p{0, 1.3, 0.2};
  CHECK(gpd_loglik(z, p) == doctest::Approx(gpd_logpdf(0.5, p) + gpd_logpdf(1.0, p) + gpd_logpdf(1.5, p)));
}

TEST_CASE("density integrates to one") {
  for (double xi : {-0.4, -0.1, 0.0, 0.1, 0.5}) {
    CAPTURE(xi);
    CHECK(std::abs(integrate_density({0.0, 1.7, xi}) - 1.0) < 1e-6);
  }
}

TEST_CASE("gpd cdf and quantile") {
  CHECK(gpd_cdf(0.0, {0, 1, 0.3}) == 0.0);
  CHECK(gpd_cdf(2.0, {0, 1, 0.5}) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(gpd_cdf(1.0, {0, 1, 0.0}) == doctest::Approx(0.6321205588285577).epsilon(1e-15));
  CHECK(gpd_cdf(5.0, {0, 1, -0.5}) == 1.0);
  CHECK(gpd_quantile(0.0, {0, 1, 0.5}) == 0.0);
  CHECK(gpd_quantile(0.75, {0, 1, 0.5}) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(gpd_quantile(0.4, {0, 2, 0.0}) == doctest::Approx(-2.0 * std::log(0.6)).epsilon(1e-14));
  CHECK_THROWS_AS(gpd_quantile(1.0, {0, 1, 0.1}), spext::Error);
  CHECK_THROWS_AS(gpd_quantile(-0.1, {0, 1, 0.1}), spext::Error);

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> up(0.0, 0.999), us(0.1, 3.0), ux(-0.45, 0.6);
  for (int i = 0; i < 1000; ++i) {
    const double prob = up(rng);
    const GpdParams p{0.0, us(rng), ux(rng)};
    CHECK(std::abs(gpd_cdf(gpd_quantile(prob, p), p) - prob) <= 1e-12);
    const GpdParams scaled{0.0, 3.0 * p.sigma, p.xi};
    CHECK(gpd_quantile(prob, scaled) == doctest::Approx(3.0 * gpd_quantile(prob, p)).epsilon(1e-14));
  }
}

TEST_CASE("cdf is nondecreasing") {
  for (double xi : {-0.3, 0.0, 0.4}) {
    double prev = 0.0;
    for (int k = 0; k < 500; ++k) {
      const double c = gpd_cdf(0.02 * k, {0, 1, xi});
      CHECK(c >= prev);
      prev = c;
    }
  }
}

TEST_CASE("conditional exceedance") {
  const GpdParams p{2.0, 1.0, 0.5};
  CHECK(conditional_exceedance(2.0, p) == 1.0);
  CHECK(conditional_exceedance(4.0, p) == doctest::Approx(0.25).epsilon(1e-14));
  for (double xi : {-0.3, 0.0, 0.3})
    for (double z = 0.0; z < 3.0; z += 0.1) {
      const GpdParams q{1.0, 0.8, xi};
      CHECK(conditional_exceedance(1.0 + z, q) + gpd_cdf(z, q) == doctest::Approx(1.0).epsilon(1e-14));
    }
  CHECK(upper_endpoint({1.0, 2.0, -0.5}) == doctest::Approx(5.0));
  CHECK(std::isinf(upper_endpoint({1.0, 2.0, 0.1})));
  CHECK(log_conditional_exceedance(10.0, {1.0, 2.0, -0.5}) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("return levels") {
  CHECK(return_level({20, 365, 0.005}, {5, 1, 0}) == doctest::Approx(8.597312260588446).epsilon(1e-13));
  for (double xi : {-0.4, 0.0, 0.3}) CHECK(return_level({1, 100, 0.01}, {5, 1, xi}) == doctest::Approx(5.0).epsilon(1e-15));

  bool clamped = false;
  CHECK(return_level({1, 10, 0.01}, {5, 1, 0.1}, &clamped) == 5.0);
  CHECK(clamped);
  return_level({100, 365.25, 0.005}, {5, 1, 0.1}, &clamped);
  CHECK_FALSE(clamped);
  CHECK_THROWS_AS(return_level({20, 365, 0.005}, {5, 0, 0}), spext::Error);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> un(2.0, 500.0), uz(0.001, 0.05), us(0.3, 2.5), ux(-0.45, 0.45);
  for (int i = 0; i < 300; ++i) {
    const ReturnSpec s{un(rng), 365.25, uz(rng)};
    const GpdParams p{3.0, us(rng), ux(rng)};
    if (s.years * s.obs_per_year * s.zeta_u < 1.0) continue;
    const double z = return_level(s, p);
    CHECK(std::abs(s.zeta_u * conditional_exceedance(z, p) - 1.0 / (s.years * s.obs_per_year)) <= 1e-10);
    CHECK(z == doctest::Approx(return_level_by_bisection(s, p)).epsilon(1e-9));
    if (p.xi < 0) CHECK(z <= upper_endpoint(p));
  }

  double prev = 0.0;
  for (double n = 1.0; n < 2000.0; n *= 1.3) {
    const double z = return_level({n, 365.25, 0.004}, {2, 1, -0.2});
    CHECK(z >= prev);
    prev = z;
  }
}

TEST_CASE("continuity across the exponential branch") {
  const GpdParams e{1.0, 1.4, 0.0}, near{1.0, 1.4, 1e-7};
  for (double z = 0.05; z < 6.0; z += 0.25) {
    CHECK(std::abs(gpd_logpdf(z, near) - gpd_logpdf(z, e)) < 1e-5);
    CHECK(std::abs(gpd_cdf(z, near) - gpd_cdf(z, e)) < 1e-5);
  }
  for (double prob = 0.01; prob < 0.999; prob += 0.05)
    CHECK(std::abs(gpd_quantile(prob, near) - gpd_quantile(prob, e)) < 1e-5);
  for (double n : {5.0, 20.0, 100.0, 1000.0})
    CHECK(std::abs(return_level({n, 365.25, 0.005}, near) - return_level({n, 365.25, 0.005}, e)) < 1e-5);
}

}
