#include <cmath>

#include "doctest.h"
#include "playrec/beta.hpp"
#include "playrec/random.hpp"
#include "playrec/types.hpp"

using namespace playrec;

namespace {

// I_x(a, b) for integer shapes as a binomial tail.
double binomial_cdf_oracle(double x, int a, int b) {
  const int n = a + b - 1;
  double s = 0.0;
  for (int j = a; j <= n; ++j)
    s += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0)) *
         std::pow(x, j) * std::pow(1.0 - x, n - j);
  return s;
}

double trapezoid_mass(const BetaParams& p) {
  const double eps = 1e-6;
  const int n = 10001;
  const double h = (1.0 - 2 * eps) / (n - 1);
  double s = 0.0;
  for (int k = 0; k < n; ++k) {
    const double w = (k == 0 || k == n - 1) ? 0.5 : 1.0;
    s += w * beta_pdf(eps + k * h, p);
  }
  return s * h;
}

// Midpoint rule after x = (1 - cos(pi s)) / 2, which keeps the integrand
// bounded for shapes >= 0.5.
double substituted_mass(const BetaParams& p) {
  const int n = 10000;
  const double pi = std::acos(-1.0);
  double s = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = (k + 0.5) / n;
    const double x = 0.5 * (1.0 - std::cos(pi * t));
    s += beta_pdf(x, p) * 0.5 * pi * std::sin(pi * t);
  }
  return s / n;
}

}  // namespace

TEST_CASE("beta_pdf examples") {
  CHECK(beta_pdf(0.3, {1, 1}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(beta_pdf(0.5, {2, 2}) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(std::exp(log_beta_function(2, 2)) == doctest::Approx(1.0 / 6).epsilon(1e-14));
}

TEST_CASE("beta_pdf rejects points outside the open interval") {
  CHECK_THROWS_AS(beta_pdf(0.0, {2, 2}), DomainError);
  CHECK_THROWS_AS(beta_pdf(1.0, {2, 2}), DomainError);
  CHECK_THROWS_AS(beta_pdf(-0.1, {2, 2}), DomainError);
  CHECK_THROWS_AS(beta_pdf(0.5, {0.0, 2}), DomainError);
}

TEST_CASE("beta_cdf examples") {
  for (double x : {0.01, 0.2, 0.5, 0.93}) CHECK(beta_cdf(x, {1, 1}) == doctest::Approx(x).epsilon(1e-13));
  CHECK(beta_cdf(0.5, {2, 2}) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::fabs(beta_cdf(0.5, {2, 5}) - 57.0 / 64.0) < 1e-14);
}

TEST_CASE("beta_cdf matches the binomial oracle for integer shapes") {
  Rng rng(11);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const int a = 1 + static_cast<int>(uniform_index(rng, 10));
    const int b = 1 + static_cast<int>(uniform_index(rng, 10));
    const double x = 1e-3 + (1 - 2e-3) * uniform01(rng);
    worst = std::max(worst, std::fabs(beta_cdf(x, {double(a), double(b)}) - binomial_cdf_oracle(x, a, b)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("beta_cdf reflection and monotonicity") {
  Rng rng(5);
  for (int k = 0; k < 500; ++k) {
    const double a = 0.2 + 30 * uniform01(rng);
    const double b = 0.2 + 30 * uniform01(rng);
    const double x = uniform01(rng);
    CHECK(std::fabs(beta_cdf(x, {a, b}) - (1.0 - beta_cdf(1.0 - x, {b, a}))) < 1e-10);
    const double y = std::min(1.0, x + 0.01 * uniform01(rng));
    CHECK(beta_cdf(y, {a, b}) >= beta_cdf(x, {a, b}) - 1e-15);
  }
  CHECK(beta_cdf(0.0, {3, 4}) == 0.0);
  CHECK(beta_cdf(1.0, {3, 4}) == 1.0);
}

TEST_CASE("beta_pdf integrates to one (trapezoid, shapes >= 1)") {
  Rng rng(3);
  for (int k = 0; k < 40; ++k) {
    const BetaParams p{1 + 19 * uniform01(rng), 1 + 19 * uniform01(rng)};
    CHECK(std::fabs(trapezoid_mass(p) - 1.0) < 1e-3);
  }
  CHECK(std::fabs(trapezoid_mass({20, 20}) - 1.0) < 1e-3);
  CHECK(std::fabs(trapezoid_mass({1, 1}) - 1.0) < 1e-3);
}

TEST_CASE("beta_pdf integrates to one (substituted midpoint, shapes >= 0.5)") {
  Rng rng(4);
  for (int k = 0; k < 40; ++k) {
    const BetaParams p{0.5 + 19.5 * uniform01(rng), 0.5 + 19.5 * uniform01(rng)};
    CHECK(std::fabs(substituted_mass(p) - 1.0) < 1e-3);
  }
  for (BetaParams p : {BetaParams{0.5, 0.5}, BetaParams{0.5, 20}, BetaParams{20, 0.5}})
    CHECK(std::fabs(substituted_mass(p) - 1.0) < 1e-3);
}
