#include "playrec/beta.hpp"

#include <cmath>
#include <string>

#include "playrec/types.hpp"

namespace playrec {

namespace {

constexpr int kMaxFractionTerms = 10000;
constexpr double kFractionEps = 1e-16;
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a, b) (Numerical Recipes' betacf, modified
// Lentz). Converges rapidly for x < (a + 1) / (a + b + 2).
double incomplete_beta_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxFractionTerms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kFractionEps) return h;
  }
  throw NumericalError("beta_cdf: continued fraction did not converge for a=" +
                       std::to_string(a) + " b=" + std::to_string(b) +
                       " x=" + std::to_string(x));
}

}  // namespace

bool BetaParams::valid() const {
  return std::isfinite(alpha) && std::isfinite(beta) && alpha > 0.0 && beta > 0.0;
}

void BetaParams::validate() const {
  if (!valid())
    throw DomainError("invalid Beta shapes (" + std::to_string(alpha) + ", " +
                      std::to_string(beta) + ")");
}

double log_beta_function(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double beta_log_pdf(double x, const BetaParams& params) {
  params.validate();
  if (!(x > 0.0 && x < 1.0))
    throw DomainError("beta_pdf: x=" + std::to_string(x) + " outside (0,1)");
  return (params.alpha - 1.0) * std::log(x) + (params.beta - 1.0) * std::log1p(-x) -
         log_beta_function(params.alpha, params.beta);
}

double beta_pdf(double x, const BetaParams& params) {
  return std::exp(beta_log_pdf(x, params));
}

double beta_cdf(double x, const BetaParams& params) {
  params.validate();
  if (std::isnan(x)) throw DomainError("beta_cdf: x is NaN");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = params.alpha;
  const double b = params.beta;
  const double log_front =
      a * std::log(x) + b * std::log1p(-x) - log_beta_function(a, b);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * incomplete_beta_fraction(a, b, x) / a;
  return 1.0 - front * incomplete_beta_fraction(b, a, 1.0 - x) / b;
}

}  // namespace playrec
