#pragma once

namespace playrec {

/// Shape parameters of a Beta distribution.
struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;

  bool valid() const;
  /// Throws DomainError unless both shapes are finite and positive.
  void validate() const;
  double mean() const { return alpha / (alpha + beta); }

  friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

/// ln B(a, b).
double log_beta_function(double a, double b);

/// Log-density of Beta(alpha, beta) at x in (0, 1).
double beta_log_pdf(double x, const BetaParams& params);

/// Density x^(a-1) (1-x)^(b-1) / B(a, b); x must lie in the open interval.
double beta_pdf(double x, const BetaParams& params);

/// Regularized incomplete beta I_x(a, b), evaluated by a modified Lentz
/// continued fraction on whichever tail converges fastest.
double beta_cdf(double x, const BetaParams& params);

}  // namespace playrec
