#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "playrec/beta.hpp"
#include "playrec/dataio.hpp"

namespace playrec {

/// Two-component Beta mixture: pi * Beta(strong) + (1 - pi) * Beta(weak).
struct DualBetaModel {
  double pi = 0.5;
  BetaParams strong;
  BetaParams weak;

  double log_pdf(double x) const;
  double pdf(double x) const;
  double cdf(double x) const;
  /// Posterior probability that x was drawn from the strong component.
  double posterior_strong(double x) const;
};

struct EmConfig {
  enum class Estimator {
    /// Closed-form update on weighted log-moments, with a weighted
    /// method-of-moments fallback whenever it yields invalid shapes.
    paper_closed_form,
    weighted_moments,
    /// Exact weighted maximum likelihood (Newton on the digamma equations).
    weighted_mle,
  };

  std::size_t max_iters = 200;
  double log_lik_tol = 1e-6;
  double init_strong_fraction = 0.40;
  std::size_t min_samples = 5;
  double param_floor = 1e-3;
  double param_ceiling = 1e3;
  Estimator estimator = Estimator::weighted_mle;
  /// Draw the initial strong set at random from the upper playtimes instead
  /// of taking the exact top fraction.
  bool random_init = false;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// em_fit precondition failure: too few samples, or no spread in the data.
class FitRejected : public Error {
 public:
  using Error::Error;
};

struct EmResult {
  DualBetaModel model;
  std::vector<double> gamma;  // posterior strong probability per sample
  std::vector<double> log_likelihood_trace;  // initial model first
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  std::size_t fallbacks = 0;  // M-step components that fell back to moments or were clamped
  bool converged = false;
};

/// Mixture log-likelihood of the samples.
double mixture_log_likelihood(std::span<const double> samples, const DualBetaModel& model);

/// Posterior strong probability for every sample under `model`.
std::vector<double> e_step(std::span<const double> samples, const DualBetaModel& model);

/// Parameter update from soft labels; pi is the mean of gamma. `fallbacks`
/// is incremented for each component the primary estimator could not handle.
DualBetaModel m_step(std::span<const double> samples, std::span<const double> gamma,
                     const EmConfig& config, const DualBetaModel& previous,
                     std::size_t* fallbacks = nullptr);

/// Single-component weighted estimators, exposed for testing.
BetaParams weighted_moments_estimate(std::span<const double> samples,
                                     std::span<const double> weights);
std::optional<BetaParams> closed_form_estimate(std::span<const double> samples,
                                               std::span<const double> weights);
BetaParams weighted_mle_estimate(std::span<const double> samples, std::span<const double> weights,
                                 const BetaParams& start);

/// Fits the dual-beta mixture to one user's normalized (non-zero) playtimes.
/// Returns the highest-likelihood iterate, oriented so that the strong
/// component has the larger mean. Throws FitRejected.
EmResult em_fit(std::span<const double> playtimes, const EmConfig& config = {});

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool success() const { return p_value > 0.05; }
};

/// Two-sided one-sample KS statistic sup |F_n - F| against `cdf`.
double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) e^(-2 k^2 lambda^2).
double kolmogorov_survival(double lambda);

/// KS test against the fitted mixture CDF; the p-value uses the effective
/// argument (sqrt(n) + 0.12 + 0.11 / sqrt(n)) * D.
KsResult ks_test(std::span<const double> samples, const DualBetaModel& model);

/// Fitted model for one user plus the records it covers.
struct UserFit {
  UserId user = 0;
  DualBetaModel model;
  bool converged = false;
  std::size_t iterations = 0;
  KsResult ks;
  std::vector<std::size_t> records;  // indices into dataset.records (non-zero playtime)
  std::vector<double> gamma;         // aligned with `records`
};

/// Per-user fits for every user with at least `min_interactions` records.
/// Entries are empty for skipped or rejected users.
std::vector<std::optional<UserFit>> fit_users(const Dataset& dataset, const EmConfig& config,
                                              std::size_t min_interactions = 1,
                                              std::size_t threads = 1);

enum class InterestLabel : std::uint8_t { weak = 0, strong = 1 };

/// Posterior and label for every record, aligned with dataset.records.
struct InterestAssignment {
  std::vector<double> gamma;
  std::vector<InterestLabel> label;

  bool strong(std::size_t record) const { return label[record] == InterestLabel::strong; }
  std::size_t strong_count() const;
};

/// Strong iff gamma > 0.5. Zero-playtime records and records of users
/// without a fit are weak with gamma = 0.
InterestAssignment classify_interactions(const Dataset& dataset,
                                         const std::vector<std::optional<UserFit>>& fits);

/// Threshold rule used by classify_interactions.
constexpr InterestLabel label_for(double gamma) {
  return gamma > 0.5 ? InterestLabel::strong : InterestLabel::weak;
}

struct FitReport {
  std::size_t users_attempted = 0;
  std::size_t users_fit_ok = 0;  // KS p > 0.05
  double mean_ks_statistic = 0.0;
  double mean_p_value = 0.0;
  BetaParams mean_strong{0.0, 0.0};
  BetaParams mean_weak{0.0, 0.0};

  double success_rate() const {
    return users_attempted ? static_cast<double>(users_fit_ok) / users_attempted : 0.0;
  }
};

struct FitConfig {
  EmConfig em;
  std::size_t min_interactions = 10;
  std::size_t threads = 1;
};

/// Summarizes already computed fits. Users with at least
/// `min_interactions` records count as attempted.
FitReport summarize_fits(const Dataset& dataset, const std::vector<std::optional<UserFit>>& fits,
                         std::size_t min_interactions);

/// em_fit + ks_test for every user with at least config.min_interactions records.
FitReport fit_population(const Dataset& dataset, const FitConfig& config = {});

}  // namespace playrec
