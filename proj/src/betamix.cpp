#include "playrec/betamix.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <numeric>

#include "playrec/random.hpp"

namespace playrec {

namespace {

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -INFINITY) return -INFINITY;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

BetaParams clamp_params(BetaParams p, const EmConfig& c) {
  p.alpha = std::clamp(p.alpha, c.param_floor, c.param_ceiling);
  p.beta = std::clamp(p.beta, c.param_floor, c.param_ceiling);
  return p;
}

double weighted_objective(double a, double b, double s1, double s2, double w) {
  return (a - 1.0) * s1 + (b - 1.0) * s2 - w * log_beta_function(a, b);
}

}  // namespace

double DualBetaModel::log_pdf(double x) const {
  return log_sum_exp(std::log(pi) + beta_log_pdf(x, strong),
                     std::log1p(-pi) + beta_log_pdf(x, weak));
}

double DualBetaModel::pdf(double x) const { return std::exp(log_pdf(x)); }

double DualBetaModel::cdf(double x) const {
  return pi * beta_cdf(x, strong) + (1.0 - pi) * beta_cdf(x, weak);
}

double DualBetaModel::posterior_strong(double x) const {
  if (pi <= 0.0) return 0.0;
  if (pi >= 1.0) return 1.0;
  const double ls = std::log(pi) + beta_log_pdf(x, strong);
  const double lw = std::log1p(-pi) + beta_log_pdf(x, weak);
  // logistic of the log-odds, stable in both tails
  const double d = lw - ls;
  if (d > 0) {
    const double e = std::exp(-d);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(d));
}

void EmConfig::validate() const {
  if (!(init_strong_fraction > 0.0 && init_strong_fraction < 1.0))
    throw DomainError("init_strong_fraction must lie in (0, 1)");
  if (!(param_floor > 0.0 && param_floor < param_ceiling))
    throw DomainError("param_floor must be positive and below param_ceiling");
  if (max_iters == 0) throw DomainError("max_iters must be positive");
  if (!(log_lik_tol > 0.0)) throw DomainError("log_lik_tol must be positive");
}

double mixture_log_likelihood(std::span<const double> samples, const DualBetaModel& model) {
  double ll = 0.0;
  for (double x : samples) ll += model.log_pdf(x);
  return ll;
}

std::vector<double> e_step(std::span<const double> samples, const DualBetaModel& model) {
  std::vector<double> gamma(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) gamma[k] = model.posterior_strong(samples[k]);
  return gamma;
}

BetaParams weighted_moments_estimate(std::span<const double> samples,
                                     std::span<const double> weights) {
  double w = 0.0, m = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    w += weights[k];
    m += weights[k] * samples[k];
  }
  if (!(w > 0.0)) return {1.0, 1.0};
  m /= w;
  double v = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) v += weights[k] * (samples[k] - m) * (samples[k] - m);
  v /= w;
  double common = v > 0.0 ? m * (1.0 - m) / v - 1.0 : INFINITY;
  // v >= m(1-m) has no Beta solution; fall back to a broad shape with the same mean
  if (!(common > 0.0)) common = 2.0;
  if (!std::isfinite(common)) common = 1e6;
  return {m * common, (1.0 - m) * common};
}

std::optional<BetaParams> closed_form_estimate(std::span<const double> samples,
                                               std::span<const double> weights) {
  double log_t = 0.0, log_1mt = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    log_t += weights[k] * std::log(samples[k]);
    log_1mt += weights[k] * std::log1p(-samples[k]);
  }
  const double alpha = log_t / (-log_t + log_1mt);
  const double beta = alpha * log_1mt / log_t;
  BetaParams p{alpha, beta};
  if (!p.valid()) return std::nullopt;
  return p;
}

BetaParams weighted_mle_estimate(std::span<const double> samples, std::span<const double> weights,
                                 const BetaParams& start) {
  using boost::math::digamma;
  using boost::math::trigamma;
  double s1 = 0.0, s2 = 0.0, w = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    s1 += weights[k] * std::log(samples[k]);
    s2 += weights[k] * std::log1p(-samples[k]);
    w += weights[k];
  }
  if (!(w > 0.0)) return start;
  double a = start.alpha, b = start.beta;
  double f = weighted_objective(a, b, s1, s2, w);
  for (int it = 0; it < 100; ++it) {
    const double dab = digamma(a + b);
    const double ga = s1 - w * (digamma(a) - dab);
    const double gb = s2 - w * (digamma(b) - dab);
    const double tab = trigamma(a + b);
    // negative Hessian, positive definite
    const double haa = w * (trigamma(a) - tab);
    const double hbb = w * (trigamma(b) - tab);
    const double hab = -w * tab;
    const double det = haa * hbb - hab * hab;
    if (!(det > 0.0)) break;
    double da = (hbb * ga - hab * gb) / det;
    double db = (haa * gb - hab * ga) / det;
    double step = 1.0;
    bool improved = false;
    for (int half = 0; half < 60; ++half) {
      const double na = a + step * da, nb = b + step * db;
      if (na > 0.0 && nb > 0.0 && std::isfinite(na) && std::isfinite(nb)) {
        const double nf = weighted_objective(na, nb, s1, s2, w);
        if (nf >= f) {
          improved = nf > f;
          a = na;
          b = nb;
          f = nf;
          break;
        }
      }
      step *= 0.5;
    }
    if (!improved || std::fabs(step * da) + std::fabs(step * db) < 1e-12 * (a + b)) break;
  }
  return {a, b};
}

DualBetaModel m_step(std::span<const double> samples, std::span<const double> gamma,
                     const EmConfig& config, const DualBetaModel& previous,
                     std::size_t* fallbacks) {
  const std::size_t n = samples.size();
  std::vector<double> weak_w(n);
  for (std::size_t k = 0; k < n; ++k) weak_w[k] = 1.0 - gamma[k];

  auto estimate = [&](std::span<const double> weights, const BetaParams& prev) {
    switch (config.estimator) {
      case EmConfig::Estimator::paper_closed_form:
        if (auto p = closed_form_estimate(samples, weights)) return *p;
        if (fallbacks) ++*fallbacks;
        return weighted_moments_estimate(samples, weights);
      case EmConfig::Estimator::weighted_moments:
        return weighted_moments_estimate(samples, weights);
      case EmConfig::Estimator::weighted_mle:
        break;
    }
    // Start Newton from the better of the previous shapes and the moments guess.
    const BetaParams mom = clamp_params(weighted_moments_estimate(samples, weights), config);
    double s1 = 0.0, s2 = 0.0, w = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      s1 += weights[k] * std::log(samples[k]);
      s2 += weights[k] * std::log1p(-samples[k]);
      w += weights[k];
    }
    const BetaParams start = weighted_objective(prev.alpha, prev.beta, s1, s2, w) >=
                                     weighted_objective(mom.alpha, mom.beta, s1, s2, w)
                                 ? prev
                                 : mom;
    return weighted_mle_estimate(samples, weights, start);
  };

  // a clamped estimate is no longer the M-step optimum, so it counts as a fallback
  auto bounded = [&](const BetaParams& raw) {
    const BetaParams p = clamp_params(raw, config);
    if (fallbacks && (p.alpha != raw.alpha || p.beta != raw.beta)) ++*fallbacks;
    return p;
  };
  DualBetaModel next;
  next.strong = bounded(estimate(gamma, previous.strong));
  next.weak = bounded(estimate(weak_w, previous.weak));
  next.pi = n ? std::accumulate(gamma.begin(), gamma.end(), 0.0) / static_cast<double>(n) : 0.5;
  return next;
}

EmResult em_fit(std::span<const double> playtimes, const EmConfig& config) {
  config.validate();
  const std::size_t n = playtimes.size();
  if (n < config.min_samples)
    throw FitRejected("em_fit: " + std::to_string(n) + " samples, need at least " +
                      std::to_string(config.min_samples));
  for (double x : playtimes)
    if (!(x > 0.0 && x < 1.0)) throw DomainError("em_fit: samples must lie in (0, 1)");
  const auto [lo, hi] = std::minmax_element(playtimes.begin(), playtimes.end());
  if (*hi - *lo < 1e-12) throw FitRejected("em_fit: all samples identical");

  // Initial hard split: the top fraction by playtime is strong.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return playtimes[a] > playtimes[b]; });
  auto n_strong = static_cast<std::size_t>(
      std::ceil(config.init_strong_fraction * static_cast<double>(n) - 1e-9));
  n_strong = std::clamp<std::size_t>(n_strong, 1, n - 1);
  std::vector<double> gamma(n, 0.0);
  if (config.random_init) {
    const std::size_t pool = std::min(n, 2 * n_strong);
    auto rng = make_rng(config.init_seed, "em-init");
    std::vector<std::size_t> candidates(order.begin(), order.begin() + static_cast<long>(pool));
    for (std::size_t k = 0; k < n_strong; ++k) {
      std::swap(candidates[k], candidates[k + uniform_index(rng, pool - k)]);
      gamma[candidates[k]] = 1.0;
    }
  } else {
    for (std::size_t k = 0; k < n_strong; ++k) gamma[order[k]] = 1.0;
  }

  EmConfig init_config = config;
  if (init_config.estimator == EmConfig::Estimator::weighted_mle)
    init_config.estimator = EmConfig::Estimator::weighted_moments;
  EmResult result;
  DualBetaModel model = m_step(playtimes, gamma, init_config, {}, &result.fallbacks);
  double ll = mixture_log_likelihood(playtimes, model);
  if (!std::isfinite(ll)) throw NumericalError("em_fit: non-finite initial log-likelihood");
  result.log_likelihood_trace.push_back(ll);

  DualBetaModel best = model;
  double best_ll = ll;
  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    gamma = e_step(playtimes, model);
    model = m_step(playtimes, gamma, config, model, &result.fallbacks);
    if (model.pi <= 0.0 || model.pi >= 1.0) {
      // one component absorbed everything; the mixture is degenerate
      model.pi = std::clamp(model.pi, 1e-12, 1.0 - 1e-12);
    }
    const double next_ll = mixture_log_likelihood(playtimes, model);
    if (!std::isfinite(next_ll)) break;
    result.log_likelihood_trace.push_back(next_ll);
    result.iterations = it;
    if (next_ll > best_ll) {
      best_ll = next_ll;
      best = model;
    }
    const double rel = std::fabs(next_ll - ll) / std::max(1.0, std::fabs(ll));
    ll = next_ll;
    if (rel < config.log_lik_tol) {
      result.converged = true;
      break;
    }
  }

  if (best.strong.mean() < best.weak.mean()) {
    std::swap(best.strong, best.weak);
    best.pi = 1.0 - best.pi;
  }
  result.model = best;
  result.log_likelihood = best_ll;
  result.gamma = e_step(playtimes, best);
  return result;
}

double ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const double f = cdf(sorted[k]);
    const auto kk = static_cast<double>(k);
    d = std::max({d, (kk + 1.0) / n - f, f - kk / n});
  }
  return d;
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  // The alternating series is useless for tiny lambda; Q is 1 to double precision there.
  if (lambda < 0.18) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-17 * std::fabs(sum) || std::fabs(term) < 1e-300) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> samples, const DualBetaModel& model) {
  if (samples.empty()) throw DomainError("ks_test: need at least one sample");
  KsResult r;
  r.statistic = ks_statistic(samples, [&](double x) { return model.cdf(x); });
  const double sqrt_n = std::sqrt(static_cast<double>(samples.size()));
  r.p_value = kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * r.statistic);
  return r;
}

std::vector<std::optional<UserFit>> fit_users(const Dataset& dataset, const EmConfig& config,
                                              std::size_t min_interactions, std::size_t threads) {
  if (!dataset.normalized && !dataset.records.empty())
    throw DataError("fit_users: dataset must be normalized");
  const auto by_user = dataset.records_by_user();
  std::vector<std::optional<UserFit>> fits(dataset.num_users);
  parallel_for(dataset.num_users, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      if (by_user[u].size() < min_interactions) continue;
      UserFit fit;
      fit.user = static_cast<UserId>(u);
      std::vector<double> samples;
      for (auto k : by_user[u]) {
        const auto& r = dataset.records[k];
        if (r.playtime_raw == 0.0) continue;
        fit.records.push_back(k);
        samples.push_back(r.playtime_norm);
      }
      try {
        EmConfig user_config = config;
        user_config.init_seed = stream_seed(config.init_seed, "em-user", u);
        auto res = em_fit(samples, user_config);
        fit.model = res.model;
        fit.converged = res.converged;
        fit.iterations = res.iterations;
        fit.gamma = std::move(res.gamma);
        fit.ks = ks_test(samples, fit.model);
        fits[u] = std::move(fit);
      } catch (const FitRejected&) {
      }
    }
  });
  return fits;
}

std::size_t InterestAssignment::strong_count() const {
  return static_cast<std::size_t>(std::count(label.begin(), label.end(), InterestLabel::strong));
}

InterestAssignment classify_interactions(const Dataset& dataset,
                                         const std::vector<std::optional<UserFit>>& fits) {
  InterestAssignment out;
  out.gamma.assign(dataset.records.size(), 0.0);
  for (const auto& fit : fits) {
    if (!fit) continue;
    for (std::size_t m = 0; m < fit->records.size(); ++m) {
      const std::size_t k = fit->records[m];
      if (k < dataset.records.size() && dataset.records[k].playtime_raw != 0.0)
        out.gamma[k] = fit->gamma[m];
    }
  }
  out.label.resize(out.gamma.size());
  for (std::size_t k = 0; k < out.gamma.size(); ++k) out.label[k] = label_for(out.gamma[k]);
  return out;
}

FitReport summarize_fits(const Dataset& dataset, const std::vector<std::optional<UserFit>>& fits,
                         std::size_t min_interactions) {
  FitReport report;
  std::vector<std::size_t> counts(dataset.num_users, 0);
  for (const auto& r : dataset.records) ++counts[r.user];
  std::size_t fitted = 0;
  for (std::size_t u = 0; u < dataset.num_users; ++u) {
    if (counts[u] < min_interactions) continue;
    ++report.users_attempted;
    if (u >= fits.size() || !fits[u]) continue;
    const auto& f = *fits[u];
    ++fitted;
    if (f.ks.success()) ++report.users_fit_ok;
    report.mean_ks_statistic += f.ks.statistic;
    report.mean_p_value += f.ks.p_value;
    report.mean_strong.alpha += f.model.strong.alpha;
    report.mean_strong.beta += f.model.strong.beta;
    report.mean_weak.alpha += f.model.weak.alpha;
    report.mean_weak.beta += f.model.weak.beta;
  }
  if (fitted) {
    const auto n = static_cast<double>(fitted);
    report.mean_ks_statistic /= n;
    report.mean_p_value /= n;
    report.mean_strong = {report.mean_strong.alpha / n, report.mean_strong.beta / n};
    report.mean_weak = {report.mean_weak.alpha / n, report.mean_weak.beta / n};
  }
  return report;
}

FitReport fit_population(const Dataset& dataset, const FitConfig& config) {
  const auto fits = fit_users(dataset, config.em, config.min_interactions, config.threads);
  return summarize_fits(dataset, fits, config.min_interactions);
}

}  // namespace playrec
