#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "playrec/betamix.hpp"
#include "support.hpp"

using namespace playrec;

namespace {

std::vector<double> draw_mixture(Rng& rng, std::size_t n, double pi, std::vector<int>* labels = nullptr) {
  const BetaParams s{9.58, 2.26}, w{4.68, 8.37};
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) {
    const bool strong = uniform01(rng) < pi;
    x[k] = std::clamp(sample_beta(rng, strong ? s : w), 1e-6, 1 - 1e-6);
    if (labels) labels->push_back(strong);
  }
  return x;
}

// Two-sided step gaps: max over sorted samples of |i/n - F| and |F - (i-1)/n|.
double ks_oracle(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, std::fabs((i + 1) / n - f), std::fabs(f - i / n)});
  }
  return d;
}

}  // namespace

TEST_CASE("em_fit recovers the mixture") {
  Rng rng(42);
  const auto x = draw_mixture(rng, 500, 0.4);
  const EmResult r = em_fit(x);
  CHECK(r.model.pi >= 0.3);
  CHECK(r.model.pi <= 0.5);
  CHECK(std::fabs(r.model.strong.mean() - 9.58 / (9.58 + 2.26)) < 0.1);
  CHECK(std::fabs(r.model.weak.mean() - 4.68 / (4.68 + 8.37)) < 0.1);
  CHECK(r.model.strong.mean() > r.model.weak.mean());
}

TEST_CASE("em_fit on a single population lets one component dominate") {
  Rng rng(43);
  const auto x = draw_mixture(rng, 500, 1.0);
  const EmResult r = em_fit(x);
  CHECK(std::max(r.model.pi, 1 - r.model.pi) > 0.9);
}

TEST_CASE("em_fit preconditions") {
  const std::vector<double> three{0.2, 0.5, 0.7};
  CHECK_THROWS_AS(em_fit(three), FitRejected);
  const std::vector<double> same(20, 0.4);
  CHECK_THROWS_AS(em_fit(same), FitRejected);
}

TEST_CASE("EM invariants (property)") {
  Rng rng(7);
  int checked_traces = 0;
  for (auto est : {EmConfig::Estimator::weighted_mle, EmConfig::Estimator::weighted_moments,
                   EmConfig::Estimator::paper_closed_form}) {
    for (int trial = 0; trial < 15; ++trial) {
      const auto x = draw_mixture(rng, 20 + uniform_index(rng, 200), 0.2 + 0.6 * uniform01(rng));
      EmConfig cfg;
      cfg.estimator = est;
      const EmResult r = em_fit(x, cfg);
      for (double g : r.gamma) {
        CHECK(g >= 0.0);
        CHECK(g <= 1.0);
      }
      // returned model is the best iterate, so never below the start
      CHECK(r.log_likelihood >= r.log_likelihood_trace.front() - 1e-9);
      CHECK(std::isfinite(r.log_likelihood));
      // exact M-steps cannot lower the likelihood unless a safeguard fired
      if (est == EmConfig::Estimator::weighted_mle && r.fallbacks == 0) {
        ++checked_traces;
        for (std::size_t k = 2; k < r.log_likelihood_trace.size(); ++k)
          CHECK(r.log_likelihood_trace[k] >= r.log_likelihood_trace[k - 1] - 1e-7 * std::fabs(r.log_likelihood_trace[k - 1]));
      }
    }
  }
  CHECK(checked_traces >= 10);
}

TEST_CASE("m_step sets pi to the mean posterior") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = draw_mixture(rng, 60, 0.4);
    std::vector<double> g(x.size());
    for (auto& v : g) v = uniform01(rng);
    const DualBetaModel prev{0.5, {5, 2}, {2, 5}};
    const DualBetaModel m = m_step(x, g, EmConfig{}, prev);
    const double mean = std::accumulate(g.begin(), g.end(), 0.0) / g.size();
    CHECK(std::fabs(m.pi - mean) < 1e-12);
  }
}

TEST_CASE("weighted estimators recover a single Beta") {
  Rng rng(10);
  std::vector<double> x(4000);
  for (auto& v : x) v = sample_beta(rng, {9.58, 2.26});
  const std::vector<double> w(x.size(), 1.0);
  const auto mle = weighted_mle_estimate(x, w, {2, 2});
  CHECK(mle.alpha == doctest::Approx(9.58).epsilon(0.1));
  CHECK(mle.beta == doctest::Approx(2.26).epsilon(0.1));
  const auto mom = weighted_moments_estimate(x, w);
  CHECK(mom.alpha == doctest::Approx(9.58).epsilon(0.15));
  CHECK(mom.beta == doctest::Approx(2.26).epsilon(0.15));
}

TEST_CASE("ks examples") {
  const std::vector<double> x{0.25, 0.5, 0.75};
  const auto uniform = [](double t) { return t; };
  CHECK(ks_statistic(x, uniform) == doctest::Approx(0.25).epsilon(1e-14));

  const std::size_t n = 2000;
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = (i + 0.5) / n;
  CHECK(std::fabs(ks_statistic(q, uniform) - 0.5 / n) < 1e-12);

  CHECK(kolmogorov_survival(0.0) == 1.0);
  CHECK(kolmogorov_survival(1.36) == doctest::Approx(0.0494).epsilon(0.01));
  CHECK(kolmogorov_survival(5.0) < 1e-20);
}

TEST_CASE("ks_statistic matches the step-gap oracle (property)") {
  Rng rng(12);
  const DualBetaModel model{0.4, {9.58, 2.26}, {4.68, 8.37}};
  const auto cdf = [&](double t) { return model.cdf(t); };
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = draw_mixture(rng, 5 + uniform_index(rng, 100), 0.4);
    CHECK(std::fabs(ks_statistic(x, cdf) - ks_oracle(x, cdf)) < 1e-12);
  }
}

TEST_CASE("classification rule") {
  CHECK(label_for(0.7) == InterestLabel::strong);
  CHECK(label_for(0.5) == InterestLabel::weak);
  CHECK(label_for(0.2) == InterestLabel::weak);

  Rng rng(13);
  std::vector<testing::Row> rows;
  for (ItemId i = 0; i < 30; ++i) rows.push_back({0, i, std::clamp(sample_beta(rng, i % 3 ? BetaParams{4.68, 8.37} : BetaParams{9.58, 2.26}), 1e-6, 1 - 1e-6)});
  rows.push_back({0, 30, 0.99});
  Dataset ds = testing::make_dataset(1, 31, rows, {{0, 0}}, 1);
  ds.records.back().playtime_raw = 0.0;  // zero playtime: weak, excluded from EM

  const auto fits = fit_users(ds, EmConfig{});
  REQUIRE(fits[0].has_value());
  CHECK(fits[0]->records.size() == 30);
  const auto a = classify_interactions(ds, fits);
  CHECK(a.gamma.back() == 0.0);
  CHECK(a.label.back() == InterestLabel::weak);
  for (std::size_t k = 0; k + 1 < a.gamma.size(); ++k) CHECK(a.label[k] == label_for(a.gamma[k]));

  // a label is a function of the record's own gamma: reversing the records changes nothing
  Dataset rev = ds;
  std::reverse(rev.records.begin(), rev.records.end());
  const auto b = classify_interactions(rev, fit_users(rev, EmConfig{}));
  for (std::size_t k = 0; k < a.gamma.size(); ++k) {
    CHECK(b.gamma[a.gamma.size() - 1 - k] == doctest::Approx(a.gamma[k]).epsilon(1e-9));
    CHECK(b.label[a.gamma.size() - 1 - k] == a.label[k]);
  }
}

TEST_CASE("fit report") {
  Dataset empty = testing::make_dataset(0, 1, {}, {{0, 0}}, 1);
  CHECK(fit_population(empty).users_attempted == 0);

  SyntheticSpec spec;
  spec.num_users = 30;
  spec.min_items_per_user = 40;
  spec.max_items_per_user = 50;
  const Dataset ds = generate_synthetic(spec);
  const FitReport r = fit_population(ds);
  CHECK(r.users_attempted == 30);
  CHECK(r.success_rate() >= 0.9);
}
