#include "playrec/diversity.hpp"

#include <cmath>

namespace playrec {

void Path::add(ItemId item, std::span<const CategoryId> categories) {
  nodes_.push_back(item);
  covered_.insert(categories.begin(), categories.end());
}

std::size_t diversity_gain(std::span<const CategoryId> item_categories,
                           const std::set<CategoryId>& covered) {
  std::set<CategoryId> fresh;
  for (auto c : item_categories)
    if (!covered.count(c)) fresh.insert(c);
  return fresh.size();
}

namespace {

double total_score(std::span<const Candidate> candidates) {
  double total = 0.0;
  for (const auto& c : candidates) total += c.score;
  return total;
}

}  // namespace

double expected_gain(std::span<const Candidate> candidates, const std::set<CategoryId>& covered,
                     const CategoryIndex& categories) {
  const double total = total_score(candidates);
  if (!(total > 0.0)) return 0.0;
  double g = 0.0;
  for (const auto& c : candidates)
    g += c.score / total *
         static_cast<double>(diversity_gain(categories.categories_of(c.item), covered));
  return g;
}

double expected_gain_representing(std::span<const Candidate> candidates,
                                  const std::set<CategoryId>& covered) {
  const double total = total_score(candidates);
  if (!(total > 0.0)) return 0.0;
  double g = 0.0;
  for (const auto& c : candidates)
    if (!covered.count(c.category)) g += c.score / total;
  return g;
}

bool DiversityTrace::monotone() const {
  for (std::size_t t = 1; t < coverage.size(); ++t)
    if (coverage[t] < coverage[t - 1]) return false;
  return true;
}

namespace {

// Tracks both coverage accountings for one walk.
class TraceRecorder : public WalkObserver {
 public:
  explicit TraceRecorder(const CategoryIndex& categories) : categories_(categories) {}

  void on_round_start(UserId, const InitialChoice& choice) override {
    path_ = Path{};
    rep_covered_.clear();
    const auto& cats = categories_.categories_of(choice.start);
    path_.add(choice.start, cats);
    rep_covered_.insert(cats.begin(), cats.end());
    all = {};
    rep = {};
    all.coverage.push_back(path_.coverage());
    rep.coverage.push_back(rep_covered_.size());
  }

  void on_step(const WalkStep& step) override {
    if (!step.chosen) return;
    all.predicted_gain.push_back(expected_gain(step.candidates, path_.covered(), categories_));
    rep.predicted_gain.push_back(expected_gain_representing(step.candidates, rep_covered_));
    const Candidate& next = step.candidates[*step.chosen];
    path_.add(next.item, categories_.categories_of(next.item));
    rep_covered_.insert(next.category);
    all.coverage.push_back(path_.coverage());
    rep.coverage.push_back(rep_covered_.size());
  }

  DiversityTrace all;
  DiversityTrace rep;

 private:
  const CategoryIndex& categories_;
  Path path_;
  std::set<CategoryId> rep_covered_;
};

struct Accumulator {
  double sum_c0 = 0.0, sum_ct = 0.0, sum_pred = 0.0, sum_d = 0.0, sum_d2 = 0.0;
  std::size_t n = 0;

  void add(const DiversityTrace& t) {
    const double c0 = static_cast<double>(t.coverage.front());
    const double ct = static_cast<double>(t.coverage.back());
    double pred = 0.0;
    for (double g : t.predicted_gain) pred += g;
    const double d = (ct - c0) - pred;
    sum_c0 += c0;
    sum_ct += ct;
    sum_pred += pred;
    sum_d += d;
    sum_d2 += d * d;
    ++n;
  }

  IdentityCheck finish(double z_threshold) const {
    IdentityCheck r;
    if (n == 0) {
      r.pass = true;
      return r;
    }
    const auto nn = static_cast<double>(n);
    r.mean_c0 = sum_c0 / nn;
    r.mean_ct = sum_ct / nn;
    r.mean_predicted_gain = sum_pred / nn;
    const double mean_d = sum_d / nn;
    const double var = n > 1 ? std::max(0.0, (sum_d2 - nn * mean_d * mean_d) / (nn - 1.0)) : 0.0;
    const double se = std::sqrt(var / nn);
    if (se > 0.0)
      r.z_score = mean_d / se;
    else
      r.z_score = std::fabs(mean_d) < 1e-12 ? 0.0 : INFINITY;
    r.pass = std::fabs(r.z_score) <= z_threshold;
    return r;
  }
};

}  // namespace

DiversityReport verify_diversity_identities(const WalkEngine& engine, std::size_t num_trials,
                                            std::uint64_t seed, double z_threshold) {
  const Dataset& ds = engine.dataset();
  std::vector<UserId> eligible;
  for (UserId u = 0; u < ds.num_users; ++u)
    if (!engine.strong_items(u).empty()) eligible.push_back(u);

  DiversityReport report;
  Accumulator all, rep;
  TraceRecorder recorder(*ds.categories);
  std::vector<AugmentedEdge> scratch;
  for (std::size_t k = 0; k < num_trials && !eligible.empty(); ++k) {
    const UserId u = eligible[k % eligible.size()];
    WalkState state(ds.categories->num_categories());
    auto rng = make_rng(seed, "divtheory", k);
    scratch.clear();
    engine.run_round(u, state, rng, scratch, &recorder);
    ++report.trials;
    if (!recorder.all.monotone() || !recorder.rep.monotone()) {
      report.monotone = false;
      ++report.violations;
    }
    all.add(recorder.all);
    rep.add(recorder.rep);
  }
  report.all_categories = all.finish(z_threshold);
  report.representing = rep.finish(z_threshold);
  return report;
}

}  // namespace playrec
