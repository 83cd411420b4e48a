#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "playrec/dataio.hpp"
#include "playrec/walk.hpp"

namespace playrec {

/// Visited nodes and the union of their categories.
class Path {
 public:
  void add(ItemId item, std::span<const CategoryId> categories);
  std::size_t coverage() const { return covered_.size(); }
  const std::set<CategoryId>& covered() const { return covered_; }
  const std::vector<ItemId>& nodes() const { return nodes_; }

 private:
  std::vector<ItemId> nodes_;
  std::set<CategoryId> covered_;
};

/// Number of categories of j not yet covered: |c(j) \ c(P)|.
std::size_t diversity_gain(std::span<const CategoryId> item_categories,
                           const std::set<CategoryId>& covered);

/// sum_j P(j) * gain(j), with P(j) = score_j / sum(score) over the candidates.
double expected_gain(std::span<const Candidate> candidates, const std::set<CategoryId>& covered,
                     const CategoryIndex& categories);

/// Same, but counting only each candidate's representing category.
double expected_gain_representing(std::span<const Candidate> candidates,
                                  const std::set<CategoryId>& covered);

/// Coverage trace of one walk.
struct DiversityTrace {
  std::vector<std::size_t> coverage;  // C_0, C_1, ..., C_T
  std::vector<double> predicted_gain;  // expected one-step gain before each step
  bool monotone() const;
};

struct IdentityCheck {
  double mean_c0 = 0.0;
  double mean_ct = 0.0;
  double mean_predicted_gain = 0.0;
  double z_score = 0.0;
  bool pass = false;
};

struct DiversityReport {
  std::size_t trials = 0;
  bool monotone = true;          // every trace non-decreasing
  std::size_t violations = 0;    // traces that decreased
  IdentityCheck all_categories;  // C_t over every category of the visited items
  IdentityCheck representing;    // C_t counting representing categories only
  bool pass() const { return monotone && all_categories.pass && representing.pass; }
};

/// Runs `num_trials` independent single walks (fresh per-user state, one
/// stream per trial, users cycled in order), records per-step candidate
/// distributions and checks that E[C_T] - E[C_0] matches the accumulated
/// expected gains within `z_threshold` standard errors.
DiversityReport verify_diversity_identities(const WalkEngine& engine, std::size_t num_trials,
                                            std::uint64_t seed, double z_threshold = 3.0);

}  // namespace playrec
