#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "playrec/betamix.hpp"
#include "playrec/dataio.hpp"
#include "playrec/propagation.hpp"
#include "playrec/random.hpp"

namespace playrec {

struct WalkConfig {
  /// Maximum additions per representing category per user.
  std::size_t Q = 1;
  /// Rounds per user; when unset, min(|strong items|, rounds_cap).
  std::optional<std::size_t> rounds_per_user;
  std::size_t rounds_cap = 10;
  std::size_t max_walk_length = 3;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

/// Candidate next node. `category` is the category it represents in the
/// candidate set (the category whose argmax it was).
struct Candidate {
  ItemId item = 0;
  CategoryId category = 0;
  double sim_m = 0.0;
  double sim_t = 0.0;
  double balance = 0.0;
  double score = 0.0;
};

/// Per-user exploration bookkeeping.
struct WalkState {
  std::unordered_set<ItemId> added_all;
  std::map<ItemId, std::vector<ItemId>> added_by_init;  // initial node -> items added from it
  std::vector<std::size_t> category_counts;             // indexed by representing category
  std::unordered_map<ItemId, double> added_weight;      // edge weight of each added item
  std::unordered_set<ItemId> used_initial;

  explicit WalkState(std::size_t num_categories = 0) : category_counts(num_categories, 0) {}
};

struct AugmentedEdge {
  UserId user = 0;
  ItemId item = 0;
  double weight = 0.0;
  CategoryId category = 0;  // representing category the item was added under
  ItemId from_item = 0;     // node the walk stepped from

  friend bool operator==(const AugmentedEdge&, const AugmentedEdge&) = default;
};

/// Start of one exploration round.
struct InitialChoice {
  ItemId initial = 0;  // sampled strong-interest item
  ItemId start = 0;    // walk origin: `initial`, or an item previously added from it
  double start_weight = 0.0;
};

/// Samples the initial node with probability proportional to its normalized
/// playtime. If it was an initial node before and items were added from it,
/// the round restarts from one of those items, chosen uniformly.
std::optional<InitialChoice> select_initial(std::span<const ItemId> strong_items,
                                            std::span<const double> playtime_norm,
                                            WalkState& state, Rng& rng);

/// For every category, the member (other than `current`) with the highest
/// modal cosine; ties go to the smaller item id. Items representing several
/// categories keep the first one in category order.
std::vector<Candidate> candidate_set(ItemId current, const CategoryIndex& categories,
                                     const Matrix& modal);

/// Keeps candidates outside the user's items and added set whose
/// representing category is still below Q, and whose modal similarity to
/// the current node is positive.
std::vector<Candidate> filter_candidates(std::span<const Candidate> candidates,
                                         std::span<const ItemId> user_items_sorted,
                                         const WalkState& state, std::size_t Q);

double modal_similarity(ItemId i, ItemId j, const Matrix& modal);

/// (Q - count) / Q.
double balance_coefficient(std::size_t category_count, std::size_t Q);

/// 1 - mean |gamma_ui - gamma_uj| over users who played both items; 0 when
/// nobody did. Results are cached per unordered pair.
class InterestSimilarity {
 public:
  InterestSimilarity(const Dataset& dataset, const InterestAssignment& assignment);
  double operator()(ItemId i, ItemId j) const;
  /// Uncached evaluation.
  double compute(ItemId i, ItemId j) const;

 private:
  std::vector<std::vector<std::pair<UserId, double>>> players_;  // sorted by user
  mutable std::unordered_map<std::uint64_t, double> cache_;
  mutable std::shared_mutex mutex_;
};

/// Min-max normalizes sim_m, sim_t and balance over the set (an all-equal
/// metric maps to 1) and sets score to their mean.
void score_candidates(std::span<Candidate> candidates);

/// Index drawn with probability score / sum(score); nullopt terminates.
std::optional<std::size_t> sample_next(std::span<const Candidate> candidates, Rng& rng);

/// t * prod(max(sim, 0)) over the similarities along the path.
double path_weight(double initial_playtime_norm, std::span<const double> path_similarities);

/// One step as seen by an observer. Probabilities are score / sum(score).
struct WalkStep {
  UserId user = 0;
  ItemId current = 0;
  std::span<const Candidate> candidates;
  std::optional<std::size_t> chosen;
};

class WalkObserver {
 public:
  virtual ~WalkObserver() = default;
  virtual void on_round_start(UserId, const InitialChoice&) {}
  virtual void on_step(const WalkStep&) {}
  virtual void on_round_end(UserId) {}
};

struct WalkResult {
  std::vector<AugmentedEdge> edges;  // grouped by user, in walk order
  BipartiteGraph augmented;          // interaction edges (weight t) plus walk edges
};

/// Precomputed per-dataset structures for running walks.
class WalkEngine {
 public:
  WalkEngine(const Dataset& dataset, const InterestAssignment& assignment, WalkConfig config);

  const WalkConfig& config() const { return config_; }
  const Dataset& dataset() const { return dataset_; }
  std::span<const ItemId> strong_items(UserId u) const { return strong_items_[u]; }
  const std::vector<Candidate>& candidates_of(ItemId i) const { return candidates_[i]; }

  /// One exploration round for user u, appending new edges to `out`.
  void run_round(UserId u, WalkState& state, Rng& rng, std::vector<AugmentedEdge>& out,
                 WalkObserver* observer = nullptr) const;

  /// All rounds for user u from a fresh state, using the user's own stream.
  std::vector<AugmentedEdge> walk_user(UserId u, WalkObserver* observer = nullptr) const;

  /// Walks for every user. An observer forces sequential execution.
  WalkResult run(WalkObserver* observer = nullptr) const;

 private:
  Dataset dataset_;
  WalkConfig config_;
  InterestSimilarity interest_;
  std::vector<std::vector<Candidate>> candidates_;
  std::vector<std::vector<ItemId>> user_items_;  // sorted
  std::vector<std::vector<ItemId>> strong_items_;
  std::vector<std::vector<double>> strong_playtime_;
};

/// Builds the augmented graph: interaction edges weighted by normalized
/// playtime plus the walk edges.
BipartiteGraph augmented_graph(const Dataset& dataset, std::span<const AugmentedEdge> edges);

/// run_walks = WalkEngine(...).run().
WalkResult run_walks(const Dataset& dataset, const InterestAssignment& assignment,
                     const WalkConfig& config);

}  // namespace playrec
