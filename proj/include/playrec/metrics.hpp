#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "playrec/dataio.hpp"
#include "playrec/propagation.hpp"

namespace playrec {

/// Top-K item ids by score, skipping `excluded_sorted`; ties go to the
/// smaller id. Shorter than K when fewer items are eligible.
std::vector<ItemId> top_k(std::span<const double> scores, std::size_t K,
                          std::span<const ItemId> excluded_sorted);

/// Ranks every item for one user by e_u . e_i.
std::vector<ItemId> rank_items(const EmbeddingPair& embeddings, UserId user, std::size_t K,
                               std::span<const ItemId> excluded_sorted);

struct MetricValues {
  double ndcg = 0.0;
  double recall = 0.0;
  double hit_ratio = 0.0;
  double precision = 0.0;
  double coverage = 0.0;

  friend bool operator==(const MetricValues&, const MetricValues&) = default;
};

/// Metrics of one ranked list cut at K.
MetricValues user_metrics(std::span<const ItemId> ranked, std::span<const ItemId> test_items,
                          const CategoryIndex& categories, std::size_t K);

struct MetricsReport {
  std::map<std::size_t, MetricValues> by_k;  // per-user means
  std::size_t users = 0;                     // users with a non-empty test set
};

/// ranked[u] and test[u] per user; users without test items are excluded.
MetricsReport compute_metrics(const std::vector<std::vector<ItemId>>& ranked,
                              const std::vector<std::vector<ItemId>>& test,
                              const CategoryIndex& categories, std::span<const std::size_t> ks);

/// Full ranking over non-train items for every user, then compute_metrics.
MetricsReport evaluate(const EmbeddingPair& embeddings, const Dataset& train, const Dataset& test,
                       std::span<const std::size_t> ks, std::size_t threads = 1);

std::string format_metrics_table(const MetricsReport& report);
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);

struct CategoryOverlap {
  CategoryId category = 0;
  double exact = 0.0;
  double partial = 0.0;
  double disjoint = 0.0;
  std::size_t items = 0;
};

/// For every non-empty category: over its items, the fractions of the top-N
/// modal neighbors whose category set equals, intersects, or misses the
/// query item's set, averaged over the items.
std::vector<CategoryOverlap> modal_category_analysis(const Matrix& modal,
                                                     const CategoryIndex& categories,
                                                     std::size_t top_n = 10,
                                                     std::size_t threads = 1);

void write_analysis_csv(std::span<const CategoryOverlap> rows, const CategoryIndex& categories,
                        const std::filesystem::path& path);

}  // namespace playrec
