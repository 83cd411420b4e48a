#include "playrec/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace playrec {

std::vector<ItemId> top_k(std::span<const double> scores, std::size_t K,
                          std::span<const ItemId> excluded_sorted) {
  std::vector<ItemId> eligible;
  eligible.reserve(scores.size());
  for (ItemId i = 0; i < scores.size(); ++i)
    if (!std::binary_search(excluded_sorted.begin(), excluded_sorted.end(), i))
      eligible.push_back(i);
  const std::size_t k = std::min(K, eligible.size());
  auto better = [&](ItemId a, ItemId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(k),
                    eligible.end(), better);
  eligible.resize(k);
  return eligible;
}

std::vector<ItemId> rank_items(const EmbeddingPair& embeddings, UserId user, std::size_t K,
                               std::span<const ItemId> excluded_sorted) {
  const auto eu = embeddings.users.row(user);
  std::vector<double> scores(embeddings.items.rows());
  for (ItemId i = 0; i < scores.size(); ++i) scores[i] = dot(eu, embeddings.items.row(i));
  return top_k(scores, K, excluded_sorted);
}

MetricValues user_metrics(std::span<const ItemId> ranked, std::span<const ItemId> test_items,
                          const CategoryIndex& categories, std::size_t K) {
  MetricValues m;
  if (test_items.empty() || K == 0) return m;
  const std::set<ItemId> test(test_items.begin(), test_items.end());
  const std::size_t n = std::min(K, ranked.size());
  std::size_t hits = 0;
  double dcg = 0.0;
  std::set<CategoryId> covered;
  for (std::size_t r = 0; r < n; ++r) {
    if (test.count(ranked[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    const auto& cats = categories.categories_of(ranked[r]);
    covered.insert(cats.begin(), cats.end());
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(K, test.size()); ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  m.ndcg = dcg / idcg;
  m.recall = static_cast<double>(hits) / static_cast<double>(test.size());
  m.hit_ratio = hits > 0 ? 1.0 : 0.0;
  m.precision = static_cast<double>(hits) / static_cast<double>(K);
  m.coverage = static_cast<double>(covered.size());
  return m;
}

MetricsReport compute_metrics(const std::vector<std::vector<ItemId>>& ranked,
                              const std::vector<std::vector<ItemId>>& test,
                              const CategoryIndex& categories, std::span<const std::size_t> ks) {
  if (ranked.size() != test.size())
    throw DomainError("compute_metrics: ranked lists and test sets differ in length");
  MetricsReport report;
  for (std::size_t K : ks) report.by_k[K] = {};
  for (std::size_t u = 0; u < test.size(); ++u) {
    if (test[u].empty()) continue;
    ++report.users;
    for (std::size_t K : ks) {
      const MetricValues v = user_metrics(ranked[u], test[u], categories, K);
      auto& acc = report.by_k[K];
      acc.ndcg += v.ndcg;
      acc.recall += v.recall;
      acc.hit_ratio += v.hit_ratio;
      acc.precision += v.precision;
      acc.coverage += v.coverage;
    }
  }
  if (report.users > 0)
    for (auto& [K, acc] : report.by_k) {
      const auto n = static_cast<double>(report.users);
      acc.ndcg /= n;
      acc.recall /= n;
      acc.hit_ratio /= n;
      acc.precision /= n;
      acc.coverage /= n;
    }
  return report;
}

MetricsReport evaluate(const EmbeddingPair& embeddings, const Dataset& train, const Dataset& test,
                       std::span<const std::size_t> ks, std::size_t threads) {
  if (!train.categories) throw DataError("evaluate: dataset lacks categories");
  const std::size_t max_k = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  auto excluded = train.items_by_user();
  for (auto& v : excluded) std::sort(v.begin(), v.end());
  excluded.resize(train.num_users);
  auto test_items = test.items_by_user();
  test_items.resize(train.num_users);

  std::vector<std::vector<ItemId>> ranked(train.num_users);
  parallel_for(train.num_users, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u)
      if (!test_items[u].empty())
        ranked[u] = rank_items(embeddings, static_cast<UserId>(u), max_k, excluded[u]);
  });
  return compute_metrics(ranked, test_items, *train.categories, ks);
}

std::string format_metrics_table(const MetricsReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(6) << "K" << std::right << std::setw(10) << "NDCG"
      << std::setw(10) << "Recall" << std::setw(10) << "HR" << std::setw(11) << "Precision"
      << std::setw(10) << "Coverage" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& [K, v] : report.by_k)
    out << std::left << std::setw(6) << K << std::right << std::setw(10) << v.ndcg
        << std::setw(10) << v.recall << std::setw(10) << v.hit_ratio << std::setw(11)
        << v.precision << std::setw(10) << v.coverage << '\n';
  out << "users: " << report.users << '\n';
  return out.str();
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "metric,K,value\n";
  for (const auto& [K, v] : report.by_k) {
    out << "ndcg," << K << ',' << v.ndcg << '\n';
    out << "recall," << K << ',' << v.recall << '\n';
    out << "hit_ratio," << K << ',' << v.hit_ratio << '\n';
    out << "precision," << K << ',' << v.precision << '\n';
    out << "coverage," << K << ',' << v.coverage << '\n';
  }
}

std::vector<CategoryOverlap> modal_category_analysis(const Matrix& modal,
                                                     const CategoryIndex& categories,
                                                     std::size_t top_n, std::size_t threads) {
  const std::size_t n = categories.num_items();
  if (modal.rows() < n) throw DataError("modal_category_analysis: missing embeddings");
  // per item: fractions of neighbors in each overlap class
  std::vector<std::array<double, 3>> per_item(n, {0.0, 0.0, 0.0});
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> sims(n);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < n; ++j) sims[j] = cosine(modal.row(i), modal.row(j));
      const ItemId self = static_cast<ItemId>(i);
      const auto neighbors = top_k(sims, top_n, std::span<const ItemId>(&self, 1));
      if (neighbors.empty()) continue;
      const auto& mine = categories.categories_of(self);
      std::array<double, 3> counts{0.0, 0.0, 0.0};
      for (ItemId j : neighbors) {
        const auto& theirs = categories.categories_of(j);
        if (theirs == mine) {
          counts[0] += 1.0;
        } else {
          std::vector<CategoryId> common;
          std::set_intersection(mine.begin(), mine.end(), theirs.begin(), theirs.end(),
                                std::back_inserter(common));
          counts[common.empty() ? 2 : 1] += 1.0;
        }
      }
      for (auto& c : counts) c /= static_cast<double>(neighbors.size());
      per_item[i] = counts;
    }
  });

  std::vector<CategoryOverlap> out;
  for (CategoryId c = 0; c < categories.num_categories(); ++c) {
    const auto& items = categories.items_in(c);
    if (items.empty() || n < 2) continue;
    CategoryOverlap row;
    row.category = c;
    row.items = items.size();
    for (ItemId i : items) {
      row.exact += per_item[i][0];
      row.partial += per_item[i][1];
      row.disjoint += per_item[i][2];
    }
    const auto k = static_cast<double>(items.size());
    row.exact /= k;
    row.partial /= k;
    row.disjoint /= k;
    out.push_back(row);
  }
  return out;
}

void write_analysis_csv(std::span<const CategoryOverlap> rows, const CategoryIndex& categories,
                        const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "category,exact,partial,disjoint\n";
  for (const auto& r : rows) {
    const std::string name = r.category < categories.names.size() ? categories.names[r.category]
                                                                   : std::to_string(r.category);
    out << name << ',' << r.exact << ',' << r.partial << ',' << r.disjoint << '\n';
  }
}

}  // namespace playrec
