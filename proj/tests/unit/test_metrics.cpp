#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "playrec/metrics.hpp"
#include "support.hpp"

using namespace playrec;

namespace {

double dcg(std::span<const ItemId> list, const std::set<ItemId>& relevant, std::size_t K) {
  double s = 0.0;
  for (std::size_t r = 0; r < std::min(K, list.size()); ++r)
    if (relevant.count(list[r])) s += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return s;
}

}  // namespace

TEST_CASE("ranking examples") {
  const std::vector<double> scores{2.0, 5.0, 1.0};
  CHECK(top_k(scores, 2, {}) == std::vector<ItemId>{1, 0});
  CHECK(top_k(scores, 10, {}) == std::vector<ItemId>{1, 0, 2});
  const std::vector<ItemId> excluded{1};
  CHECK(top_k(scores, 2, excluded) == std::vector<ItemId>{0, 2});

  std::vector<double> ties(8, 0.0);
  ties[7] = ties[3] = 1.0;
  CHECK(top_k(ties, 2, {}) == std::vector<ItemId>{3, 7});

  Matrix u(1, 1, 1.0), it(3, 1);
  it(0, 0) = 2.0;
  it(1, 0) = 5.0;
  it(2, 0) = 1.0;
  CHECK(rank_items({u, it}, 0, 2, {}) == std::vector<ItemId>{1, 0});
}

TEST_CASE("metric examples") {
  const CategoryIndex cats(4, 3, {{0, 1}, {1, 0}, {2, 1}, {2, 2}, {3, 0}});
  // A = 0, B = 1, C = 2
  const std::vector<ItemId> ranked{1, 0, 2}, test{0};
  const auto m = user_metrics(ranked, test, cats, 3);
  CHECK(m.recall == 1.0);
  CHECK(m.precision == doctest::Approx(1.0 / 3.0));
  CHECK(m.hit_ratio == 1.0);
  CHECK(m.ndcg == doctest::Approx(0.63093).epsilon(1e-5));
  CHECK(m.coverage == 3.0);

  const std::vector<ItemId> perfect{0, 2, 1}, test2{2, 0};
  CHECK(user_metrics(perfect, test2, cats, 3).ndcg == doctest::Approx(1.0));

  const std::vector<std::vector<ItemId>> lists{ranked, ranked, ranked};
  const std::vector<std::vector<ItemId>> tests{test, {}, {3}};
  const std::vector<std::size_t> ks{1, 3};
  const auto report = compute_metrics(lists, tests, cats, ks);
  CHECK(report.users == 2);
  CHECK(report.by_k.at(3).hit_ratio == doctest::Approx(0.5));
  CHECK(report.by_k.at(1).coverage == doctest::Approx(1.0));
}

TEST_CASE("metrics match a brute-force oracle (property)") {
  Rng rng(71);
  const std::size_t n = 6;
  std::vector<std::pair<ItemId, CategoryId>> members;
  for (ItemId i = 0; i < n; ++i) members.push_back({i, static_cast<CategoryId>(i % 3)});
  const CategoryIndex cats(n, 3, members);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ItemId> ranking(n);
    std::iota(ranking.begin(), ranking.end(), 0);
    for (std::size_t k = n; k > 1; --k) std::swap(ranking[k - 1], ranking[uniform_index(rng, k)]);
    std::set<ItemId> relevant;
    while (relevant.empty())
      for (ItemId i = 0; i < n; ++i)
        if (uniform01(rng) < 0.3) relevant.insert(i);
    const std::vector<ItemId> test(relevant.begin(), relevant.end());
    const std::size_t K = 1 + uniform_index(rng, n);

    // ideal DCG: best over every ordering of the item set
    std::vector<ItemId> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double ideal = 0.0;
    do ideal = std::max(ideal, dcg(perm, relevant, K));
    while (std::next_permutation(perm.begin(), perm.end()));

    std::size_t hits = 0;
    for (std::size_t r = 0; r < K; ++r) hits += relevant.count(ranking[r]);
    const auto m = user_metrics(ranking, test, cats, K);
    CHECK(m.ndcg == doctest::Approx(dcg(ranking, relevant, K) / ideal).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(static_cast<double>(hits) / test.size()));
    CHECK(m.precision == doctest::Approx(static_cast<double>(hits) / K));
    CHECK(m.hit_ratio == (hits > 0 ? 1.0 : 0.0));
    CHECK(m.coverage <= std::min<double>(K, 3));

    if (K < n) {
      const auto next = user_metrics(ranking, test, cats, K + 1);
      CHECK(next.recall >= m.recall);
      CHECK(next.hit_ratio >= m.hit_ratio);
    }
  }
}

TEST_CASE("evaluate ranks over non-train items") {
  const auto train = testing::make_dataset(1, 3, {{0, 1, 0.5}}, {{0, 0}, {1, 0}, {2, 0}}, 1);
  const auto test = testing::make_dataset(1, 3, {{0, 0, 0.5}}, {{0, 0}, {1, 0}, {2, 0}}, 1);
  Matrix u(1, 1, 1.0), it(3, 1);
  it(0, 0) = 1.0;
  it(1, 0) = 9.0;  // train item, never ranked
  it(2, 0) = 2.0;
  const std::vector<std::size_t> ks{1, 2};
  const auto r = evaluate({u, it}, train, test, ks);
  CHECK(r.by_k.at(1).hit_ratio == 0.0);
  CHECK(r.by_k.at(2).ndcg == doctest::Approx(1.0 / std::log2(3.0)));

  testing::TempDir dir("metrics");
  write_metrics_csv(r, dir.path() / "m" / "metrics.csv");
  std::ifstream in(dir.path() / "m" / "metrics.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "metric,K,value");
  CHECK(format_metrics_table(r).find("NDCG") != std::string::npos);
}

TEST_CASE("modal category analysis") {
  SUBCASE("one shared category is all exact") {
    Rng rng(72);
    const CategoryIndex cats(6, 1, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}});
    const auto rows = modal_category_analysis(testing::random_matrix(6, 3, rng), cats, 3);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].exact == doctest::Approx(1.0));
  }
  SUBCASE("matches an exhaustive recount (property)") {
    Rng rng(73);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 12, N = 4;
      std::vector<std::pair<ItemId, CategoryId>> members;
      for (ItemId i = 0; i < n; ++i) {
        members.push_back({i, static_cast<CategoryId>(i % 3)});
        if (uniform01(rng) < 0.4) members.push_back({i, static_cast<CategoryId>((i + 1) % 3)});
      }
      const CategoryIndex cats(n, 3, members);
      const Matrix modal = testing::random_matrix(n, 4, rng);
      const auto rows = modal_category_analysis(modal, cats, N, 3);
      REQUIRE(rows.size() == 3);
      for (const auto& row : rows) {
        CHECK(std::fabs(row.exact + row.partial + row.disjoint - 1.0) < 1e-12);
        double exact = 0.0, partial = 0.0, disjoint = 0.0;
        for (ItemId i : cats.items_in(row.category)) {
          std::vector<std::pair<double, ItemId>> order;
          for (ItemId j = 0; j < n; ++j)
            if (j != i) order.push_back({-cosine(modal.row(i), modal.row(j)), j});
          std::sort(order.begin(), order.end());
          const auto& mine = cats.categories_of(i);
          for (std::size_t k = 0; k < N; ++k) {
            const auto& theirs = cats.categories_of(order[k].second);
            std::set<CategoryId> common;
            for (CategoryId c : mine)
              if (std::find(theirs.begin(), theirs.end(), c) != theirs.end()) common.insert(c);
            if (theirs == mine) exact += 1.0 / N;
            else if (!common.empty()) partial += 1.0 / N;
            else disjoint += 1.0 / N;
          }
        }
        const double k = static_cast<double>(cats.items_in(row.category).size());
        CHECK(row.exact == doctest::Approx(exact / k).epsilon(1e-12));
        CHECK(row.partial == doctest::Approx(partial / k).epsilon(1e-12));
        CHECK(row.disjoint == doctest::Approx(disjoint / k).epsilon(1e-12));
      }
    }
  }
}
