#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "playrec/walk.hpp"
#include "support.hpp"

using namespace playrec;
using testing::make_dataset;

namespace {

struct Fixture {
  Dataset data;
  InterestAssignment assignment;
};

Fixture synthetic(std::size_t users, std::size_t items, std::size_t cats, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_users = users;
  spec.num_items = items;
  spec.num_categories = cats;
  spec.seed = seed;
  Fixture f{generate_synthetic(spec), {}};
  f.assignment = classify_interactions(f.data, fit_users(f.data, EmConfig{}));
  return f;
}

// Checks the hard walk invariants by recounting the emitted edges.
void check_invariants(const Fixture& f, const WalkResult& r, std::size_t Q) {
  std::map<UserId, std::set<ItemId>> own, added;
  std::map<std::pair<UserId, CategoryId>, std::size_t> counts;
  for (const auto& rec : f.data.records) own[rec.user].insert(rec.item);
  for (const auto& e : r.edges) {
    CHECK_FALSE(own[e.user].count(e.item));
    CHECK(added[e.user].insert(e.item).second);
    CHECK(e.weight > 0.0);
    CHECK(e.weight <= 1.0);
    const auto& cats = f.data.categories->categories_of(e.item);
    CHECK(std::find(cats.begin(), cats.end(), e.category) != cats.end());
    ++counts[{e.user, e.category}];
  }
  for (const auto& [key, n] : counts) CHECK(n <= Q);
  CHECK(r.augmented.num_edges() == f.data.records.size() + r.edges.size());
}

}  // namespace

TEST_CASE("select_initial") {
  SUBCASE("single item") {
    Rng rng(1);
    const std::vector<ItemId> items{4};
    const std::vector<double> t{0.3};
    for (int k = 0; k < 20; ++k) {
      WalkState state(1);
      CHECK(select_initial(items, t, state, rng)->initial == 4);
    }
  }
  SUBCASE("proportional to playtime") {
    Rng rng(2);
    const std::vector<ItemId> items{0, 1};
    const std::vector<double> t{0.2, 0.8};
    const int n = 20000;
    int second = 0;
    for (int k = 0; k < n; ++k) {
      WalkState state(1);
      second += select_initial(items, t, state, rng)->initial == 1;
    }
    const double sigma = std::sqrt(0.8 * 0.2 / n);
    CHECK(std::fabs(static_cast<double>(second) / n - 0.8) < 3 * sigma);
  }
  SUBCASE("revisit restarts from an added item") {
    Rng rng(3);
    const std::vector<ItemId> items{2};
    const std::vector<double> t{0.5};
    WalkState state(1);
    CHECK(select_initial(items, t, state, rng)->start == 2);
    state.added_by_init[2] = {7};
    state.added_weight[7] = 0.25;
    const auto again = select_initial(items, t, state, rng);
    CHECK(again->initial == 2);
    CHECK(again->start == 7);
    CHECK(again->start_weight == 0.25);
  }
  SUBCASE("empty strong set") {
    Rng rng(4);
    WalkState state(1);
    CHECK_FALSE(select_initial({}, {}, state, rng).has_value());
  }
}

TEST_CASE("candidate_set matches an exhaustive scan (property)") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t items = 2 + uniform_index(rng, 10), cats = 1 + uniform_index(rng, 4);
    std::vector<std::pair<ItemId, CategoryId>> members;
    for (ItemId i = 0; i < items; ++i) {
      members.push_back({i, static_cast<CategoryId>(uniform_index(rng, cats))});
      if (uniform01(rng) < 0.3) members.push_back({i, static_cast<CategoryId>(uniform_index(rng, cats))});
    }
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    const CategoryIndex index(items, cats, members);
    Matrix modal = testing::random_matrix(items, 3, rng);
    // duplicate a row now and then to exercise ties
    if (items > 3) std::copy(modal.row(1).begin(), modal.row(1).end(), modal.row(2).begin());
    const ItemId current = static_cast<ItemId>(uniform_index(rng, items));

    std::vector<std::pair<ItemId, CategoryId>> expected;
    std::set<ItemId> seen;
    for (CategoryId c = 0; c < cats; ++c) {
      std::optional<ItemId> best;
      double best_s = 0.0;
      for (ItemId j = 0; j < items; ++j) {
        const auto& cj = index.categories_of(j);
        if (j == current || std::find(cj.begin(), cj.end(), c) == cj.end()) continue;
        const double s = cosine(modal.row(current), modal.row(j));
        if (!best || s > best_s) best = j, best_s = s;
      }
      if (best && seen.insert(*best).second) expected.push_back({*best, c});
    }
    const auto got = candidate_set(current, index, modal);
    REQUIRE(got.size() == expected.size());
    CHECK(got.size() <= cats);
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(got[k].item == expected[k].first);
      CHECK(got[k].category == expected[k].second);
    }
  }
}

TEST_CASE("candidate_set: sole member contributes nothing") {
  const CategoryIndex index(2, 2, {{0, 0}, {0, 1}, {1, 1}});
  Matrix modal(2, 2, 1.0);
  CHECK(candidate_set(1, index, modal).size() == 1);
  const CategoryIndex alone(1, 2, {{0, 0}, {0, 1}});
  CHECK(candidate_set(0, alone, Matrix(1, 2, 1.0)).empty());
}

TEST_CASE("filter_candidates") {
  std::vector<Candidate> cands{{1, 0, 0.5}, {2, 1, 0.5}, {3, 2, 0.5}, {4, 0, 0.5}};
  WalkState state(3);
  state.category_counts = {1, 2, 0};
  state.added_all.insert(4);
  const std::vector<ItemId> user_items{3};
  const auto kept = filter_candidates(cands, user_items, state, 2);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].item == 1);  // count Q-1 retained; count Q, owned and added removed
  CHECK(filter_candidates(cands, user_items, state, 0).empty());
}

TEST_CASE("similarity, balance and weight examples") {
  Matrix modal(4, 2);
  modal(0, 0) = 1.0;
  modal(1, 0) = modal(1, 1) = 1.0 / std::sqrt(2.0);
  modal(2, 1) = 3.0;
  modal(3, 0) = 2.0;
  CHECK(modal_similarity(0, 1, modal) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(modal_similarity(0, 2, modal) == doctest::Approx(0.0));
  CHECK(modal_similarity(0, 3, modal) == doctest::Approx(1.0));

  CHECK(balance_coefficient(0, 1) == 1.0);
  CHECK(balance_coefficient(1, 3) == doctest::Approx(2.0 / 3.0));
  CHECK(balance_coefficient(3, 3) == 0.0);

  CHECK(path_weight(0.7, {}) == doctest::Approx(0.7));
  const std::vector<double> sims{0.9, 0.5};
  CHECK(path_weight(0.8, sims) == doctest::Approx(0.36));
  const std::vector<double> ones{1.0, 1.0, 1.0};
  CHECK(path_weight(0.6, ones) == doctest::Approx(0.6));
  const std::vector<double> negative{-0.4};
  CHECK(path_weight(0.6, negative) == 0.0);
}

TEST_CASE("interest similarity") {
  // users 0 and 1 both played items 0 and 1; user 2 played items 2 and 3
  const auto ds = make_dataset(3, 5, {{0, 0, 0.5}, {0, 1, 0.5}, {1, 0, 0.5}, {1, 1, 0.5}, {2, 2, 0.5}, {2, 3, 0.5}},
                               {{0, 0}}, 1);
  InterestAssignment a;
  a.gamma = {0.8, 0.6, 0.4, 0.9, 1.0, 0.0};
  for (double g : a.gamma) a.label.push_back(label_for(g));
  const InterestSimilarity sim(ds, a);
  CHECK(sim(0, 1) == doctest::Approx(0.65));
  CHECK(sim(1, 0) == doctest::Approx(0.65));
  CHECK(sim(2, 3) == doctest::Approx(0.0));
  CHECK(sim(0, 4) == 0.0);  // no co-players
  CHECK(sim(0, 1) == sim.compute(0, 1));
}

TEST_CASE("score_candidates") {
  SUBCASE("single candidate") {
    std::vector<Candidate> one{{1, 0, 0.3, 0.2, 0.5}};
    score_candidates(one);
    CHECK(one[0].score == 1.0);
  }
  SUBCASE("min-max example") {
    std::vector<Candidate> two{{1, 0, 0.2, 0.5, 1.0}, {2, 1, 0.8, 0.5, 1.0}};
    score_candidates(two);
    CHECK(two[0].score == doctest::Approx(2.0 / 3.0));
    CHECK(two[1].score == doctest::Approx(1.0));
  }
  SUBCASE("order independence (property)") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Candidate> c;
      for (ItemId i = 0; i < 5; ++i) c.push_back({i, 0, uniform01(rng), uniform01(rng), uniform01(rng)});
      auto reversed = c;
      std::reverse(reversed.begin(), reversed.end());
      score_candidates(c);
      score_candidates(reversed);
      for (std::size_t k = 0; k < c.size(); ++k) {
        CHECK(c[k].score == doctest::Approx(reversed[c.size() - 1 - k].score));
        CHECK(c[k].score >= 0.0);
        CHECK(c[k].score <= 1.0);
      }
      double best = 0.0;
      for (const auto& x : c) best = std::max(best, x.score);
      CHECK(best >= 1.0 / 3.0);  // the sim_m maximizer scores at least 1/3
    }
  }
}

TEST_CASE("sample_next") {
  Rng rng(7);
  CHECK_FALSE(sample_next({}, rng).has_value());
  std::vector<Candidate> zero{{1, 0}};
  CHECK_FALSE(sample_next(zero, rng).has_value());
  std::vector<Candidate> c(2);
  c[0].score = 1.0;
  c[1].score = 3.0;
  const int n = 20000;
  int second = 0;
  for (int k = 0; k < n; ++k) second += *sample_next(c, rng) == 1;
  CHECK(std::fabs(static_cast<double>(second) / n - 0.75) < 3 * std::sqrt(0.75 * 0.25 / n));
}

TEST_CASE("run_walks") {
  const auto f = synthetic(60, 40, 5, 8);

  SUBCASE("Q = 0 adds nothing") {
    WalkConfig cfg;
    cfg.Q = 0;
    const auto r = run_walks(f.data, f.assignment, cfg);
    CHECK(r.edges.empty());
    CHECK(r.augmented.num_edges() == f.data.records.size());
  }
  SUBCASE("invariants hold for Q in 1..3") {
    for (std::size_t Q = 1; Q <= 3; ++Q) {
      WalkConfig cfg;
      cfg.Q = Q;
      cfg.seed = 100 + Q;
      const auto r = run_walks(f.data, f.assignment, cfg);
      CHECK_FALSE(r.edges.empty());
      check_invariants(f, r, Q);
    }
  }
  SUBCASE("identical across thread counts and runs") {
    WalkConfig cfg;
    cfg.Q = 2;
    cfg.seed = 9;
    const auto base = run_walks(f.data, f.assignment, cfg).edges;
    CHECK(run_walks(f.data, f.assignment, cfg).edges == base);
    for (std::size_t t : {4, 8}) {
      cfg.threads = t;
      CHECK(run_walks(f.data, f.assignment, cfg).edges == base);
    }
  }
  SUBCASE("bad config") {
    WalkConfig cfg;
    cfg.max_walk_length = 0;
    CHECK_THROWS(run_walks(f.data, f.assignment, cfg));
  }
}
