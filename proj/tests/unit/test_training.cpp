#include <cmath>

#include "doctest.h"
#include "playrec/training.hpp"
#include "playrec/walk.hpp"
#include "support.hpp"

using namespace playrec;
using testing::random_matrix;

namespace {

struct Problem {
  TrainingGraphs graphs;
  std::vector<std::vector<ItemId>> positives;
  std::size_t users = 0, items = 0;
};

BipartiteGraph random_graph(Rng& rng, std::size_t nu, std::size_t ni, double p, bool weighted) {
  std::vector<Edge> edges;
  for (UserId u = 0; u < nu; ++u)
    for (ItemId i = 0; i < ni; ++i)
      if (uniform01(rng) < p) edges.push_back({u, i, weighted ? 0.1 + 0.9 * uniform01(rng) : 1.0});
  return BipartiteGraph(nu, ni, edges);
}

// Training setup on a synthetic dataset, graphs built the way the pipeline does.
Problem synthetic_problem(std::size_t users, std::size_t items, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_users = users;
  spec.num_items = items;
  spec.seed = seed;
  const auto ds = generate_synthetic(spec);
  const auto a = classify_interactions(ds, fit_users(ds, EmConfig{}));
  auto views = build_graph_views(ds, a);
  WalkConfig wc;
  wc.seed = seed;
  Problem p;
  p.graphs = {views.full, views.strong, run_walks(ds, a, wc).augmented};
  p.positives.resize(users);
  for (const auto& r : ds.records) p.positives[r.user].push_back(r.item);
  for (auto& v : p.positives) std::sort(v.begin(), v.end());
  p.users = users;
  p.items = items;
  return p;
}

double max_relative_error(Matrix& m, const Matrix& analytic, const std::function<double()>& loss) {
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double keep = m.data()[k];
    m.data()[k] = keep + h;
    const double up = loss();
    m.data()[k] = keep - h;
    const double down = loss();
    m.data()[k] = keep;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::fabs(numeric - analytic.data()[k]) /
                                std::max(1e-6, std::fabs(numeric) + std::fabs(analytic.data()[k])));
  }
  return worst;
}

}  // namespace

TEST_CASE("fusion") {
  Matrix a(1, 2), b(1, 2);
  a(0, 0) = 1.0;
  a(0, 1) = 2.0;
  b(0, 0) = 0.5;
  const auto e = fuse_embeddings({a, a}, {b, b}, 0.6);
  CHECK(e.users(0, 0) == doctest::Approx(1.1));
  CHECK(e.users(0, 1) == doctest::Approx(1.2));
  CHECK(fuse_embeddings({a, a}, {Matrix(1, 2), Matrix(1, 2)}, 1.0) == EmbeddingPair{a, a});
  CHECK(fuse_embeddings({a, a}, {b, b}, 0.0) == EmbeddingPair{b, b});
  CHECK_THROWS(fuse_embeddings({a, a}, {Matrix(1, 3), Matrix(1, 3)}, 0.5));

  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingPair x{random_matrix(3, 2, rng), random_matrix(4, 2, rng)};
    const EmbeddingPair y{random_matrix(3, 2, rng), random_matrix(4, 2, rng)};
    const double s = 3 * uniform01(rng), alpha = 2 * uniform01(rng);
    EmbeddingPair sx = x, sy = y;
    for (auto& v : sx.users.data()) v *= s;
    for (auto& v : sx.items.data()) v *= s;
    for (auto& v : sy.users.data()) v *= s;
    for (auto& v : sy.items.data()) v *= s;
    const auto lhs = fuse_embeddings(sx, sy, alpha), rhs = fuse_embeddings(x, y, alpha);
    for (std::size_t k = 0; k < lhs.users.size(); ++k)
      CHECK(lhs.users.data()[k] == doctest::Approx(s * rhs.users.data()[k]));
  }
}

TEST_CASE("reweighted score") {
  CHECK(reweighted_score(1.0, 1.0, 1.0) == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(reweighted_score(0.0, 5.0, 3.0) == 0.0);
  Rng rng(62);
  for (int k = 0; k < 50; ++k) {
    const double s = 6 * uniform01(rng) - 3, K = 0.5 + 2 * uniform01(rng), zeta = 3 * uniform01(rng);
    CHECK(std::fabs(reweighted_score(s, 1e-8, K) - s * K / 2) < 1e-6);
    const double h = 1e-6;
    const double numeric = (reweighted_score(s + h, zeta, K) - reweighted_score(s - h, zeta, K)) / (2 * h);
    CHECK(reweighted_score_derivative(s, zeta, K, false) == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("balance loss") {
  BalanceConfig cfg;
  const EmbeddingPair fused{Matrix(1, 2, 1.0), Matrix(2, 2, 0.0)};
  const std::vector<Triplet> t{{0, 0, 1}};
  const auto r = balance_loss(fused, t, cfg);
  CHECK(r.loss == doctest::Approx(std::log(2.0)));

  // gradient against finite differences, both reweighting modes
  Rng rng(63);
  for (bool detach : {false, true}) {
    cfg.detach_reweight = detach;
    cfg.zeta = 0.7;
    cfg.k_scale = 1.3;
    EmbeddingPair e{random_matrix(3, 4, rng), random_matrix(5, 4, rng)};
    const std::vector<Triplet> ts{{0, 1, 2}, {1, 0, 4}, {2, 3, 1}, {0, 4, 3}};
    const auto res = balance_loss(e, ts, cfg);
    if (!detach) {
      auto loss = [&] { return balance_loss(e, ts, cfg).loss; };
      CHECK(max_relative_error(e.users, res.grad.users, loss) < 1e-4);
      CHECK(max_relative_error(e.items, res.grad.items, loss) < 1e-4);
    }
    CHECK(std::isfinite(res.loss));
  }
}

TEST_CASE("scores are bilinear") {
  Rng rng(64);
  EmbeddingPair e{random_matrix(2, 3, rng), random_matrix(2, 3, rng)};
  const double s = dot(e.users.row(0), e.items.row(1));
  for (auto& v : e.users.row(0)) v *= 2.5;
  CHECK(dot(e.users.row(0), e.items.row(1)) == doctest::Approx(2.5 * s));
}

TEST_CASE("joint gradient matches finite differences") {
  Rng rng(65);
  for (bool share : {false, true}) {
    Problem p;
    p.users = p.items = 5;
    p.graphs.full = random_graph(rng, 5, 5, 0.6, false);
    p.graphs.strong = random_graph(rng, 5, 5, 0.4, false);
    p.graphs.augmented = random_graph(rng, 5, 5, 0.7, true);
    TrainConfig cfg;
    cfg.gcn.dim = 3;
    cfg.gcn.num_layers = 2;
    cfg.balance.share_base = share;
    cfg.ssl.tau = 0.5;
    cfg.balance.ssl_weight = 0.3;
    ModelState state = init_model(5, 5, cfg);
    // larger values than the default init keep the differences well above rounding
    for (auto* m : {&state.iie.users, &state.iie.items, &state.mrw.users, &state.mrw.items})
      *m = random_matrix(m->rows(), m->cols(), rng);
    const std::vector<Triplet> t{{0, 1, 2}, {1, 3, 0}, {2, 4, 1}, {3, 0, 4}, {4, 2, 3}};
    const Objective obj = objective(state, p.graphs, t, cfg);
    auto loss = [&] { return objective(state, p.graphs, t, cfg).total; };
    CHECK(max_relative_error(state.iie.users, obj.grad_iie.users, loss) < 1e-4);
    CHECK(max_relative_error(state.iie.items, obj.grad_iie.items, loss) < 1e-4);
    if (!share) {
      CHECK(max_relative_error(state.mrw.users, obj.grad_mrw.users, loss) < 1e-4);
      CHECK(max_relative_error(state.mrw.items, obj.grad_mrw.items, loss) < 1e-4);
    }
    CHECK(obj.total == doctest::Approx(obj.balance + cfg.balance.ssl_weight * obj.ssl));
  }
}

TEST_CASE("training runs") {
  const auto p = synthetic_problem(50, 30, 7);
  TrainConfig cfg;
  cfg.gcn.dim = 16;
  cfg.balance.seed = 7;

  SUBCASE("loss decreases over the first epochs") {
    ModelState s = init_model(p.users, p.items, cfg);
    train_model(s, p.graphs, p.positives, cfg);
    REQUIRE(s.loss_history.size() == 20);
    for (std::size_t e = 1; e < 5; ++e) CHECK(s.loss_history[e] < s.loss_history[e - 1]);
    CHECK(s.epoch == 20);
  }
  SUBCASE("zero learning rate changes nothing") {
    cfg.balance.learning_rate = 0.0;
    cfg.balance.resample_negatives = false;
    cfg.balance.epochs = 4;
    ModelState s = init_model(p.users, p.items, cfg);
    const ModelState before = s;
    train_model(s, p.graphs, p.positives, cfg);
    CHECK(s.iie == before.iie);
    CHECK(s.mrw == before.mrw);
    // same triplets every epoch; only the shuffled summation order differs
    for (double l : s.loss_history) CHECK(l == doctest::Approx(s.loss_history[0]).epsilon(1e-12));
  }
  SUBCASE("resuming matches an uninterrupted run") {
    cfg.balance.epochs = 4;
    ModelState whole = init_model(p.users, p.items, cfg);
    train_model(whole, p.graphs, p.positives, cfg);
    TrainConfig half = cfg;
    half.balance.epochs = 2;
    ModelState resumed = init_model(p.users, p.items, cfg);
    train_model(resumed, p.graphs, p.positives, half);
    train_model(resumed, p.graphs, p.positives, cfg);
    CHECK(resumed == whole);
  }
  SUBCASE("checkpoint round trip is exact") {
    cfg.balance.epochs = 2;
    ModelState s = init_model(p.users, p.items, cfg);
    train_model(s, p.graphs, p.positives, cfg);
    testing::TempDir dir("ckpt");
    save_checkpoint(dir.path(), s, "{}");
    CHECK(checkpoint_exists(dir.path()));
    const ModelState loaded = load_checkpoint(dir.path());
    CHECK(loaded == s);
    CHECK(final_embeddings(loaded, p.graphs, cfg) == final_embeddings(s, p.graphs, cfg));
  }
  SUBCASE("missing checkpoint") {
    testing::TempDir dir("none");
    CHECK_FALSE(checkpoint_exists(dir.path()));
    CHECK_THROWS_WITH_AS(load_checkpoint(dir.path()), doctest::Contains("no model found in"), DataError);
  }
  SUBCASE("empty training split") {
    ModelState s = init_model(p.users, p.items, cfg);
    const std::vector<std::vector<ItemId>> none(p.users);
    CHECK_THROWS_AS(train_model(s, p.graphs, none, cfg), DataError);
  }
}

TEST_CASE("sampled negatives avoid positives") {
  Rng rng(66);
  const std::vector<std::vector<ItemId>> pos{{0, 2}, {}, {1, 3, 4}};
  const auto t = sample_triplets(pos, 6, 3, rng);
  CHECK(t.size() == 15);
  for (const auto& x : t) {
    const auto& p = pos[x.user];
    CHECK(std::binary_search(p.begin(), p.end(), x.positive));
    CHECK_FALSE(std::binary_search(p.begin(), p.end(), x.negative));
  }
}

TEST_CASE("presets") {
  CHECK(preset_values(Preset::accuracy).alpha == 1.6);
  CHECK(preset_values(Preset::accuracy).Q == 4);
  CHECK(preset_values(Preset::diversity).alpha == 0.4);
  CHECK(preset_values(Preset::trade_off).Q == 1);
}
