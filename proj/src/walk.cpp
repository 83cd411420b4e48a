#include "playrec/walk.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

namespace playrec {

void WalkConfig::validate() const {
  if (max_walk_length < 1) throw DomainError("WalkConfig: max_walk_length must be >= 1");
}

std::optional<InitialChoice> select_initial(std::span<const ItemId> strong_items,
                                            std::span<const double> playtime_norm,
                                            WalkState& state, Rng& rng) {
  if (strong_items.empty()) return std::nullopt;
  const double total = std::accumulate(playtime_norm.begin(), playtime_norm.end(), 0.0);
  std::size_t pick = strong_items.size() - 1;
  if (total > 0.0) {
    const double r = uniform01(rng) * total;
    double acc = 0.0;
    for (std::size_t k = 0; k < strong_items.size(); ++k) {
      acc += playtime_norm[k];
      if (r < acc) {
        pick = k;
        break;
      }
    }
  } else {
    pick = uniform_index(rng, strong_items.size());
  }
  InitialChoice choice{strong_items[pick], strong_items[pick], playtime_norm[pick]};
  const bool seen = !state.used_initial.insert(choice.initial).second;
  if (seen) {
    auto it = state.added_by_init.find(choice.initial);
    if (it != state.added_by_init.end() && !it->second.empty()) {
      choice.start = it->second[uniform_index(rng, it->second.size())];
      choice.start_weight = state.added_weight.at(choice.start);
    }
  }
  return choice;
}

std::vector<Candidate> candidate_set(ItemId current, const CategoryIndex& categories,
                                     const Matrix& modal) {
  std::vector<Candidate> out;
  const auto x = modal.row(current);
  for (CategoryId c = 0; c < categories.num_categories(); ++c) {
    std::optional<Candidate> best;
    for (ItemId j : categories.items_in(c)) {  // ascending ids: strict > keeps the smaller on ties
      if (j == current) continue;
      const double s = cosine(x, modal.row(j));
      if (!best || s > best->sim_m) best = Candidate{j, c, s};
    }
    if (!best) continue;
    const bool dup = std::any_of(out.begin(), out.end(),
                                 [&](const Candidate& k) { return k.item == best->item; });
    if (!dup) out.push_back(*best);
  }
  return out;
}

std::vector<Candidate> filter_candidates(std::span<const Candidate> candidates,
                                         std::span<const ItemId> user_items_sorted,
                                         const WalkState& state, std::size_t Q) {
  std::vector<Candidate> out;
  for (const auto& c : candidates) {
    if (std::binary_search(user_items_sorted.begin(), user_items_sorted.end(), c.item)) continue;
    if (state.added_all.count(c.item)) continue;
    const std::size_t count =
        c.category < state.category_counts.size() ? state.category_counts[c.category] : 0;
    if (count >= Q) continue;
    // a non-positive similarity would give the edge zero path weight
    if (!(c.sim_m > 0.0)) continue;
    out.push_back(c);
  }
  return out;
}

double modal_similarity(ItemId i, ItemId j, const Matrix& modal) {
  const auto a = modal.row(i);
  const auto b = modal.row(j);
  if (squared_norm(a) == 0.0 || squared_norm(b) == 0.0)
    throw DomainError("modal_similarity: zero-norm embedding");
  return cosine(a, b);
}

double balance_coefficient(std::size_t category_count, std::size_t Q) {
  if (Q == 0) return 0.0;
  return (static_cast<double>(Q) - static_cast<double>(category_count)) / static_cast<double>(Q);
}

InterestSimilarity::InterestSimilarity(const Dataset& dataset,
                                       const InterestAssignment& assignment)
    : players_(dataset.num_items) {
  if (assignment.gamma.size() != dataset.records.size())
    throw DataError("InterestSimilarity: assignment does not cover the dataset");
  for (std::size_t k = 0; k < dataset.records.size(); ++k)
    players_[dataset.records[k].item].emplace_back(dataset.records[k].user, assignment.gamma[k]);
  for (auto& p : players_) std::sort(p.begin(), p.end());
}

double InterestSimilarity::compute(ItemId i, ItemId j) const {
  const auto& a = players_.at(i);
  const auto& b = players_.at(j);
  double diff = 0.0;
  std::size_t shared = 0;
  std::size_t x = 0, y = 0;
  while (x < a.size() && y < b.size()) {
    if (a[x].first < b[y].first) {
      ++x;
    } else if (b[y].first < a[x].first) {
      ++y;
    } else {
      diff += std::fabs(a[x].second - b[y].second);
      ++shared;
      ++x;
      ++y;
    }
  }
  if (shared == 0) return 0.0;
  return 1.0 - diff / static_cast<double>(shared);
}

double InterestSimilarity::operator()(ItemId i, ItemId j) const {
  const std::uint64_t key =
      (static_cast<std::uint64_t>(std::min(i, j)) << 32) | std::max(i, j);
  {
    std::shared_lock lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  const double v = compute(i, j);
  std::unique_lock lock(mutex_);
  cache_.emplace(key, v);
  return v;
}

void score_candidates(std::span<Candidate> candidates) {
  if (candidates.empty()) return;
  auto normalize = [&](auto get) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& c : candidates) {
      lo = std::min(lo, get(c));
      hi = std::max(hi, get(c));
    }
    std::vector<double> out(candidates.size(), 1.0);
    if (hi > lo)
      for (std::size_t k = 0; k < candidates.size(); ++k)
        out[k] = (get(candidates[k]) - lo) / (hi - lo);
    return out;
  };
  const auto m = normalize([](const Candidate& c) { return std::max(c.sim_m, 0.0); });
  const auto t = normalize([](const Candidate& c) { return c.sim_t; });
  const auto w = normalize([](const Candidate& c) { return c.balance; });
  for (std::size_t k = 0; k < candidates.size(); ++k)
    candidates[k].score = (m[k] + t[k] + w[k]) / 3.0;
}

std::optional<std::size_t> sample_next(std::span<const Candidate> candidates, Rng& rng) {
  double total = 0.0;
  for (const auto& c : candidates) total += c.score;
  if (candidates.empty() || !(total > 0.0)) return std::nullopt;
  const double r = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (candidates[k].score <= 0.0) continue;
    acc += candidates[k].score;
    last_positive = k;
    if (r < acc) return k;
  }
  return last_positive;
}

double path_weight(double initial_playtime_norm, std::span<const double> path_similarities) {
  double w = initial_playtime_norm;
  for (double s : path_similarities) w *= std::clamp(s, 0.0, 1.0);
  return w;
}

WalkEngine::WalkEngine(const Dataset& dataset, const InterestAssignment& assignment,
                       WalkConfig config)
    : dataset_(dataset), config_(config), interest_(dataset, assignment) {
  config_.validate();
  if (!dataset.categories || !dataset.modal)
    throw DataError("WalkEngine: dataset lacks categories or modal embeddings");
  candidates_.resize(dataset.num_items);
  parallel_for(dataset.num_items, config_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      candidates_[i] = candidate_set(static_cast<ItemId>(i), *dataset.categories, *dataset.modal);
  });
  user_items_.resize(dataset.num_users);
  strong_items_.resize(dataset.num_users);
  strong_playtime_.resize(dataset.num_users);
  for (std::size_t k = 0; k < dataset.records.size(); ++k) {
    const auto& r = dataset.records[k];
    user_items_[r.user].push_back(r.item);
    if (assignment.strong(k)) {
      strong_items_[r.user].push_back(r.item);
      strong_playtime_[r.user].push_back(r.playtime_norm);
    }
  }
  for (auto& v : user_items_) std::sort(v.begin(), v.end());
}

void WalkEngine::run_round(UserId u, WalkState& state, Rng& rng, std::vector<AugmentedEdge>& out,
                           WalkObserver* observer) const {
  auto choice = select_initial(strong_items_[u], strong_playtime_[u], state, rng);
  if (!choice) return;
  if (observer) observer->on_round_start(u, *choice);
  ItemId current = choice->start;
  double weight = choice->start_weight;
  const Matrix& modal = *dataset_.modal;
  for (std::size_t step = 0; step < config_.max_walk_length; ++step) {
    auto cands = filter_candidates(candidates_[current], user_items_[u], state, config_.Q);
    for (auto& c : cands) {
      c.sim_t = interest_(current, c.item);
      c.balance = balance_coefficient(state.category_counts[c.category], config_.Q);
    }
    score_candidates(cands);
    const auto pick = sample_next(cands, rng);
    if (observer) observer->on_step({u, current, cands, pick});
    if (!pick) break;
    const Candidate& next = cands[*pick];
    const double sim = modal_similarity(current, next.item, modal);
    weight = path_weight(weight, std::span<const double>(&sim, 1));
    out.push_back({u, next.item, weight, next.category, current});
    state.added_all.insert(next.item);
    state.added_by_init[choice->initial].push_back(next.item);
    state.added_weight[next.item] = weight;
    ++state.category_counts[next.category];
    current = next.item;
  }
  if (observer) observer->on_round_end(u);
}

std::vector<AugmentedEdge> WalkEngine::walk_user(UserId u, WalkObserver* observer) const {
  std::vector<AugmentedEdge> out;
  const std::size_t rounds = config_.rounds_per_user.value_or(
      std::min(strong_items_[u].size(), config_.rounds_cap));
  if (strong_items_[u].empty() || rounds == 0) return out;
  WalkState state(dataset_.categories->num_categories());
  auto rng = make_rng(config_.seed, "mrw", u);
  for (std::size_t r = 0; r < rounds; ++r) run_round(u, state, rng, out, observer);
  return out;
}

WalkResult WalkEngine::run(WalkObserver* observer) const {
  std::vector<std::vector<AugmentedEdge>> per_user(dataset_.num_users);
  const std::size_t threads = observer ? 1 : config_.threads;
  parallel_for(dataset_.num_users, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u)
      per_user[u] = walk_user(static_cast<UserId>(u), observer);
  });
  WalkResult result;
  for (auto& v : per_user) result.edges.insert(result.edges.end(), v.begin(), v.end());
  result.augmented = augmented_graph(dataset_, result.edges);
  return result;
}

BipartiteGraph augmented_graph(const Dataset& dataset, std::span<const AugmentedEdge> edges) {
  std::vector<Edge> all;
  all.reserve(dataset.records.size() + edges.size());
  for (const auto& r : dataset.records) {
    if (!r.has_norm()) throw DataError("augmented_graph: dataset must be normalized");
    all.push_back({r.user, r.item, r.playtime_norm});
  }
  for (const auto& e : edges) all.push_back({e.user, e.item, e.weight});
  return BipartiteGraph(dataset.num_users, dataset.num_items, all);
}

WalkResult run_walks(const Dataset& dataset, const InterestAssignment& assignment,
                     const WalkConfig& config) {
  return WalkEngine(dataset, assignment, config).run();
}

}  // namespace playrec
