#include "playrec/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace playrec {

BipartiteGraph::BipartiteGraph(std::size_t num_users, std::size_t num_items,
                               std::span<const Edge> edges)
    : num_users_(num_users), num_items_(num_items) {
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::pair(edges[a].user, edges[a].item) < std::pair(edges[b].user, edges[b].item);
  });
  user_ptr_.assign(num_users + 1, 0);
  item_ptr_.assign(num_items + 1, 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Edge& e = edges[order[k]];
    if (e.user >= num_users || e.item >= num_items)
      throw DataError("graph edge out of range");
    if (!(std::isfinite(e.weight) && e.weight > 0.0))
      throw DataError("graph edge weight must be finite and positive");
    if (k > 0 && edges[order[k - 1]].user == e.user && edges[order[k - 1]].item == e.item)
      throw DataError("duplicate graph edge (" + std::to_string(e.user) + ", " +
                      std::to_string(e.item) + ")");
    ++user_ptr_[e.user + 1];
    ++item_ptr_[e.item + 1];
  }
  std::partial_sum(user_ptr_.begin(), user_ptr_.end(), user_ptr_.begin());
  std::partial_sum(item_ptr_.begin(), item_ptr_.end(), item_ptr_.begin());

  user_cols_.resize(edges.size());
  user_w_.resize(edges.size());
  user_coef_.resize(edges.size());
  item_cols_.resize(edges.size());
  item_w_.resize(edges.size());
  item_coef_.resize(edges.size());
  std::vector<std::size_t> item_fill(item_ptr_.begin(), item_ptr_.end() - 1);
  // Sorted by (user, item): user rows fill in order, item rows receive users ascending.
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Edge& e = edges[order[k]];
    const double coef = e.weight / std::sqrt(static_cast<double>(user_degree(e.user)) *
                                             static_cast<double>(item_degree(e.item)));
    user_cols_[k] = e.item;
    user_w_[k] = e.weight;
    user_coef_[k] = coef;
    const std::size_t slot = item_fill[e.item]++;
    item_cols_[slot] = e.user;
    item_w_[slot] = e.weight;
    item_coef_[slot] = coef;
  }
}

std::span<const ItemId> BipartiteGraph::user_neighbors(UserId u) const {
  return {user_cols_.data() + user_ptr_[u], user_degree(u)};
}
std::span<const double> BipartiteGraph::user_weights(UserId u) const {
  return {user_w_.data() + user_ptr_[u], user_degree(u)};
}
std::span<const double> BipartiteGraph::user_coefficients(UserId u) const {
  return {user_coef_.data() + user_ptr_[u], user_degree(u)};
}
std::span<const UserId> BipartiteGraph::item_neighbors(ItemId i) const {
  return {item_cols_.data() + item_ptr_[i], item_degree(i)};
}
std::span<const double> BipartiteGraph::item_weights(ItemId i) const {
  return {item_w_.data() + item_ptr_[i], item_degree(i)};
}
std::span<const double> BipartiteGraph::item_coefficients(ItemId i) const {
  return {item_coef_.data() + item_ptr_[i], item_degree(i)};
}

std::vector<Edge> BipartiteGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (UserId u = 0; u < num_users_; ++u)
    for (std::size_t k = user_ptr_[u]; k < user_ptr_[u + 1]; ++k)
      out.push_back({u, user_cols_[k], user_w_[k]});
  return out;
}

BipartiteGraph BipartiteGraph::transposed() const {
  std::vector<Edge> swapped;
  swapped.reserve(num_edges());
  for (const auto& e : edges()) swapped.push_back({e.item, e.user, e.weight});
  return BipartiteGraph(num_items_, num_users_, swapped);
}

bool BipartiteGraph::has_edge(UserId u, ItemId i) const {
  auto nb = user_neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), i);
}

std::vector<double> normalize_adjacency(const BipartiteGraph& graph) {
  std::vector<double> out;
  out.reserve(graph.num_edges());
  for (UserId u = 0; u < graph.num_users(); ++u)
    for (double c : graph.user_coefficients(u)) out.push_back(c);
  return out;
}

void GcnConfig::validate() const {
  if (num_layers < 1) throw DomainError("GcnConfig: num_layers must be >= 1");
  if (dim < 1) throw DomainError("GcnConfig: dim must be >= 1");
}

EmbeddingPair init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t dim,
                              Rng& rng) {
  EmbeddingPair e{Matrix(num_users, dim), Matrix(num_items, dim)};
  const double scale = 0.1 / std::sqrt(static_cast<double>(dim));
  // uniform on [-sqrt(3), sqrt(3)] has unit variance
  for (auto* m : {&e.users, &e.items})
    for (auto& v : m->data()) v = scale * std::sqrt(3.0) * (2.0 * uniform01(rng) - 1.0);
  return e;
}

namespace {

// One layer: out_users = C * in_items, out_items = C^T * in_users.
EmbeddingPair step(const BipartiteGraph& g, const EmbeddingPair& in, std::size_t threads) {
  const std::size_t d = in.dim();
  EmbeddingPair out{Matrix(g.num_users(), d), Matrix(g.num_items(), d)};
  parallel_for(g.num_users(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      auto dst = out.users.row(u);
      const auto nb = g.user_neighbors(static_cast<UserId>(u));
      const auto coef = g.user_coefficients(static_cast<UserId>(u));
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const auto src = in.items.row(nb[k]);
        for (std::size_t c = 0; c < d; ++c) dst[c] += coef[k] * src[c];
      }
    }
  });
  parallel_for(g.num_items(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto dst = out.items.row(i);
      const auto nb = g.item_neighbors(static_cast<ItemId>(i));
      const auto coef = g.item_coefficients(static_cast<ItemId>(i));
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const auto src = in.users.row(nb[k]);
        for (std::size_t c = 0; c < d; ++c) dst[c] += coef[k] * src[c];
      }
    }
  });
  return out;
}

void check_shapes(const BipartiteGraph& g, const EmbeddingPair& e) {
  if (e.users.rows() != g.num_users() || e.items.rows() != g.num_items() ||
      e.users.cols() != e.items.cols())
    throw DomainError("propagate: embedding tables do not match the graph");
}

void accumulate(EmbeddingPair& acc, const EmbeddingPair& add, double scale) {
  for (std::size_t k = 0; k < acc.users.size(); ++k) acc.users.data()[k] += scale * add.users.data()[k];
  for (std::size_t k = 0; k < acc.items.size(); ++k) acc.items.data()[k] += scale * add.items.data()[k];
}

}  // namespace

PropagationResult propagate(const BipartiteGraph& graph, const EmbeddingPair& base,
                            const GcnConfig& config) {
  config.validate();
  check_shapes(graph, base);
  PropagationResult r;
  r.layers.reserve(config.num_layers + 1);
  r.layers.push_back(base);
  for (std::size_t l = 1; l <= config.num_layers; ++l)
    r.layers.push_back(step(graph, r.layers.back(), config.threads));
  if (config.final_embedding == GcnConfig::FinalEmbedding::last_layer) {
    r.final = r.layers.back();
  } else {
    r.final = {Matrix(graph.num_users(), base.dim()), Matrix(graph.num_items(), base.dim())};
    const double w = 1.0 / static_cast<double>(config.num_layers + 1);
    for (const auto& layer : r.layers) accumulate(r.final, layer, w);
  }
  return r;
}

EmbeddingPair propagate_backward(const BipartiteGraph& graph, const EmbeddingPair& upstream,
                                 const GcnConfig& config) {
  config.validate();
  check_shapes(graph, upstream);
  // The one-layer operator [[0, C], [C^T, 0]] is symmetric, so its adjoint
  // is itself and the L-layer adjoint is the same L-fold product.
  if (config.final_embedding == GcnConfig::FinalEmbedding::last_layer) {
    EmbeddingPair g = upstream;
    for (std::size_t l = 0; l < config.num_layers; ++l) g = step(graph, g, config.threads);
    return g;
  }
  const double w = 1.0 / static_cast<double>(config.num_layers + 1);
  EmbeddingPair total{Matrix(graph.num_users(), upstream.dim()),
                      Matrix(graph.num_items(), upstream.dim())};
  EmbeddingPair g = upstream;
  accumulate(total, g, w);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    g = step(graph, g, config.threads);
    accumulate(total, g, w);
  }
  return total;
}

}  // namespace playrec
