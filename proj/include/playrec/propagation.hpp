#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "playrec/random.hpp"
#include "playrec/types.hpp"

namespace playrec {

/// Weighted user-item edge.
struct Edge {
  UserId user = 0;
  ItemId item = 0;
  double weight = 1.0;
};

/// Bipartite user-item graph in CSR form, stored from both sides.
///
/// Each stored entry carries the raw edge weight w and the normalized
/// coefficient w / sqrt(|N_u| |N_i|), where degrees count neighbors.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;
  /// Duplicate (user, item) pairs are rejected; weights must be finite and > 0.
  BipartiteGraph(std::size_t num_users, std::size_t num_items, std::span<const Edge> edges);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_edges() const { return user_cols_.size(); }

  std::size_t user_degree(UserId u) const { return user_ptr_[u + 1] - user_ptr_[u]; }
  std::size_t item_degree(ItemId i) const { return item_ptr_[i + 1] - item_ptr_[i]; }

  /// Neighbors of u (sorted item ids), their raw weights and coefficients.
  std::span<const ItemId> user_neighbors(UserId u) const;
  std::span<const double> user_weights(UserId u) const;
  std::span<const double> user_coefficients(UserId u) const;
  std::span<const UserId> item_neighbors(ItemId i) const;
  std::span<const double> item_weights(ItemId i) const;
  std::span<const double> item_coefficients(ItemId i) const;

  /// Edge list in (user, item) order.
  std::vector<Edge> edges() const;

  /// Same edges with the roles of users and items exchanged.
  BipartiteGraph transposed() const;

  bool has_edge(UserId u, ItemId i) const;

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<std::size_t> user_ptr_{0};
  std::vector<ItemId> user_cols_;
  std::vector<double> user_w_;
  std::vector<double> user_coef_;
  std::vector<std::size_t> item_ptr_{0};
  std::vector<UserId> item_cols_;
  std::vector<double> item_w_;
  std::vector<double> item_coef_;
};

/// Normalized coefficients of every edge, in the order of BipartiteGraph::edges().
std::vector<double> normalize_adjacency(const BipartiteGraph& graph);

struct GcnConfig {
  enum class FinalEmbedding { last_layer, layer_mean };
  std::size_t num_layers = 2;
  std::size_t dim = 64;
  FinalEmbedding final_embedding = FinalEmbedding::last_layer;
  std::size_t threads = 1;

  void validate() const;
};

/// Pair of user and item tables sharing a dimension.
struct EmbeddingPair {
  Matrix users;
  Matrix items;

  std::size_t dim() const { return users.cols(); }
  friend bool operator==(const EmbeddingPair&, const EmbeddingPair&) = default;
};

struct PropagationResult {
  std::vector<EmbeddingPair> layers;  // layers[0] is the input
  EmbeddingPair final;
};

/// Random base tables with zero mean and standard deviation 0.1 / sqrt(dim).
EmbeddingPair init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t dim,
                              Rng& rng);

/// L rounds of e_u <- sum_i c_ui e_i and e_i <- sum_u c_ui e_u, applied to
/// both sides simultaneously. No self term.
PropagationResult propagate(const BipartiteGraph& graph, const EmbeddingPair& base,
                            const GcnConfig& config);

/// Adjoint of propagate: maps gradients w.r.t. the final embeddings to
/// gradients w.r.t. the base tables.
EmbeddingPair propagate_backward(const BipartiteGraph& graph, const EmbeddingPair& upstream,
                                 const GcnConfig& config);

}  // namespace playrec
