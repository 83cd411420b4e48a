#pragma once

#include <cstdint>
#include <span>

#include "playrec/betamix.hpp"
#include "playrec/dataio.hpp"
#include "playrec/propagation.hpp"

namespace playrec {

/// Full interest graph (every interaction) and strong interest graph
/// (interactions labeled strong). Both span the same user and item sets.
struct GraphViews {
  BipartiteGraph full;
  BipartiteGraph strong;
};

enum class ViewEdgeWeight {
  unit,   // w = 1 on every edge
  gamma,  // w = max(gamma, 1e-3)
};

GraphViews build_graph_views(const Dataset& dataset, const InterestAssignment& assignment,
                             ViewEdgeWeight weighting = ViewEdgeWeight::unit);

struct SslConfig {
  enum class Negatives { in_batch_all, sampled_k };
  double tau = 0.2;
  double lambda = 1.0;
  Negatives negatives = Negatives::in_batch_all;
  std::size_t sampled_k = 256;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct SslResult {
  double loss = 0.0;  // user_loss + lambda * item_loss
  double user_loss = 0.0;
  double item_loss = 0.0;
  EmbeddingPair grad_full;    // d loss / d e^F
  EmbeddingPair grad_strong;  // d loss / d e^S
  std::size_t zero_norm_vectors = 0;
};

/// Contrastive objective between the full-view and strong-view embeddings:
/// for every node, InfoNCE with cosine similarity / tau, the same node in the
/// other view as positive and the other same-side nodes as negatives.
/// `epoch` only matters for sampled negatives.
SslResult ssl_loss(const EmbeddingPair& full, const EmbeddingPair& strong, const SslConfig& config,
                   std::uint64_t epoch = 0);

/// One side of ssl_loss: sum over anchors a of
/// -log softmax_v(cos(anchor_a, other_v) / tau)[a]. Gradients are added into
/// grad_anchor and grad_other, scaled by `scale`.
double info_nce(const Matrix& anchor, const Matrix& other, double tau, double scale,
                Matrix& grad_anchor, Matrix& grad_other, const SslConfig& config,
                std::uint64_t stream, std::size_t* zero_norms = nullptr);

enum class IieFusion { sum, mean };

/// e^IIE from the two propagated views.
EmbeddingPair fuse_views(const EmbeddingPair& full, const EmbeddingPair& strong, IieFusion fusion);

}  // namespace playrec
