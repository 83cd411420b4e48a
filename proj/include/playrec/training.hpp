#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "playrec/interest_graphs.hpp"
#include "playrec/propagation.hpp"

namespace playrec {

/// Operating points for the accuracy/diversity trade-off.
enum class Preset { accuracy, diversity, trade_off };

struct PresetValues {
  double alpha;
  std::size_t Q;
};

/// accuracy (1.6, 4), diversity (0.4, 1), trade_off (0.6, 1).
PresetValues preset_values(Preset preset);

struct BalanceConfig {
  double alpha = 0.6;
  double zeta = 1.0;
  double k_scale = 1.0;
  double ssl_weight = 0.1;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t negatives_per_positive = 1;
  std::size_t batch_size = 2048;
  std::uint64_t seed = 0;
  /// Treat the reweighting factor sigma(zeta * s) * K as a constant.
  bool detach_reweight = false;
  /// MRW branch reuses the IIE base tables instead of its own.
  bool share_base = false;
  /// Draw fresh negatives every epoch (otherwise once, from the epoch-0 stream).
  bool resample_negatives = true;

  void validate() const;
};

struct TrainConfig {
  BalanceConfig balance;
  GcnConfig gcn;
  SslConfig ssl;
  IieFusion fusion = IieFusion::sum;
};

/// Graphs a model is trained on.
struct TrainingGraphs {
  BipartiteGraph full;       // every training interaction
  BipartiteGraph strong;     // strong-labeled training interactions
  BipartiteGraph augmented;  // interactions weighted by playtime plus walk edges
};

struct AdamMoments {
  EmbeddingPair m;
  EmbeddingPair v;

  friend bool operator==(const AdamMoments&, const AdamMoments&) = default;
};

/// Learnable state. When share_base is set the mrw tables stay unused.
struct ModelState {
  EmbeddingPair iie;
  EmbeddingPair mrw;
  AdamMoments iie_moments;
  AdamMoments mrw_moments;
  std::size_t adam_step = 0;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;  // mean per-triplet objective per epoch

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

ModelState init_model(std::size_t num_users, std::size_t num_items, const TrainConfig& config);

/// e = alpha * e_iie + e_mrw, element-wise on both tables.
EmbeddingPair fuse_embeddings(const EmbeddingPair& iie, const EmbeddingPair& mrw, double alpha);

/// Reweighted negative score s * sigma(s * zeta) * K.
double reweighted_score(double s, double zeta, double k_scale);
/// Its derivative with respect to s; with `detach` the factor is constant.
double reweighted_score_derivative(double s, double zeta, double k_scale, bool detach);

struct Triplet {
  UserId user;
  ItemId positive;
  ItemId negative;
};

struct BalanceLoss {
  double loss = 0.0;
  EmbeddingPair grad;  // w.r.t. the fused tables
};

/// -sum log sigma(s_ui - s~_uj) over the triplets.
BalanceLoss balance_loss(const EmbeddingPair& fused, std::span<const Triplet> triplets,
                         const BalanceConfig& config);

/// Intermediate tables of one forward pass.
struct ForwardPass {
  EmbeddingPair full;    // e^F
  EmbeddingPair strong;  // e^S
  EmbeddingPair iie;     // e^IIE
  EmbeddingPair mrw;     // e^MRW
  EmbeddingPair fused;   // e
};

ForwardPass forward(const ModelState& state, const TrainingGraphs& graphs, const TrainConfig& config);

struct Objective {
  double balance = 0.0;
  double ssl = 0.0;
  double total = 0.0;  // balance + ssl_weight * ssl
  EmbeddingPair grad_iie;
  EmbeddingPair grad_mrw;
};

/// Joint objective and exact gradients w.r.t. both base tables.
Objective objective(const ModelState& state, const TrainingGraphs& graphs,
                    std::span<const Triplet> triplets, const TrainConfig& config,
                    std::uint64_t ssl_stream = 0);

/// Uniform negatives outside each user's positives, `per_positive` per pair.
std::vector<Triplet> sample_triplets(const std::vector<std::vector<ItemId>>& positives,
                                     std::size_t num_items, std::size_t per_positive, Rng& rng);

/// Runs epochs until state.epoch == config.balance.epochs. Resumes from the
/// state's epoch; the negative stream is keyed by (seed, epoch). Throws
/// NumericalError on a non-finite loss.
void train_model(ModelState& state, const TrainingGraphs& graphs,
                 const std::vector<std::vector<ItemId>>& positives, const TrainConfig& config);

/// Final fused tables used for ranking.
EmbeddingPair final_embeddings(const ModelState& state, const TrainingGraphs& graphs,
                               const TrainConfig& config);

/// Checkpoint directory: exact float64 state (state.bin), float32 export of
/// the base tables (*.prec with JSON sidecars) and meta.json carrying
/// `config_json`, the epoch and the loss history.
void save_checkpoint(const std::filesystem::path& dir, const ModelState& state,
                     const std::string& config_json);
ModelState load_checkpoint(const std::filesystem::path& dir);
bool checkpoint_exists(const std::filesystem::path& dir);

}  // namespace playrec
