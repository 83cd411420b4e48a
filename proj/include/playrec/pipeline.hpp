#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "playrec/betamix.hpp"
#include "playrec/dataio.hpp"
#include "playrec/diversity.hpp"
#include "playrec/interest_graphs.hpp"
#include "playrec/metrics.hpp"
#include "playrec/training.hpp"
#include "playrec/walk.hpp"

namespace playrec {

/// Every module configuration plus inputs and the global seed. Module seeds
/// and thread counts are derived from `seed` and `threads` by resolved().
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool deterministic = false;

  bool use_synthetic = false;
  SyntheticSpec synthetic;
  std::filesystem::path interactions;
  std::filesystem::path categories;
  std::filesystem::path embeddings;
  LoadOptions load;
  NormalizationConfig normalization;
  SplitRatios split;

  FitConfig fit;
  ViewEdgeWeight view_weight = ViewEdgeWeight::unit;
  WalkConfig walk;
  TrainConfig train;

  std::vector<std::size_t> ks{5, 10, 20};
  std::size_t analysis_top_n = 10;
  std::size_t theory_trials = 10000;
  double theory_z = 3.0;

  bool has_input() const { return use_synthetic || !interactions.empty(); }
  /// Copy with the global seed and thread count pushed into every module.
  PipelineConfig resolved() const;
};

/// Applies a JSON config (sections named after the modules, nested or as
/// dotted keys) on top of `base`. Unknown keys are rejected.
PipelineConfig parse_config(const std::string& json_text, PipelineConfig base = {});
std::string config_to_json(const PipelineConfig& config);

// In-memory stages. All take a resolved config.

DatasetSplit prepare_data(const PipelineConfig& config);

struct FitStage {
  std::vector<std::optional<UserFit>> fits;
  InterestAssignment assignment;
  FitReport report;
};
FitStage run_fit(const Dataset& train, const PipelineConfig& config);

WalkResult run_walk(const Dataset& train, const InterestAssignment& assignment,
                    const PipelineConfig& config);

TrainingGraphs build_training_graphs(const Dataset& train, const InterestAssignment& assignment,
                                     std::span<const AugmentedEdge> walk_edges,
                                     const PipelineConfig& config);

/// Trains from scratch, or continues `resume` up to the configured epochs.
ModelState run_train(const Dataset& train, const TrainingGraphs& graphs,
                     const PipelineConfig& config, std::optional<ModelState> resume = {});

MetricsReport run_eval(const ModelState& state, const TrainingGraphs& graphs,
                       const DatasetSplit& split, const PipelineConfig& config);

struct SweepCell {
  std::uint64_t seed = 0;
  double alpha = 0.0;
  std::size_t Q = 0;
  double ndcg5 = 0.0;
  double coverage5 = 0.0;
  double gm = 0.0;  // sqrt(ndcg5 * coverage5)
};

/// Grid over alpha and Q for every seed: one fit per seed, one walk per
/// (seed, Q), one training run per cell.
std::vector<SweepCell> run_sweep(const PipelineConfig& config, const std::vector<double>& alphas,
                                 const std::vector<std::size_t>& Qs,
                                 const std::vector<std::uint64_t>& seeds);

/// Cells averaged over seeds, ordered by (alpha, Q).
std::vector<SweepCell> average_over_seeds(const std::vector<SweepCell>& cells);

// Artifact commands. Each reads its inputs from `out` (recomputing missing
// predecessors), writes its artifacts and manifest.json, and returns the
// JSON summary. On failure, files the command created are removed.

enum class Command { fit, walk, train, eval, analyze, verify_theory, sweep };

struct SweepGrid {
  std::vector<double> alphas;
  std::vector<std::size_t> Qs;
  std::vector<std::uint64_t> seeds;
};

std::string run_command(Command command, const PipelineConfig& config,
                        const std::filesystem::path& out, const SweepGrid& grid = {});

/// "a:b:step", "a:b" (step 1), "x,y,z" or a single value.
std::vector<double> parse_real_range(const std::string& text);
std::vector<std::size_t> parse_count_range(const std::string& text);

}  // namespace playrec
