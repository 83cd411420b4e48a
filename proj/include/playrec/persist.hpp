#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "playrec/betamix.hpp"
#include "playrec/dataio.hpp"
#include "playrec/diversity.hpp"
#include "playrec/interest_graphs.hpp"
#include "playrec/propagation.hpp"
#include "playrec/walk.hpp"

namespace playrec {

/// `<stem>.prec` holds the user rows followed by the item rows; `<stem>.json`
/// is the sidecar {dim, num_users, num_items, view}.
void write_embedding_table(const std::filesystem::path& stem, const EmbeddingPair& table,
                           const std::string& view);
EmbeddingPair read_embedding_table(const std::filesystem::path& stem);

/// One JSON object per fitted user.
void write_models_jsonl(const std::filesystem::path& path, const Dataset& dataset,
                        const std::vector<std::optional<UserFit>>& fits);

/// user_id, item_id, gamma, label (strong | weak), one row per record.
void write_assignment_tsv(const std::filesystem::path& path, const Dataset& dataset,
                          const InterestAssignment& assignment);
/// Rows are matched to dataset.records by external ids; every record must appear.
InterestAssignment read_assignment_tsv(const std::filesystem::path& path, const Dataset& dataset);

/// user_id, item_id, weight, view (full | strong).
void write_graph_views_tsv(const std::filesystem::path& path, const Dataset& dataset,
                           const GraphViews& views);

/// user_id, item_id, weight, source (interaction | walk).
void write_augmented_tsv(const std::filesystem::path& path, const Dataset& dataset,
                         std::span<const AugmentedEdge> walk_edges);
/// Walk rows only. Category and origin are not persisted and read back as 0.
std::vector<AugmentedEdge> read_walk_edges_tsv(const std::filesystem::path& path,
                                               const Dataset& dataset);

/// {trials, mean_c0, mean_ct, mean_predicted_gain, z_score, pass, ...}.
std::string theory_report_json(const DiversityReport& report);

/// 64-bit FNV-1a of the file contents as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Writes manifest.json listing every file under `dir` (sorted, relative
/// paths) with its size and hash.
void write_manifest(const std::filesystem::path& dir, const std::string& command);

}  // namespace playrec
