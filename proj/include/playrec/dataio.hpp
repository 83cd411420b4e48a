#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "playrec/beta.hpp"
#include "playrec/random.hpp"
#include "playrec/types.hpp"

namespace playrec {

/// One observed (user, item, playtime) triple.
struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  double playtime_raw = 0.0;  // minutes
  double playtime_norm = std::numeric_limits<double>::quiet_NaN();

  bool has_norm() const { return playtime_norm == playtime_norm; }
};

/// Bidirectional mapping between external string ids and dense indices.
class IdMap {
 public:
  std::uint32_t intern(const std::string& external);
  std::optional<std::uint32_t> find(const std::string& external) const;
  const std::string& external(std::uint32_t internal) const { return names_.at(internal); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Item <-> category membership. Both directions are kept sorted.
class CategoryIndex {
 public:
  CategoryIndex() = default;
  CategoryIndex(std::size_t num_items, std::size_t num_categories,
                const std::vector<std::pair<ItemId, CategoryId>>& memberships);

  std::size_t num_items() const { return item_to_categories_.size(); }
  std::size_t num_categories() const { return category_to_items_.size(); }
  const std::vector<CategoryId>& categories_of(ItemId i) const { return item_to_categories_.at(i); }
  const std::vector<ItemId>& items_in(CategoryId c) const { return category_to_items_.at(c); }

  std::vector<std::string> names;  // optional display names, indexed by CategoryId

 private:
  std::vector<std::vector<CategoryId>> item_to_categories_;
  std::vector<std::vector<ItemId>> category_to_items_;
};

struct NormalizationConfig {
  enum class TieRule { average_rank };
  double epsilon = 1e-6;
  TieRule tie_rule = TieRule::average_rank;

  void validate() const;
};

/// An interaction table plus item side information. Category index, modal
/// embeddings and id maps are immutable and shared between copies (splits).
struct Dataset {
  std::vector<Interaction> records;
  std::shared_ptr<const CategoryIndex> categories;
  std::shared_ptr<const Matrix> modal;  // num_items x d_m
  std::shared_ptr<const IdMap> user_ids;
  std::shared_ptr<const IdMap> item_ids;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  bool normalized = false;
  /// Synthetic data only: generator component label per record (1 = strong).
  std::vector<std::uint8_t> truth_strong;

  /// Item lists per user, in record order.
  std::vector<std::vector<ItemId>> items_by_user() const;
  /// Record indices per user, in record order.
  std::vector<std::vector<std::size_t>> records_by_user() const;
};

struct LoadOptions {
  /// Users with fewer interactions are dropped before reindexing.
  std::size_t min_interactions = 1;
};

Dataset load_dataset(const std::filesystem::path& interactions,
                     const std::filesystem::path& categories,
                     const std::filesystem::path& embeddings, const LoadOptions& options = {});

/// Reads the modal embedding file (CSV or binary "PREC"). Rows are returned
/// keyed by external item id.
std::unordered_map<std::string, std::vector<double>> read_embedding_rows(
    const std::filesystem::path& path);

/// Percentile normalization per item with average ranks for ties, clamped
/// into [eps, 1 - eps].
Dataset normalize_playtime(Dataset dataset, const NormalizationConfig& config = {});

/// Normalizes one item's playtimes (the per-item kernel of normalize_playtime).
std::vector<double> percentile_ranks(const std::vector<double>& playtimes,
                                     const NormalizationConfig& config = {});

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  Dataset train;
  Dataset valid;
  Dataset test;
};

/// Per-user random partition. Users with fewer than three interactions go
/// entirely to train.
DatasetSplit split_dataset(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

struct MixtureSpec {
  double pi = 0.4;
  BetaParams strong{9.58, 2.26};
  BetaParams weak{4.68, 8.37};
};

struct SyntheticSpec {
  std::size_t num_users = 100;
  std::size_t num_items = 50;
  std::size_t num_categories = 8;
  MixtureSpec mixture;
  std::size_t min_items_per_user = 10;
  std::size_t max_items_per_user = 30;
  std::size_t modal_dim = 16;
  std::size_t preferred_categories = 2;
  /// Probability that a strong-interest pick comes from a preferred category.
  double preference_strength = 0.85;
  /// Same for weak-interest picks.
  double weak_preference_strength = 0.6;
  /// Items are drawn with weight exp(popularity_skew * N(0, 1)); 0 is uniform.
  double popularity_skew = 1.0;
  double modal_noise = 0.6;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Draws a dataset whose per-user normalized playtimes follow the given
/// dual-beta mixture. Records carry the latent draw as playtime_norm and a
/// monotone transform of it as playtime_raw; truth_strong holds the labels.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Draw from Beta(a, b) using the library's platform-independent samplers.
double sample_beta(Rng& rng, const BetaParams& params);
double sample_normal(Rng& rng);

// Writers for the three input formats.
void write_interactions_csv(const Dataset& dataset, const std::filesystem::path& path);
void write_categories_csv(const Dataset& dataset, const std::filesystem::path& path);
void write_embeddings_csv(const Dataset& dataset, const std::filesystem::path& path);
/// Binary "PREC" table; row k belongs to external item id k, so every
/// external item id must be the decimal integer of its internal index.
void write_prec(const Matrix& table, const std::filesystem::path& path);
Matrix read_prec(const std::filesystem::path& path);

/// Normalized records with split labels, used to hand a prepared dataset
/// from one command to the next: user, item, raw, norm, split.
void write_records_tsv(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit read_records_tsv(const std::filesystem::path& path,
                              const std::filesystem::path& categories,
                              const std::filesystem::path& embeddings);

}  // namespace playrec
