#include "playrec/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "playrec/random.hpp"

namespace playrec {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::ifstream open_input(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

double parse_double(const std::string& field, const fs::path& path, std::size_t line_no) {
  double v = 0.0;
  if (!parse_real(field, v))
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed number '" +
                    field + "'");
  return v;
}

void expect_header(std::istream& in, const fs::path& path, const std::string& expected) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto got = split_fields(trim(line), ',');
  const auto want = split_fields(expected, ',');
  if (got.size() < want.size() || !std::equal(want.begin(), want.end(), got.begin()))
    throw DataError(path.string() + ":1: expected header '" + expected + "'");
}

std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 10) {
  std::string s;
  for (std::size_t k = 0; k < ids.size() && k < limit; ++k) s += (k ? ", " : "") + ids[k];
  if (ids.size() > limit) s += ", ... (" + std::to_string(ids.size()) + " total)";
  return s;
}

constexpr char kPrecMagic[4] = {'P', 'R', 'E', 'C'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const fs::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw DataError(path.string() + ": truncated binary table");
  return value;
}

bool has_prec_magic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  return in.read(magic, 4) && std::memcmp(magic, kPrecMagic, 4) == 0;
}

}  // namespace

std::uint32_t IdMap::intern(const std::string& external) {
  auto [it, inserted] = index_.try_emplace(external, static_cast<std::uint32_t>(names_.size()));
  if (inserted) names_.push_back(external);
  return it->second;
}

std::optional<std::uint32_t> IdMap::find(const std::string& external) const {
  auto it = index_.find(external);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

CategoryIndex::CategoryIndex(std::size_t num_items, std::size_t num_categories,
                             const std::vector<std::pair<ItemId, CategoryId>>& memberships)
    : item_to_categories_(num_items), category_to_items_(num_categories) {
  for (auto [item, cat] : memberships) {
    if (item >= num_items || cat >= num_categories)
      throw DataError("category membership out of range");
    item_to_categories_[item].push_back(cat);
    category_to_items_[cat].push_back(item);
  }
  for (auto& v : item_to_categories_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  for (auto& v : category_to_items_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

void NormalizationConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw DomainError("normalization epsilon must lie in (0, 0.5)");
}

std::vector<std::vector<ItemId>> Dataset::items_by_user() const {
  std::vector<std::vector<ItemId>> out(num_users);
  for (const auto& r : records) out[r.user].push_back(r.item);
  return out;
}

std::vector<std::vector<std::size_t>> Dataset::records_by_user() const {
  std::vector<std::vector<std::size_t>> out(num_users);
  for (std::size_t k = 0; k < records.size(); ++k) out[records[k].user].push_back(k);
  return out;
}

std::unordered_map<std::string, std::vector<double>> read_embedding_rows(const fs::path& path) {
  std::unordered_map<std::string, std::vector<double>> rows;
  if (has_prec_magic(path)) {
    Matrix table = read_prec(path);
    for (std::size_t r = 0; r < table.rows(); ++r) {
      auto row = table.row(r);
      rows.emplace(std::to_string(r), std::vector<double>(row.begin(), row.end()));
    }
    return rows;
  }
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_fields(line, ',');
    if (line_no == 1 && fields[0] == "item_id") continue;
    if (fields.size() < 2)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected item_id,v0,...");
    std::vector<double> v;
    v.reserve(fields.size() - 1);
    for (std::size_t k = 1; k < fields.size(); ++k)
      v.push_back(parse_double(fields[k], path, line_no));
    if (dim == 0) dim = v.size();
    if (v.size() != dim)
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": embedding dimension mismatch");
    if (!rows.emplace(fields[0], std::move(v)).second)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate item " +
                      fields[0]);
  }
  return rows;
}

namespace {

struct RawRow {
  std::string user, item;
  double minutes;
  std::size_t line;
};

Dataset assemble_dataset(const std::vector<RawRow>& raw, const fs::path& interactions_path,
                         const fs::path& categories_path, const fs::path& embeddings_path,
                         const LoadOptions& options);

}  // namespace

Dataset load_dataset(const fs::path& interactions_path, const fs::path& categories_path,
                     const fs::path& embeddings_path, const LoadOptions& options) {
  std::vector<RawRow> raw;
  {
    auto in = open_input(interactions_path);
    expect_header(in, interactions_path, "user_id,item_id,playtime_minutes");
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      line = trim(line);
      if (line.empty()) continue;
      auto f = split_fields(line, ',');
      if (f.size() != 3 || f[0].empty() || f[1].empty())
        throw DataError(interactions_path.string() + ":" + std::to_string(line_no) +
                        ": expected 3 fields");
      const double minutes = parse_double(f[2], interactions_path, line_no);
      if (!(minutes >= 0.0) || !std::isfinite(minutes))
        throw DataError(interactions_path.string() + ":" + std::to_string(line_no) +
                        ": playtime must be finite and non-negative");
      raw.push_back({f[0], f[1], minutes, line_no});
    }
  }
  return assemble_dataset(raw, interactions_path, categories_path, embeddings_path, options);
}

namespace {

Dataset assemble_dataset(const std::vector<RawRow>& raw, const fs::path& interactions_path,
                         const fs::path& categories_path, const fs::path& embeddings_path,
                         const LoadOptions& options) {
  std::unordered_map<std::string, std::size_t> per_user;
  for (const auto& r : raw) ++per_user[r.user];

  auto users = std::make_shared<IdMap>();
  auto items = std::make_shared<IdMap>();
  Dataset ds;
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (const auto& r : raw) {
    if (per_user[r.user] < options.min_interactions) continue;
    const UserId u = users->intern(r.user);
    const ItemId i = items->intern(r.item);
    if (!seen.emplace(u, i).second)
      throw DataError(interactions_path.string() + ":" + std::to_string(r.line) +
                      ": duplicate interaction (" + r.user + ", " + r.item + ")");
    ds.records.push_back({u, i, r.minutes});
  }
  const std::size_t interacted_items = items->size();

  // Categories: items that only appear here still join the item universe.
  IdMap category_names;
  std::vector<std::pair<ItemId, CategoryId>> memberships;
  {
    auto in = open_input(categories_path);
    expect_header(in, categories_path, "item_id,category");
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      line = trim(line);
      if (line.empty()) continue;
      auto f = split_fields(line, ',');
      if (f.size() != 2 || f[0].empty() || f[1].empty())
        throw DataError(categories_path.string() + ":" + std::to_string(line_no) +
                        ": expected item_id,category");
      memberships.emplace_back(items->intern(f[0]), category_names.intern(f[1]));
    }
  }
  ds.num_users = users->size();
  ds.num_items = items->size();

  auto cats = std::make_shared<CategoryIndex>(ds.num_items, category_names.size(), memberships);
  cats->names = category_names.names();

  std::vector<std::string> missing_cat;
  for (ItemId i = 0; i < interacted_items; ++i)
    if (cats->categories_of(i).empty()) missing_cat.push_back(items->external(i));
  if (!missing_cat.empty())
    throw DataError("items with interactions but no category: " + join_ids(missing_cat));

  auto rows = read_embedding_rows(embeddings_path);
  std::size_t dim = rows.empty() ? 0 : rows.begin()->second.size();
  auto modal = std::make_shared<Matrix>(ds.num_items, dim);
  std::vector<std::string> missing_emb;
  for (ItemId i = 0; i < ds.num_items; ++i) {
    auto it = rows.find(items->external(i));
    if (it == rows.end()) {
      missing_emb.push_back(items->external(i));
      continue;
    }
    const auto& v = it->second;
    double norm2 = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      if (!std::isfinite(v[k]))
        throw DataError("non-finite embedding entry for item " + items->external(i));
      (*modal)(i, k) = v[k];
      norm2 += v[k] * v[k];
    }
    if (norm2 == 0.0) throw DataError("zero-norm embedding for item " + items->external(i));
  }
  if (!missing_emb.empty())
    throw DataError("items without modal embedding: " + join_ids(missing_emb));

  ds.categories = std::move(cats);
  ds.modal = std::move(modal);
  ds.user_ids = std::move(users);
  ds.item_ids = std::move(items);
  return ds;
}

}  // namespace

std::vector<double> percentile_ranks(const std::vector<double>& playtimes,
                                     const NormalizationConfig& config) {
  config.validate();
  const std::size_t n = playtimes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return playtimes[a] < playtimes[b]; });
  std::vector<double> out(n);
  std::size_t k = 0;
  while (k < n) {
    std::size_t end = k + 1;
    while (end < n && playtimes[order[end]] == playtimes[order[k]]) ++end;
    // Ranks are 1-based; the tied block [k, end) shares the mean of k+1..end.
    const double avg_rank = 0.5 * (static_cast<double>(k + 1) + static_cast<double>(end));
    const double value =
        std::clamp(avg_rank / static_cast<double>(n), config.epsilon, 1.0 - config.epsilon);
    for (std::size_t m = k; m < end; ++m) out[order[m]] = value;
    k = end;
  }
  return out;
}

Dataset normalize_playtime(Dataset dataset, const NormalizationConfig& config) {
  config.validate();
  std::vector<std::vector<std::size_t>> by_item(dataset.num_items);
  for (std::size_t k = 0; k < dataset.records.size(); ++k)
    by_item[dataset.records[k].item].push_back(k);
  for (const auto& idx : by_item) {
    if (idx.empty()) continue;
    std::vector<double> times;
    times.reserve(idx.size());
    for (auto k : idx) times.push_back(dataset.records[k].playtime_raw);
    const auto ranks = percentile_ranks(times, config);
    for (std::size_t m = 0; m < idx.size(); ++m) dataset.records[idx[m]].playtime_norm = ranks[m];
  }
  dataset.normalized = true;
  return dataset;
}

DatasetSplit split_dataset(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  for (double r : {ratios.train, ratios.valid, ratios.test})
    if (!(r >= 0.0 && r <= 1.0)) throw DomainError("split ratios must lie in [0, 1]");
  if (!(ratios.train > 0.0) || std::fabs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw DomainError("split ratios must sum to 1 with a positive train share");

  // 0 = train, 1 = valid, 2 = test
  std::vector<std::uint8_t> part(dataset.records.size(), 0);
  const auto by_user = dataset.records_by_user();
  for (UserId u = 0; u < by_user.size(); ++u) {
    auto idx = by_user[u];
    const std::size_t n = idx.size();
    if (n < 3) continue;
    auto rng = make_rng(seed, "split", u);
    for (std::size_t k = n; k > 1; --k) std::swap(idx[k - 1], idx[uniform_index(rng, k)]);
    auto n_valid = static_cast<std::size_t>(std::llround(ratios.valid * static_cast<double>(n)));
    auto n_test = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n)));
    // keep at least one training interaction per user
    while (n_valid + n_test >= n) {
      if (n_test >= n_valid && n_test > 0)
        --n_test;
      else
        --n_valid;
    }
    for (std::size_t k = 0; k < n_valid; ++k) part[idx[k]] = 1;
    for (std::size_t k = n_valid; k < n_valid + n_test; ++k) part[idx[k]] = 2;
  }

  auto empty_like = [&] {
    Dataset d = dataset;
    d.records.clear();
    d.truth_strong.clear();
    return d;
  };
  DatasetSplit out{empty_like(), empty_like(), empty_like()};
  Dataset* parts[3] = {&out.train, &out.valid, &out.test};
  for (std::size_t k = 0; k < dataset.records.size(); ++k) {
    parts[part[k]]->records.push_back(dataset.records[k]);
    if (!dataset.truth_strong.empty()) parts[part[k]]->truth_strong.push_back(dataset.truth_strong[k]);
  }
  return out;
}

double sample_normal(Rng& rng) {
  // Box-Muller; the second variate is discarded to keep the stream simple.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

namespace {

// Marsaglia-Tsang gamma sampler with the shape < 1 boost.
double sample_gamma(Rng& rng, double shape) {
  if (shape < 1.0) {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    return sample_gamma(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = sample_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

double sample_beta(Rng& rng, const BetaParams& params) {
  params.validate();
  const double x = sample_gamma(rng, params.alpha);
  const double y = sample_gamma(rng, params.beta);
  return x / (x + y);
}

void SyntheticSpec::validate() const {
  if (num_users == 0 || num_items == 0 || num_categories == 0 || modal_dim == 0)
    throw DomainError("synthetic counts must be positive");
  if (min_items_per_user == 0 || min_items_per_user > max_items_per_user)
    throw DomainError("synthetic items-per-user range is invalid");
  if (!(mixture.pi >= 0.0 && mixture.pi <= 1.0)) throw DomainError("mixture pi outside [0,1]");
  if (!(popularity_skew >= 0.0 && std::isfinite(popularity_skew)))
    throw DomainError("popularity_skew must be finite and non-negative");
  mixture.strong.validate();
  mixture.weak.validate();
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n_items = spec.num_items;
  const std::size_t n_cats = spec.num_categories;
  const std::size_t d = spec.modal_dim;

  auto item_rng = make_rng(spec.seed, "synthetic-items");
  std::vector<std::pair<ItemId, CategoryId>> memberships;
  std::vector<std::vector<CategoryId>> cats_of(n_items);
  for (ItemId i = 0; i < n_items; ++i) {
    // every category gets at least one item when there are enough items
    const auto primary = static_cast<CategoryId>(
        i < n_cats ? i : uniform_index(item_rng, n_cats));
    cats_of[i].push_back(primary);
    // 1, 2 or 3 categories with probabilities 0.6, 0.3, 0.1
    const double r = uniform01(item_rng);
    const std::size_t extra = std::min<std::size_t>(r < 0.6 ? 0 : r < 0.9 ? 1 : 2, n_cats - 1);
    while (cats_of[i].size() < 1 + extra) {
      const auto c = static_cast<CategoryId>(uniform_index(item_rng, n_cats));
      if (std::find(cats_of[i].begin(), cats_of[i].end(), c) == cats_of[i].end())
        cats_of[i].push_back(c);
    }
    for (auto c : cats_of[i]) memberships.emplace_back(i, c);
  }
  auto cats = std::make_shared<CategoryIndex>(n_items, n_cats, memberships);
  for (std::size_t c = 0; c < n_cats; ++c) cats->names.push_back("genre" + std::to_string(c));

  Matrix centroid(n_cats, d);
  for (std::size_t c = 0; c < n_cats; ++c) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      centroid(c, k) = sample_normal(item_rng);
      norm2 += centroid(c, k) * centroid(c, k);
    }
    for (std::size_t k = 0; k < d; ++k) centroid(c, k) /= std::sqrt(norm2);
  }
  auto modal = std::make_shared<Matrix>(n_items, d);
  std::vector<double> item_scale(n_items);
  for (ItemId i = 0; i < n_items; ++i) {
    auto row = modal->row(i);
    do {
      for (std::size_t k = 0; k < d; ++k) {
        double mean = 0.0;
        for (auto c : cats_of[i]) mean += centroid(c, k);
        row[k] = mean / static_cast<double>(cats_of[i].size()) +
                 spec.modal_noise * sample_normal(item_rng) / std::sqrt(static_cast<double>(d));
      }
    } while (squared_norm(row) == 0.0);
    const double norm = std::sqrt(squared_norm(row));
    for (auto& v : row) v /= norm;
    item_scale[i] = 60.0 * std::exp(0.5 * sample_normal(item_rng));
  }

  // own stream so the skew does not perturb the other draws
  std::vector<double> popularity(n_items, 1.0);
  auto pop_rng = make_rng(spec.seed, "synthetic-popularity");
  for (auto& w : popularity) w = std::exp(spec.popularity_skew * sample_normal(pop_rng));
  std::vector<double> all_cum(n_items);
  std::partial_sum(popularity.begin(), popularity.end(), all_cum.begin());

  // index drawn with probability proportional to the weights behind `cum`
  auto weighted_pick = [](const std::vector<double>& cum, Rng& rng) {
    const double r = uniform01(rng) * cum.back();
    const auto it = std::upper_bound(cum.begin(), cum.end(), r);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cum.begin(), cum.size() - 1));
  };

  auto users = std::make_shared<IdMap>();
  auto items = std::make_shared<IdMap>();
  for (std::size_t u = 0; u < spec.num_users; ++u) users->intern(std::to_string(u));
  for (std::size_t i = 0; i < n_items; ++i) items->intern(std::to_string(i));

  Dataset ds;
  ds.num_users = spec.num_users;
  ds.num_items = n_items;
  const double eps = NormalizationConfig{}.epsilon;
  for (UserId u = 0; u < spec.num_users; ++u) {
    auto rng = make_rng(spec.seed, "synthetic-user", u);
    const std::size_t span = spec.max_items_per_user - spec.min_items_per_user + 1;
    const std::size_t count =
        std::min(n_items, spec.min_items_per_user + uniform_index(rng, span));

    std::vector<CategoryId> preferred;
    const std::size_t n_pref = std::min(spec.preferred_categories, n_cats);
    while (preferred.size() < n_pref) {
      const auto c = static_cast<CategoryId>(uniform_index(rng, n_cats));
      if (std::find(preferred.begin(), preferred.end(), c) == preferred.end())
        preferred.push_back(c);
    }
    std::vector<ItemId> pref_pool;
    for (auto c : preferred)
      for (auto i : cats->items_in(c)) pref_pool.push_back(i);
    std::sort(pref_pool.begin(), pref_pool.end());
    pref_pool.erase(std::unique(pref_pool.begin(), pref_pool.end()), pref_pool.end());
    std::vector<double> pref_cum(pref_pool.size());
    for (std::size_t k = 0; k < pref_pool.size(); ++k)
      pref_cum[k] = popularity[pref_pool[k]] + (k ? pref_cum[k - 1] : 0.0);

    std::unordered_set<ItemId> taken;
    while (taken.size() < count) {
      const bool strong = uniform01(rng) < spec.mixture.pi;
      ItemId item = 0;
      const double pull = strong ? spec.preference_strength : spec.weak_preference_strength;
      bool from_pref = !pref_pool.empty() && uniform01(rng) < pull;
      // fall back to the whole catalogue once the preferred pool is used up
      for (int attempt = 0; attempt < 64; ++attempt) {
        item = from_pref ? pref_pool[weighted_pick(pref_cum, rng)]
                         : static_cast<ItemId>(weighted_pick(all_cum, rng));
        if (!taken.count(item)) break;
        if (attempt == 31) from_pref = false;
      }
      if (taken.count(item)) continue;
      taken.insert(item);
      const double latent = std::clamp(
          sample_beta(rng, strong ? spec.mixture.strong : spec.mixture.weak), eps, 1.0 - eps);
      Interaction rec{u, item, item_scale[item] * latent / (1.0 - latent), latent};
      ds.records.push_back(rec);
      ds.truth_strong.push_back(strong ? 1 : 0);
    }
  }
  ds.categories = std::move(cats);
  ds.modal = std::move(modal);
  ds.user_ids = std::move(users);
  ds.item_ids = std::move(items);
  ds.normalized = true;
  return ds;
}

void write_interactions_csv(const Dataset& dataset, const fs::path& path) {
  auto out = open_output(path);
  out << "user_id,item_id,playtime_minutes\n";
  out.precision(17);
  for (const auto& r : dataset.records)
    out << dataset.user_ids->external(r.user) << ',' << dataset.item_ids->external(r.item) << ','
        << r.playtime_raw << '\n';
}

void write_categories_csv(const Dataset& dataset, const fs::path& path) {
  auto out = open_output(path);
  out << "item_id,category\n";
  const auto& cats = *dataset.categories;
  for (ItemId i = 0; i < dataset.num_items; ++i)
    for (auto c : cats.categories_of(i))
      out << dataset.item_ids->external(i) << ','
          << (c < cats.names.size() ? cats.names[c] : std::to_string(c)) << '\n';
}

void write_embeddings_csv(const Dataset& dataset, const fs::path& path) {
  auto out = open_output(path);
  const auto& m = *dataset.modal;
  out << "item_id";
  for (std::size_t k = 0; k < m.cols(); ++k) out << ",v" << k;
  out << '\n';
  out.precision(17);
  for (ItemId i = 0; i < dataset.num_items; ++i) {
    out << dataset.item_ids->external(i);
    for (double v : m.row(i)) out << ',' << v;
    out << '\n';
  }
}

void write_prec(const Matrix& table, const fs::path& path) {
  auto out = open_output(path, std::ios::binary);
  out.write(kPrecMagic, 4);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.rows()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.cols()));
  for (double v : table.data()) write_le<float>(out, static_cast<float>(v));
  if (!out) throw DataError("failed writing " + path.string());
}

Matrix read_prec(const fs::path& path) {
  auto in = open_input(path, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kPrecMagic, 4) != 0)
    throw DataError(path.string() + ": missing PREC magic");
  const auto rows = read_le<std::uint32_t>(in, path);
  const auto cols = read_le<std::uint32_t>(in, path);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = read_le<float>(in, path);
  return m;
}

void write_records_tsv(const DatasetSplit& split, const fs::path& path) {
  auto out = open_output(path);
  out.precision(17);
  out << "user_id\titem_id\tplaytime_minutes\tplaytime_norm\tsplit\n";
  const std::pair<const Dataset*, const char*> parts[] = {
      {&split.train, "train"}, {&split.valid, "valid"}, {&split.test, "test"}};
  for (auto [ds, name] : parts)
    for (const auto& r : ds->records)
      out << ds->user_ids->external(r.user) << '\t' << ds->item_ids->external(r.item) << '\t'
          << r.playtime_raw << '\t' << r.playtime_norm << '\t' << name << '\n';
}

DatasetSplit read_records_tsv(const fs::path& path, const fs::path& categories,
                              const fs::path& embeddings) {
  std::vector<RawRow> raw;
  std::vector<std::pair<double, int>> extra;
  auto in = open_input(path);
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = split_fields(line, '\t');
    if (f.size() != 5)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    const int part = f[4] == "train" ? 0 : f[4] == "valid" ? 1 : f[4] == "test" ? 2 : -1;
    if (part < 0)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad split label");
    raw.push_back({f[0], f[1], parse_double(f[2], path, line_no), line_no});
    extra.emplace_back(parse_double(f[3], path, line_no), part);
  }
  const Dataset all = assemble_dataset(raw, path, categories, embeddings, {});

  auto empty_like = [&] {
    Dataset d = all;
    d.records.clear();
    d.normalized = true;
    return d;
  };
  DatasetSplit out{empty_like(), empty_like(), empty_like()};
  Dataset* parts[3] = {&out.train, &out.valid, &out.test};
  for (std::size_t k = 0; k < all.records.size(); ++k) {
    Interaction r = all.records[k];
    r.playtime_norm = extra[k].first;
    parts[extra[k].second]->records.push_back(r);
  }
  return out;
}

}  // namespace playrec
