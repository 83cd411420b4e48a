#include "playrec/persist.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace playrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string x;
  while (std::getline(ss, x, '\t')) f.push_back(x);
  return f;
}

double to_double(const std::string& s, const fs::path& path, std::size_t line_no) {
  double v = 0.0;
  if (parse_real(s, v)) return v;
  throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
}

// (user, item) -> record index, keyed by external ids
std::map<std::pair<std::string, std::string>, std::size_t> record_lookup(const Dataset& dataset) {
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (std::size_t k = 0; k < dataset.records.size(); ++k) {
    const auto& r = dataset.records[k];
    index[{dataset.user_ids->external(r.user), dataset.item_ids->external(r.item)}] = k;
  }
  return index;
}

}  // namespace

void write_embedding_table(const fs::path& stem, const EmbeddingPair& table,
                           const std::string& view) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  Matrix stacked(table.users.rows() + table.items.rows(), table.dim());
  std::copy(table.users.data().begin(), table.users.data().end(), stacked.data().begin());
  std::copy(table.items.data().begin(), table.items.data().end(),
            stacked.data().begin() + static_cast<std::ptrdiff_t>(table.users.size()));
  write_prec(stacked, fs::path(stem.string() + ".prec"));
  json meta{{"dim", table.dim()},
            {"num_users", table.users.rows()},
            {"num_items", table.items.rows()},
            {"view", view}};
  open_out(fs::path(stem.string() + ".json")) << meta.dump(2) << '\n';
}

EmbeddingPair read_embedding_table(const fs::path& stem) {
  std::ifstream in(stem.string() + ".json");
  if (!in) throw DataError("missing sidecar " + stem.string() + ".json");
  const json meta = json::parse(in);
  const Matrix stacked = read_prec(fs::path(stem.string() + ".prec"));
  const std::size_t nu = meta.at("num_users"), ni = meta.at("num_items"), d = meta.at("dim");
  if (stacked.rows() != nu + ni || stacked.cols() != d)
    throw DataError(stem.string() + ": sidecar does not match the table shape");
  EmbeddingPair out{Matrix(nu, d), Matrix(ni, d)};
  std::copy(stacked.data().begin(), stacked.data().begin() + static_cast<std::ptrdiff_t>(nu * d),
            out.users.data().begin());
  std::copy(stacked.data().begin() + static_cast<std::ptrdiff_t>(nu * d), stacked.data().end(),
            out.items.data().begin());
  return out;
}

void write_models_jsonl(const fs::path& path, const Dataset& dataset,
                        const std::vector<std::optional<UserFit>>& fits) {
  auto out = open_out(path);
  for (const auto& fit : fits) {
    if (!fit) continue;
    json row{{"user_id", dataset.user_ids->external(fit->user)},
             {"pi", fit->model.pi},
             {"alpha_s", fit->model.strong.alpha},
             {"beta_s", fit->model.strong.beta},
             {"alpha_w", fit->model.weak.alpha},
             {"beta_w", fit->model.weak.beta},
             {"converged", fit->converged},
             {"ks_stat", fit->ks.statistic},
             {"p_value", fit->ks.p_value}};
    out << row.dump() << '\n';
  }
}

void write_assignment_tsv(const fs::path& path, const Dataset& dataset,
                          const InterestAssignment& assignment) {
  auto out = open_out(path);
  out << "user_id\titem_id\tgamma\tlabel\n";
  for (std::size_t k = 0; k < dataset.records.size(); ++k) {
    const auto& r = dataset.records[k];
    out << dataset.user_ids->external(r.user) << '\t' << dataset.item_ids->external(r.item) << '\t'
        << assignment.gamma[k] << '\t' << (assignment.strong(k) ? "strong" : "weak") << '\n';
  }
}

InterestAssignment read_assignment_tsv(const fs::path& path, const Dataset& dataset) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const auto index = record_lookup(dataset);
  InterestAssignment a;
  a.gamma.assign(dataset.records.size(), 0.0);
  a.label.assign(dataset.records.size(), InterestLabel::weak);
  std::vector<bool> seen(dataset.records.size(), false);
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 4)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    auto it = index.find({f[0], f[1]});
    if (it == index.end())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown interaction");
    a.gamma[it->second] = to_double(f[2], path, line_no);
    if (f[3] != "strong" && f[3] != "weak")
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad label");
    a.label[it->second] = f[3] == "strong" ? InterestLabel::strong : InterestLabel::weak;
    seen[it->second] = true;
  }
  for (bool s : seen)
    if (!s) throw DataError(path.string() + ": assignment does not cover every interaction");
  return a;
}

void write_graph_views_tsv(const fs::path& path, const Dataset& dataset, const GraphViews& views) {
  auto out = open_out(path);
  out << "user_id\titem_id\tweight\tview\n";
  const std::pair<const BipartiteGraph*, const char*> parts[] = {{&views.full, "full"},
                                                                 {&views.strong, "strong"}};
  for (auto [g, name] : parts)
    for (const auto& e : g->edges())
      out << dataset.user_ids->external(e.user) << '\t' << dataset.item_ids->external(e.item)
          << '\t' << e.weight << '\t' << name << '\n';
}

void write_augmented_tsv(const fs::path& path, const Dataset& dataset,
                         std::span<const AugmentedEdge> walk_edges) {
  auto out = open_out(path);
  out << "user_id\titem_id\tweight\tsource\n";
  for (const auto& r : dataset.records)
    out << dataset.user_ids->external(r.user) << '\t' << dataset.item_ids->external(r.item) << '\t'
        << r.playtime_norm << "\tinteraction\n";
  for (const auto& e : walk_edges)
    out << dataset.user_ids->external(e.user) << '\t' << dataset.item_ids->external(e.item) << '\t'
        << e.weight << "\twalk\n";
}

std::vector<AugmentedEdge> read_walk_edges_tsv(const fs::path& path, const Dataset& dataset) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<AugmentedEdge> edges;
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 4)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    if (f[3] == "interaction") continue;
    if (f[3] != "walk")
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad source");
    const auto u = dataset.user_ids->find(f[0]);
    const auto i = dataset.item_ids->find(f[1]);
    if (!u || !i)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown user or item");
    edges.push_back({*u, *i, to_double(f[2], path, line_no), 0, 0});
  }
  return edges;
}

std::string theory_report_json(const DiversityReport& report) {
  auto check = [](const IdentityCheck& c) {
    return json{{"mean_c0", c.mean_c0},
                {"mean_ct", c.mean_ct},
                {"mean_predicted_gain", c.mean_predicted_gain},
                {"z_score", c.z_score},
                {"pass", c.pass}};
  };
  const auto& a = report.all_categories;
  json j{{"trials", report.trials},
         {"mean_c0", a.mean_c0},
         {"mean_ct", a.mean_ct},
         {"mean_predicted_gain", a.mean_predicted_gain},
         {"z_score", a.z_score},
         {"pass", report.pass()},
         {"monotone", report.monotone},
         {"monotone_violations", report.violations},
         {"representing_category", check(report.representing)}};
  return j.dump(2);
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_manifest(const fs::path& dir, const std::string& command) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      files.push_back(fs::relative(entry.path(), dir));
  std::sort(files.begin(), files.end());
  json artifacts = json::array();
  for (const auto& f : files)
    artifacts.push_back({{"path", f.generic_string()},
                         {"bytes", fs::file_size(dir / f)},
                         {"fnv1a64", file_hash(dir / f)}});
  json manifest{{"command", command}, {"artifacts", artifacts}};
  open_out(dir / "manifest.json") << manifest.dump(2) << '\n';
}

}  // namespace playrec
