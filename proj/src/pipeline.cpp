#include "playrec/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "playrec/persist.hpp"

namespace playrec {

namespace fs = std::filesystem;
using nlohmann::json;

PipelineConfig PipelineConfig::resolved() const {
  PipelineConfig c = *this;
  const std::size_t t = deterministic ? 1 : std::max<std::size_t>(threads, 1);
  c.threads = t;
  c.synthetic.seed = seed;
  c.fit.em.init_seed = seed;
  c.fit.threads = t;
  c.walk.seed = seed;
  c.walk.threads = t;
  c.train.balance.seed = seed;
  c.train.ssl.seed = seed;
  c.train.ssl.threads = t;
  c.train.gcn.threads = t;
  return c;
}

// ---------------------------------------------------------------------------
// config file

namespace {

// Reads known keys of one section and rejects the rest.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (name_.empty()) {
      node_ = &root;
    } else if (root.contains(name_)) {
      node_ = &root.at(name_);
      if (!node_->is_object()) throw DataError("config: section '" + name_ + "' must be an object");
    }
  }

  template <class T>
  void get(const std::string& key, T& dst) {
    used_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    try {
      dst = node_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw DataError("config: bad value for " + qualified(key) + ": " + e.what());
    }
  }

  void get_path(const std::string& key, fs::path& dst) {
    std::string s = dst.string();
    get(key, s);
    dst = s;
  }

  template <class E>
  void get_enum(const std::string& key, E& dst, const std::map<std::string, E>& names) {
    used_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    const auto& v = node_->at(key);
    auto it = v.is_string() ? names.find(v.get<std::string>()) : names.end();
    if (it == names.end()) throw DataError("config: bad value for " + qualified(key));
    dst = it->second;
  }

  void skip(const std::string& key) { used_.insert(key); }

  void finish() const {
    if (!node_) return;
    for (const auto& [k, v] : node_->items())
      if (!used_.count(k)) throw DataError("config: unknown key " + qualified(k));
  }

 private:
  std::string qualified(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }

  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> used_;
};

const std::map<std::string, EmConfig::Estimator> kEstimators{
    {"paper_closed_form", EmConfig::Estimator::paper_closed_form},
    {"weighted_moments", EmConfig::Estimator::weighted_moments},
    {"weighted_mle", EmConfig::Estimator::weighted_mle}};
const std::map<std::string, ViewEdgeWeight> kViewWeights{{"unit", ViewEdgeWeight::unit},
                                                         {"gamma", ViewEdgeWeight::gamma}};
const std::map<std::string, SslConfig::Negatives> kNegatives{
    {"in_batch_all", SslConfig::Negatives::in_batch_all},
    {"sampled_k", SslConfig::Negatives::sampled_k}};
const std::map<std::string, IieFusion> kFusions{{"sum", IieFusion::sum}, {"mean", IieFusion::mean}};
const std::map<std::string, GcnConfig::FinalEmbedding> kFinals{
    {"last_layer", GcnConfig::FinalEmbedding::last_layer},
    {"layer_mean", GcnConfig::FinalEmbedding::layer_mean}};

template <class E>
std::string enum_name(E value, const std::map<std::string, E>& names) {
  for (const auto& [k, v] : names)
    if (v == value) return k;
  return "";
}

// "mrw.Q": 2 at any level becomes {"mrw": {"Q": 2}}.
json expand_dotted(const json& in) {
  if (!in.is_object()) return in;
  json out = json::object();
  for (const auto& [key, value] : in.items()) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      if (out.contains(key) && out[key].is_object() && value.is_object())
        out[key].update(expand_dotted(value));
      else
        out[key] = expand_dotted(value);
    } else {
      json nested;
      nested[key.substr(dot + 1)] = value;
      const std::string head = key.substr(0, dot);
      if (!out.contains(head)) out[head] = json::object();
      out[head].update(expand_dotted(nested));
    }
  }
  return out;
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text, PipelineConfig c) {
  json root;
  try {
    root = expand_dotted(json::parse(json_text));
  } catch (const json::parse_error& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw DataError("config: top level must be an object");

  Section top(root, "");
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  top.get("deterministic", c.deterministic);
  for (const char* s : {"dataio", "betamix", "interestgraphs", "propagation", "mrw", "training",
                        "evalmetrics", "divtheory"})
    top.skip(s);
  top.finish();

  Section d(root, "dataio");
  d.get("synthetic", c.use_synthetic);
  d.get_path("interactions", c.interactions);
  d.get_path("categories", c.categories);
  d.get_path("embeddings", c.embeddings);
  d.get("min_interactions", c.load.min_interactions);
  d.get("epsilon", c.normalization.epsilon);
  d.get("split_train", c.split.train);
  d.get("split_valid", c.split.valid);
  d.get("split_test", c.split.test);
  d.get("num_users", c.synthetic.num_users);
  d.get("num_items", c.synthetic.num_items);
  d.get("num_categories", c.synthetic.num_categories);
  d.get("pi", c.synthetic.mixture.pi);
  d.get("strong_alpha", c.synthetic.mixture.strong.alpha);
  d.get("strong_beta", c.synthetic.mixture.strong.beta);
  d.get("weak_alpha", c.synthetic.mixture.weak.alpha);
  d.get("weak_beta", c.synthetic.mixture.weak.beta);
  d.get("min_items_per_user", c.synthetic.min_items_per_user);
  d.get("max_items_per_user", c.synthetic.max_items_per_user);
  d.get("modal_dim", c.synthetic.modal_dim);
  d.get("preferred_categories", c.synthetic.preferred_categories);
  d.get("preference_strength", c.synthetic.preference_strength);
  d.get("weak_preference_strength", c.synthetic.weak_preference_strength);
  d.get("popularity_skew", c.synthetic.popularity_skew);
  d.get("modal_noise", c.synthetic.modal_noise);
  d.finish();

  Section b(root, "betamix");
  b.get("max_iters", c.fit.em.max_iters);
  b.get("log_lik_tol", c.fit.em.log_lik_tol);
  b.get("init_strong_fraction", c.fit.em.init_strong_fraction);
  b.get("min_samples", c.fit.em.min_samples);
  b.get("param_floor", c.fit.em.param_floor);
  b.get("param_ceiling", c.fit.em.param_ceiling);
  b.get_enum("estimator", c.fit.em.estimator, kEstimators);
  b.get("random_init", c.fit.em.random_init);
  b.get("min_interactions", c.fit.min_interactions);
  b.finish();

  Section g(root, "interestgraphs");
  g.get_enum("edge_weight", c.view_weight, kViewWeights);
  g.get("tau", c.train.ssl.tau);
  g.get("lambda", c.train.ssl.lambda);
  g.get_enum("negatives", c.train.ssl.negatives, kNegatives);
  g.get("sampled_k", c.train.ssl.sampled_k);
  g.get_enum("fusion", c.train.fusion, kFusions);
  g.finish();

  Section p(root, "propagation");
  p.get("num_layers", c.train.gcn.num_layers);
  p.get("dim", c.train.gcn.dim);
  p.get_enum("final_embedding", c.train.gcn.final_embedding, kFinals);
  p.finish();

  Section w(root, "mrw");
  w.get("Q", c.walk.Q);
  std::size_t rounds = c.walk.rounds_per_user.value_or(0);
  w.get("rounds_per_user", rounds);
  if (rounds > 0) c.walk.rounds_per_user = rounds;
  w.get("rounds_cap", c.walk.rounds_cap);
  w.get("max_walk_length", c.walk.max_walk_length);
  w.finish();

  Section t(root, "training");
  auto& bc = c.train.balance;
  t.get("alpha", bc.alpha);
  t.get("zeta", bc.zeta);
  t.get("k_scale", bc.k_scale);
  t.get("ssl_weight", bc.ssl_weight);
  t.get("learning_rate", bc.learning_rate);
  t.get("epochs", bc.epochs);
  t.get("negatives_per_positive", bc.negatives_per_positive);
  t.get("batch_size", bc.batch_size);
  t.get("detach_reweight", bc.detach_reweight);
  t.get("share_base", bc.share_base);
  t.get("resample_negatives", bc.resample_negatives);
  t.finish();

  Section e(root, "evalmetrics");
  e.get("ks", c.ks);
  e.get("analysis_top_n", c.analysis_top_n);
  e.finish();

  Section v(root, "divtheory");
  v.get("trials", c.theory_trials);
  v.get("z_threshold", c.theory_z);
  v.finish();
  return c;
}

std::string config_to_json(const PipelineConfig& c) {
  const auto& s = c.synthetic;
  const auto& bc = c.train.balance;
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["deterministic"] = c.deterministic;
  j["dataio"] = {{"synthetic", c.use_synthetic},
                 {"interactions", c.interactions.string()},
                 {"categories", c.categories.string()},
                 {"embeddings", c.embeddings.string()},
                 {"min_interactions", c.load.min_interactions},
                 {"epsilon", c.normalization.epsilon},
                 {"split_train", c.split.train},
                 {"split_valid", c.split.valid},
                 {"split_test", c.split.test},
                 {"num_users", s.num_users},
                 {"num_items", s.num_items},
                 {"num_categories", s.num_categories},
                 {"pi", s.mixture.pi},
                 {"strong_alpha", s.mixture.strong.alpha},
                 {"strong_beta", s.mixture.strong.beta},
                 {"weak_alpha", s.mixture.weak.alpha},
                 {"weak_beta", s.mixture.weak.beta},
                 {"min_items_per_user", s.min_items_per_user},
                 {"max_items_per_user", s.max_items_per_user},
                 {"modal_dim", s.modal_dim},
                 {"preferred_categories", s.preferred_categories},
                 {"preference_strength", s.preference_strength},
                 {"weak_preference_strength", s.weak_preference_strength},
                 {"popularity_skew", s.popularity_skew},
                 {"modal_noise", s.modal_noise}};
  j["betamix"] = {{"max_iters", c.fit.em.max_iters},
                  {"log_lik_tol", c.fit.em.log_lik_tol},
                  {"init_strong_fraction", c.fit.em.init_strong_fraction},
                  {"min_samples", c.fit.em.min_samples},
                  {"param_floor", c.fit.em.param_floor},
                  {"param_ceiling", c.fit.em.param_ceiling},
                  {"estimator", enum_name(c.fit.em.estimator, kEstimators)},
                  {"random_init", c.fit.em.random_init},
                  {"min_interactions", c.fit.min_interactions}};
  j["interestgraphs"] = {{"edge_weight", enum_name(c.view_weight, kViewWeights)},
                         {"tau", c.train.ssl.tau},
                         {"lambda", c.train.ssl.lambda},
                         {"negatives", enum_name(c.train.ssl.negatives, kNegatives)},
                         {"sampled_k", c.train.ssl.sampled_k},
                         {"fusion", enum_name(c.train.fusion, kFusions)}};
  j["propagation"] = {{"num_layers", c.train.gcn.num_layers},
                      {"dim", c.train.gcn.dim},
                      {"final_embedding", enum_name(c.train.gcn.final_embedding, kFinals)}};
  j["mrw"] = {{"Q", c.walk.Q},
              {"rounds_per_user", c.walk.rounds_per_user.value_or(0)},
              {"rounds_cap", c.walk.rounds_cap},
              {"max_walk_length", c.walk.max_walk_length}};
  j["training"] = {{"alpha", bc.alpha},
                   {"zeta", bc.zeta},
                   {"k_scale", bc.k_scale},
                   {"ssl_weight", bc.ssl_weight},
                   {"learning_rate", bc.learning_rate},
                   {"epochs", bc.epochs},
                   {"negatives_per_positive", bc.negatives_per_positive},
                   {"batch_size", bc.batch_size},
                   {"detach_reweight", bc.detach_reweight},
                   {"share_base", bc.share_base},
                   {"resample_negatives", bc.resample_negatives}};
  j["evalmetrics"] = {{"ks", c.ks}, {"analysis_top_n", c.analysis_top_n}};
  j["divtheory"] = {{"trials", c.theory_trials}, {"z_threshold", c.theory_z}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// stages

DatasetSplit prepare_data(const PipelineConfig& config) {
  Dataset ds;
  if (config.use_synthetic) {
    ds = generate_synthetic(config.synthetic);
  } else {
    if (config.interactions.empty() || config.categories.empty() || config.embeddings.empty())
      throw DataError("no input data: pass --synthetic or --interactions/--categories/--embeddings");
    ds = normalize_playtime(
        load_dataset(config.interactions, config.categories, config.embeddings, config.load),
        config.normalization);
  }
  return split_dataset(ds, config.split, config.seed);
}

FitStage run_fit(const Dataset& train, const PipelineConfig& config) {
  FitStage s;
  // every user is fitted (em_fit rejects tiny samples); the threshold only
  // selects the users counted in the report
  s.fits = fit_users(train, config.fit.em, 1, config.fit.threads);
  s.assignment = classify_interactions(train, s.fits);
  s.report = summarize_fits(train, s.fits, config.fit.min_interactions);
  return s;
}

WalkResult run_walk(const Dataset& train, const InterestAssignment& assignment,
                    const PipelineConfig& config) {
  return run_walks(train, assignment, config.walk);
}

TrainingGraphs build_training_graphs(const Dataset& train, const InterestAssignment& assignment,
                                     std::span<const AugmentedEdge> walk_edges,
                                     const PipelineConfig& config) {
  GraphViews views = build_graph_views(train, assignment, config.view_weight);
  return {std::move(views.full), std::move(views.strong), augmented_graph(train, walk_edges)};
}

ModelState run_train(const Dataset& train, const TrainingGraphs& graphs,
                     const PipelineConfig& config, std::optional<ModelState> resume) {
  ModelState state = resume ? std::move(*resume)
                            : init_model(train.num_users, train.num_items, config.train);
  if (state.iie.users.rows() != train.num_users || state.iie.items.rows() != train.num_items ||
      state.iie.dim() != config.train.gcn.dim)
    throw DataError("checkpoint does not match the dataset or embedding dimension");
  train_model(state, graphs, train.items_by_user(), config.train);
  return state;
}

MetricsReport run_eval(const ModelState& state, const TrainingGraphs& graphs,
                       const DatasetSplit& split, const PipelineConfig& config) {
  const EmbeddingPair e = final_embeddings(state, graphs, config.train);
  return evaluate(e, split.train, split.test, config.ks, config.threads);
}

std::vector<SweepCell> run_sweep(const PipelineConfig& base, const std::vector<double>& alphas,
                                 const std::vector<std::size_t>& Qs,
                                 const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepCell> cells;
  for (std::uint64_t seed : seeds) {
    PipelineConfig cs = base;
    cs.seed = seed;
    cs = cs.resolved();
    const DatasetSplit split = prepare_data(cs);
    const FitStage fit = run_fit(split.train, cs);
    for (std::size_t Q : Qs) {
      PipelineConfig cq = cs;
      cq.walk.Q = Q;
      const WalkResult walk = run_walk(split.train, fit.assignment, cq);
      const TrainingGraphs graphs =
          build_training_graphs(split.train, fit.assignment, walk.edges, cq);
      for (double alpha : alphas) {
        PipelineConfig ca = cq;
        ca.train.balance.alpha = alpha;
        ca.ks = {5};
        const ModelState state = run_train(split.train, graphs, ca);
        const MetricsReport m = run_eval(state, graphs, split, ca);
        SweepCell cell{seed, alpha, Q, m.by_k.at(5).ndcg, m.by_k.at(5).coverage, 0.0};
        cell.gm = std::sqrt(cell.ndcg5 * cell.coverage5);
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

std::vector<SweepCell> average_over_seeds(const std::vector<SweepCell>& cells) {
  std::map<std::pair<double, std::size_t>, std::pair<SweepCell, std::size_t>> acc;
  for (const auto& c : cells) {
    auto& [sum, n] = acc[{c.alpha, c.Q}];
    sum.alpha = c.alpha;
    sum.Q = c.Q;
    sum.ndcg5 += c.ndcg5;
    sum.coverage5 += c.coverage5;
    ++n;
  }
  std::vector<SweepCell> out;
  for (auto& [key, v] : acc) {
    SweepCell c = v.first;
    c.ndcg5 /= static_cast<double>(v.second);
    c.coverage5 /= static_cast<double>(v.second);
    c.gm = std::sqrt(c.ndcg5 * c.coverage5);
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// artifact commands

namespace {

struct Layout {
  fs::path out;
  fs::path data() const { return out / "data"; }
  fs::path records() const { return data() / "records.tsv"; }
  fs::path categories() const { return data() / "categories.csv"; }
  fs::path embeddings() const { return data() / "embeddings.csv"; }
  fs::path models() const { return out / "fit" / "models.jsonl"; }
  fs::path assignment() const { return out / "fit" / "assignment.tsv"; }
  fs::path views() const { return out / "fit" / "graph_views.tsv"; }
  fs::path augmented() const { return out / "walk" / "augmented_edges.tsv"; }
  fs::path checkpoint() const { return out / "checkpoint"; }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream o(path, std::ios::binary);
  if (!o) throw DataError("cannot write " + path.string());
  o << text;
  if (text.empty() || text.back() != '\n') o << '\n';
}

json report_json(const FitReport& r) {
  return {{"users_attempted", r.users_attempted},
          {"users_fit_ok", r.users_fit_ok},
          {"success_rate", r.success_rate()},
          {"mean_ks_statistic", r.mean_ks_statistic},
          {"mean_p_value", r.mean_p_value},
          {"mean_strong", {{"alpha", r.mean_strong.alpha}, {"beta", r.mean_strong.beta}}},
          {"mean_weak", {{"alpha", r.mean_weak.alpha}, {"beta", r.mean_weak.beta}}}};
}

json metrics_json(const MetricsReport& m) {
  json j;
  j["users"] = m.users;
  for (const auto& [K, v] : m.by_k)
    j["at_k"][std::to_string(K)] = {{"ndcg", v.ndcg},
                                    {"recall", v.recall},
                                    {"hit_ratio", v.hit_ratio},
                                    {"precision", v.precision},
                                    {"coverage", v.coverage}};
  return j;
}

class Run {
 public:
  Run(const PipelineConfig& config, const fs::path& out) : cfg(config.resolved()), layout{out} {}

  // Prepared data, reloaded from disk so every command sees the same ids.
  const DatasetSplit& data() {
    if (split_) return *split_;
    if (cfg.has_input()) {
      const DatasetSplit fresh = prepare_data(cfg);
      fs::create_directories(layout.data());
      write_records_tsv(fresh, layout.records());
      Dataset all = fresh.train;
      write_categories_csv(all, layout.categories());
      write_embeddings_csv(all, layout.embeddings());
    } else if (!fs::exists(layout.records())) {
      throw DataError(
          "no input data: pass --synthetic or --interactions/--categories/--embeddings, or "
          "point --out at a directory with prepared data");
    }
    split_ = read_records_tsv(layout.records(), layout.categories(), layout.embeddings());
    return *split_;
  }

  const InterestAssignment& assignment() {
    if (assignment_) return *assignment_;
    const auto& train = data().train;
    if (!cfg.has_input() && fs::exists(layout.assignment())) {
      assignment_ = read_assignment_tsv(layout.assignment(), train);
    } else {
      fit_ = run_fit(train, cfg);
      write_models_jsonl(layout.models(), train, fit_->fits);
      write_assignment_tsv(layout.assignment(), train, fit_->assignment);
      write_graph_views_tsv(layout.views(), train,
                            build_graph_views(train, fit_->assignment, cfg.view_weight));
      write_text(layout.out / "fit" / "fit_report.json", report_json(fit_->report).dump(2));
      assignment_ = fit_->assignment;
    }
    return *assignment_;
  }

  const std::vector<AugmentedEdge>& walk_edges() {
    if (walk_edges_) return *walk_edges_;
    const auto& train = data().train;
    if (!cfg.has_input() && fs::exists(layout.augmented())) {
      walk_edges_ = read_walk_edges_tsv(layout.augmented(), train);
    } else {
      walk_edges_ = run_walk(train, assignment(), cfg).edges;
      write_augmented_tsv(layout.augmented(), train, *walk_edges_);
    }
    return *walk_edges_;
  }

  TrainingGraphs graphs() {
    return build_training_graphs(data().train, assignment(), walk_edges(), cfg);
  }

  std::optional<FitStage> fit_;
  PipelineConfig cfg;
  Layout layout;

 private:
  std::optional<DatasetSplit> split_;
  std::optional<InterestAssignment> assignment_;
  std::optional<std::vector<AugmentedEdge>> walk_edges_;
};

json cmd_fit(Run& run) {
  const auto& train = run.data().train;
  run.fit_ = run_fit(train, run.cfg);
  const auto& fit = *run.fit_;
  write_models_jsonl(run.layout.models(), train, fit.fits);
  write_assignment_tsv(run.layout.assignment(), train, fit.assignment);
  write_graph_views_tsv(run.layout.views(), train,
                        build_graph_views(train, fit.assignment, run.cfg.view_weight));
  json j = report_json(fit.report);
  j["records"] = train.records.size();
  j["strong_records"] = fit.assignment.strong_count();
  write_text(run.layout.out / "fit" / "fit_report.json", report_json(fit.report).dump(2));
  return j;
}

json cmd_walk(Run& run) {
  const auto& train = run.data().train;
  const WalkResult walk = run_walk(train, run.assignment(), run.cfg);
  write_augmented_tsv(run.layout.augmented(), train, walk.edges);
  std::set<UserId> users;
  for (const auto& e : walk.edges) users.insert(e.user);
  return {{"Q", run.cfg.walk.Q},
          {"walk_edges", walk.edges.size()},
          {"interaction_edges", train.records.size()},
          {"users_augmented", users.size()}};
}

json cmd_train(Run& run) {
  const auto& train = run.data().train;
  const TrainingGraphs graphs = run.graphs();
  std::optional<ModelState> resume;
  if (checkpoint_exists(run.layout.checkpoint()))
    resume = load_checkpoint(run.layout.checkpoint());
  const std::size_t start_epoch = resume ? resume->epoch : 0;
  const ModelState state = run_train(train, graphs, run.cfg, std::move(resume));
  save_checkpoint(run.layout.checkpoint(), state, config_to_json(run.cfg));
  write_embedding_table(run.layout.checkpoint() / "fused",
                        final_embeddings(state, graphs, run.cfg.train), "fused");
  return {{"epochs", state.epoch},
          {"resumed_from_epoch", start_epoch},
          {"final_loss", state.loss_history.empty() ? 0.0 : state.loss_history.back()},
          {"loss_history", state.loss_history}};
}

json cmd_eval(Run& run) {
  if (!checkpoint_exists(run.layout.checkpoint()))
    throw DataError("no model found in " + run.layout.checkpoint().string() +
                    " (run `train` first)");
  const ModelState state = load_checkpoint(run.layout.checkpoint());
  std::ifstream meta_in(run.layout.checkpoint() / "meta.json");
  const json meta = json::parse(meta_in);
  // model-defining settings come from the checkpoint
  const PipelineConfig trained = parse_config(meta.at("config").dump());
  run.cfg.train = trained.resolved().train;
  run.cfg.view_weight = trained.view_weight;
  const MetricsReport m = run_eval(state, run.graphs(), run.data(), run.cfg);
  write_metrics_csv(m, run.layout.out / "eval" / "metrics.csv");
  write_text(run.layout.out / "eval" / "metrics.txt", format_metrics_table(m));
  return metrics_json(m);
}

json cmd_analyze(Run& run) {
  const auto& ds = run.data().train;
  const auto rows =
      modal_category_analysis(*ds.modal, *ds.categories, run.cfg.analysis_top_n, run.cfg.threads);
  write_analysis_csv(rows, *ds.categories, run.layout.out / "analyze" / "modal_overlap.csv");
  double exact = 0.0, partial = 0.0, disjoint = 0.0;
  for (const auto& r : rows) {
    exact += r.exact;
    partial += r.partial;
    disjoint += r.disjoint;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  return {{"categories", rows.size()},
          {"top_n", run.cfg.analysis_top_n},
          {"mean_exact", exact / n},
          {"mean_partial", partial / n},
          {"mean_disjoint", disjoint / n}};
}

json cmd_verify_theory(Run& run) {
  const WalkEngine engine(run.data().train, run.assignment(), run.cfg.walk);
  const DiversityReport report =
      verify_diversity_identities(engine, run.cfg.theory_trials, run.cfg.seed, run.cfg.theory_z);
  const std::string text = theory_report_json(report);
  write_text(run.layout.out / "theory" / "theory_report.json", text);
  return json::parse(text);
}

json cmd_sweep(Run& run, const SweepGrid& grid) {
  if (grid.alphas.empty() || grid.Qs.empty() || grid.seeds.empty())
    throw DomainError("sweep: empty alpha, Q or seed grid");
  if (!run.cfg.use_synthetic && run.cfg.interactions.empty())
    throw DataError("sweep: pass --synthetic or input files");
  const auto cells = run_sweep(run.cfg, grid.alphas, grid.Qs, grid.seeds);
  const auto mean = average_over_seeds(cells);
  auto write_csv = [&](const fs::path& path, const std::vector<SweepCell>& rows, bool with_seed) {
    std::ostringstream o;
    o.precision(10);
    o << (with_seed ? "seed," : "") << "alpha,Q,ndcg5,coverage5,gm\n";
    for (const auto& c : rows) {
      if (with_seed) o << c.seed << ',';
      o << c.alpha << ',' << c.Q << ',' << c.ndcg5 << ',' << c.coverage5 << ',' << c.gm << '\n';
    }
    write_text(path, o.str());
  };
  write_csv(run.layout.out / "sweep" / "sweep.csv", mean, false);
  write_csv(run.layout.out / "sweep" / "sweep_seeds.csv", cells, true);
  const auto best = std::max_element(mean.begin(), mean.end(),
                                     [](const auto& a, const auto& b) { return a.gm < b.gm; });
  return {{"cells", mean.size()},
          {"seeds", grid.seeds},
          {"best", {{"alpha", best->alpha}, {"Q", best->Q}, {"gm", best->gm}}}};
}

const char* command_name(Command c) {
  switch (c) {
    case Command::fit:
      return "fit";
    case Command::walk:
      return "walk";
    case Command::train:
      return "train";
    case Command::eval:
      return "eval";
    case Command::analyze:
      return "analyze";
    case Command::verify_theory:
      return "verify-theory";
    case Command::sweep:
      return "sweep";
  }
  return "";
}

std::set<fs::path> snapshot(const fs::path& dir) {
  std::set<fs::path> paths;
  if (!fs::exists(dir)) return paths;
  for (const auto& e : fs::recursive_directory_iterator(dir)) paths.insert(e.path());
  return paths;
}

// Removes everything under `dir` that was not there before (deepest first).
void remove_new(const fs::path& dir, const std::set<fs::path>& before, bool dir_existed) {
  std::error_code ec;
  if (!dir_existed) {
    fs::remove_all(dir, ec);
    return;
  }
  const auto after = snapshot(dir);
  for (auto it = after.rbegin(); it != after.rend(); ++it)
    if (!before.count(*it)) fs::remove_all(*it, ec);
}

}  // namespace

std::string run_command(Command command, const PipelineConfig& config, const fs::path& out,
                        const SweepGrid& grid) {
  const bool existed = fs::exists(out);
  const auto before = snapshot(out);
  try {
    fs::create_directories(out);
    Run run(config, out);
    json summary;
    switch (command) {
      case Command::fit:
        summary = cmd_fit(run);
        break;
      case Command::walk:
        summary = cmd_walk(run);
        break;
      case Command::train:
        summary = cmd_train(run);
        break;
      case Command::eval:
        summary = cmd_eval(run);
        break;
      case Command::analyze:
        summary = cmd_analyze(run);
        break;
      case Command::verify_theory:
        summary = cmd_verify_theory(run);
        break;
      case Command::sweep:
        summary = cmd_sweep(run, grid);
        break;
    }
    json wrapped{{"command", command_name(command)}, {"seed", run.cfg.seed}, {"summary", summary}};
    const std::string text = wrapped.dump(2);
    write_text(out / (std::string(command_name(command)) + "_summary.json"), text);
    write_manifest(out, command_name(command));
    return text;
  } catch (...) {
    remove_new(out, before, existed);
    throw;
  }
}

// ---------------------------------------------------------------------------
// ranges

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string x;
  while (std::getline(ss, x, sep)) parts.push_back(x);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

double parse_number(const std::string& s) {
  double v = 0.0;
  if (!parse_real(s, v))
    throw DomainError("bad number '" + s + "' in range");
  return v;
}

}  // namespace

std::vector<double> parse_real_range(const std::string& text) {
  if (text.find(',') != std::string::npos) {
    std::vector<double> out;
    for (const auto& p : split_on(text, ',')) out.push_back(parse_number(p));
    return out;
  }
  const auto parts = split_on(text, ':');
  if (parts.size() == 1) return {parse_number(parts[0])};
  if (parts.size() > 3) throw DomainError("range '" + text + "' must be a:b or a:b:step");
  const double lo = parse_number(parts[0]);
  const double hi = parse_number(parts[1]);
  const double step = parts.size() == 3 ? parse_number(parts[2]) : 1.0;
  if (!(step > 0.0) || hi < lo) throw DomainError("range '" + text + "' is empty or has step <= 0");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (std::size_t k = 0; k < n; ++k) {
    // round away accumulated binary error (0.4 + 3 * 0.2 -> 1.0)
    out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e9) / 1e9);
  }
  return out;
}

std::vector<std::size_t> parse_count_range(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : parse_real_range(text)) {
    if (v < 0 || v != std::floor(v)) throw DomainError("range '" + text + "' must be integers >= 0");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace playrec
