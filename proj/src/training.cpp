#include "playrec/training.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include "json.hpp"

#include "playrec/persist.hpp"

namespace playrec {

namespace fs = std::filesystem;

PresetValues preset_values(Preset preset) {
  switch (preset) {
    case Preset::accuracy:
      return {1.6, 4};
    case Preset::diversity:
      return {0.4, 1};
    case Preset::trade_off:
      return {0.6, 1};
  }
  return {0.6, 1};
}

void BalanceConfig::validate() const {
  if (!(alpha > 0.0)) throw DomainError("BalanceConfig: alpha must be positive");
  if (!(learning_rate >= 0.0)) throw DomainError("BalanceConfig: learning_rate must be >= 0");
  if (batch_size == 0) throw DomainError("BalanceConfig: batch_size must be positive");
  if (negatives_per_positive == 0)
    throw DomainError("BalanceConfig: negatives_per_positive must be positive");
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log sigma(x)
double neg_log_sigmoid(double x) {
  if (x > 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

EmbeddingPair zeros_like(const EmbeddingPair& e) {
  return {Matrix(e.users.rows(), e.users.cols()), Matrix(e.items.rows(), e.items.cols())};
}

void axpy(EmbeddingPair& y, const EmbeddingPair& x, double a) {
  for (std::size_t k = 0; k < y.users.size(); ++k) y.users.data()[k] += a * x.users.data()[k];
  for (std::size_t k = 0; k < y.items.size(); ++k) y.items.data()[k] += a * x.items.data()[k];
}

void adam_update(Matrix& param, Matrix& m, Matrix& v, const Matrix& grad, double lr,
                 std::size_t step) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  auto& p = param.data();
  auto& md = m.data();
  auto& vd = v.data();
  const auto& g = grad.data();
  for (std::size_t k = 0; k < p.size(); ++k) {
    md[k] = b1 * md[k] + (1.0 - b1) * g[k];
    vd[k] = b2 * vd[k] + (1.0 - b2) * g[k] * g[k];
    p[k] -= lr * (md[k] / c1) / (std::sqrt(vd[k] / c2) + eps);
  }
}

void adam_update(EmbeddingPair& param, AdamMoments& mom, const EmbeddingPair& grad, double lr,
                 std::size_t step) {
  adam_update(param.users, mom.m.users, mom.v.users, grad.users, lr, step);
  adam_update(param.items, mom.m.items, mom.v.items, grad.items, lr, step);
}

}  // namespace

ModelState init_model(std::size_t num_users, std::size_t num_items, const TrainConfig& config) {
  config.gcn.validate();
  config.balance.validate();
  ModelState s;
  s.seed = config.balance.seed;
  auto rng = make_rng(config.balance.seed, "init");
  s.iie = init_embeddings(num_users, num_items, config.gcn.dim, rng);
  s.mrw = init_embeddings(num_users, num_items, config.gcn.dim, rng);
  s.iie_moments = {zeros_like(s.iie), zeros_like(s.iie)};
  s.mrw_moments = {zeros_like(s.mrw), zeros_like(s.mrw)};
  return s;
}

EmbeddingPair fuse_embeddings(const EmbeddingPair& iie, const EmbeddingPair& mrw, double alpha) {
  if (!iie.users.same_shape(mrw.users) || !iie.items.same_shape(mrw.items))
    throw DomainError("fuse_embeddings: dimension mismatch");
  EmbeddingPair out = mrw;
  axpy(out, iie, alpha);
  return out;
}

double reweighted_score(double s, double zeta, double k_scale) {
  return s * sigmoid(s * zeta) * k_scale;
}

double reweighted_score_derivative(double s, double zeta, double k_scale, bool detach) {
  const double sg = sigmoid(s * zeta);
  if (detach) return sg * k_scale;
  return k_scale * (sg + s * zeta * sg * (1.0 - sg));
}

BalanceLoss balance_loss(const EmbeddingPair& fused, std::span<const Triplet> triplets,
                         const BalanceConfig& config) {
  BalanceLoss r{0.0, zeros_like(fused)};
  const std::size_t d = fused.dim();
  for (const auto& t : triplets) {
    const auto eu = fused.users.row(t.user);
    const auto ei = fused.items.row(t.positive);
    const auto ej = fused.items.row(t.negative);
    const double s_pos = dot(eu, ei);
    const double s_neg = dot(eu, ej);
    const double x = s_pos - reweighted_score(s_neg, config.zeta, config.k_scale);
    r.loss += neg_log_sigmoid(x);
    const double dx = -sigmoid(-x);  // d loss / dx
    const double dneg = -dx * reweighted_score_derivative(s_neg, config.zeta, config.k_scale,
                                                          config.detach_reweight);
    auto gu = r.grad.users.row(t.user);
    auto gi = r.grad.items.row(t.positive);
    auto gj = r.grad.items.row(t.negative);
    for (std::size_t k = 0; k < d; ++k) {
      gu[k] += dx * ei[k] + dneg * ej[k];
      gi[k] += dx * eu[k];
      gj[k] += dneg * eu[k];
    }
  }
  if (!std::isfinite(r.loss))
    throw NumericalError("balance_loss: non-finite loss (check learning rate and inputs)");
  return r;
}

ForwardPass forward(const ModelState& state, const TrainingGraphs& graphs,
                    const TrainConfig& config) {
  ForwardPass f;
  f.full = propagate(graphs.full, state.iie, config.gcn).final;
  f.strong = propagate(graphs.strong, state.iie, config.gcn).final;
  f.iie = fuse_views(f.full, f.strong, config.fusion);
  const EmbeddingPair& mrw_base = config.balance.share_base ? state.iie : state.mrw;
  f.mrw = propagate(graphs.augmented, mrw_base, config.gcn).final;
  f.fused = fuse_embeddings(f.iie, f.mrw, config.balance.alpha);
  return f;
}

Objective objective(const ModelState& state, const TrainingGraphs& graphs,
                    std::span<const Triplet> triplets, const TrainConfig& config,
                    std::uint64_t ssl_stream) {
  const ForwardPass f = forward(state, graphs, config);
  const BalanceLoss bl = balance_loss(f.fused, triplets, config.balance);

  Objective obj;
  obj.balance = bl.loss;
  const double view_scale = config.fusion == IieFusion::sum ? 1.0 : 0.5;
  EmbeddingPair g_full = zeros_like(f.full);
  axpy(g_full, bl.grad, config.balance.alpha * view_scale);
  EmbeddingPair g_strong = g_full;
  if (config.balance.ssl_weight != 0.0) {
    const SslResult ssl = ssl_loss(f.full, f.strong, config.ssl, ssl_stream);
    obj.ssl = ssl.loss;
    axpy(g_full, ssl.grad_full, config.balance.ssl_weight);
    axpy(g_strong, ssl.grad_strong, config.balance.ssl_weight);
  }
  obj.total = obj.balance + config.balance.ssl_weight * obj.ssl;

  obj.grad_iie = propagate_backward(graphs.full, g_full, config.gcn);
  axpy(obj.grad_iie, propagate_backward(graphs.strong, g_strong, config.gcn), 1.0);
  EmbeddingPair g_mrw = propagate_backward(graphs.augmented, bl.grad, config.gcn);
  if (config.balance.share_base) {
    axpy(obj.grad_iie, g_mrw, 1.0);
    obj.grad_mrw = zeros_like(g_mrw);
  } else {
    obj.grad_mrw = std::move(g_mrw);
  }
  return obj;
}

std::vector<Triplet> sample_triplets(const std::vector<std::vector<ItemId>>& positives,
                                     std::size_t num_items, std::size_t per_positive, Rng& rng) {
  std::vector<Triplet> out;
  for (UserId u = 0; u < positives.size(); ++u) {
    const auto& pos = positives[u];
    if (pos.size() >= num_items) continue;  // no negative exists
    std::vector<ItemId> sorted(pos);
    std::sort(sorted.begin(), sorted.end());
    for (ItemId i : pos)
      for (std::size_t n = 0; n < per_positive; ++n) {
        ItemId j;
        do {
          j = static_cast<ItemId>(uniform_index(rng, num_items));
        } while (std::binary_search(sorted.begin(), sorted.end(), j));
        out.push_back({u, i, j});
      }
  }
  return out;
}

void train_model(ModelState& state, const TrainingGraphs& graphs,
                 const std::vector<std::vector<ItemId>>& positives, const TrainConfig& config) {
  config.balance.validate();
  std::size_t total_pos = 0;
  for (const auto& p : positives) total_pos += p.size();
  if (total_pos == 0) throw DataError("train: empty training split");
  const std::size_t num_items = graphs.full.num_items();

  for (; state.epoch < config.balance.epochs; ++state.epoch) {
    const std::uint64_t neg_epoch = config.balance.resample_negatives ? state.epoch : 0;
    auto neg_rng = make_rng(config.balance.seed, "negatives", neg_epoch);
    auto triplets =
        sample_triplets(positives, num_items, config.balance.negatives_per_positive, neg_rng);
    auto shuffle_rng = make_rng(config.balance.seed, "shuffle", state.epoch);
    for (std::size_t k = triplets.size(); k > 1; --k)
      std::swap(triplets[k - 1], triplets[uniform_index(shuffle_rng, k)]);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < triplets.size(); begin += config.balance.batch_size) {
      const std::size_t end = std::min(triplets.size(), begin + config.balance.batch_size);
      std::span<const Triplet> batch(triplets.data() + begin, end - begin);
      const Objective obj =
          objective(state, graphs, batch, config, state.epoch * 100003 + batches);
      if (!std::isfinite(obj.total))
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(state.epoch));
      ++state.adam_step;
      adam_update(state.iie, state.iie_moments, obj.grad_iie, config.balance.learning_rate,
                  state.adam_step);
      if (!config.balance.share_base)
        adam_update(state.mrw, state.mrw_moments, obj.grad_mrw, config.balance.learning_rate,
                    state.adam_step);
      epoch_loss += obj.total / static_cast<double>(batch.size());
      ++batches;
    }
    state.loss_history.push_back(epoch_loss / static_cast<double>(batches));
  }
}

EmbeddingPair final_embeddings(const ModelState& state, const TrainingGraphs& graphs,
                               const TrainConfig& config) {
  return forward(state, graphs, config).fused;
}

namespace {

constexpr char kStateMagic[4] = {'P', 'R', 'C', 'K'};
constexpr std::uint32_t kStateVersion = 1;

void write_matrix(std::ostream& out, const Matrix& m) {
  const std::uint64_t dims[2] = {m.rows(), m.cols()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(m.data().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_matrix(std::istream& in) {
  std::uint64_t dims[2];
  if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims)))
    throw DataError("checkpoint: truncated state");
  Matrix m(dims[0], dims[1]);
  if (!in.read(reinterpret_cast<char*>(m.data().data()),
               static_cast<std::streamsize>(m.size() * sizeof(double))))
    throw DataError("checkpoint: truncated state");
  return m;
}

std::vector<Matrix*> state_tables(ModelState& s) {
  return {&s.iie.users,           &s.iie.items,           &s.mrw.users,
          &s.mrw.items,           &s.iie_moments.m.users, &s.iie_moments.m.items,
          &s.iie_moments.v.users, &s.iie_moments.v.items, &s.mrw_moments.m.users,
          &s.mrw_moments.m.items, &s.mrw_moments.v.users, &s.mrw_moments.v.items};
}

}  // namespace

void save_checkpoint(const fs::path& dir, const ModelState& state,
                     const std::string& config_json) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "state.bin", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "state.bin").string());
    out.write(kStateMagic, 4);
    out.write(reinterpret_cast<const char*>(&kStateVersion), sizeof(kStateVersion));
    const std::uint64_t header[4] = {state.adam_step, state.epoch, state.seed,
                                     state.loss_history.size()};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(state.loss_history.data()),
              static_cast<std::streamsize>(state.loss_history.size() * sizeof(double)));
    ModelState copy = state;
    for (const Matrix* m : state_tables(copy)) write_matrix(out, *m);
    if (!out) throw DataError("failed writing checkpoint state");
  }
  write_embedding_table(dir / "iie", state.iie, "iie_base");
  write_embedding_table(dir / "mrw", state.mrw, "mrw_base");

  nlohmann::json meta;
  meta["config"] = config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_json);
  meta["epoch"] = state.epoch;
  meta["loss_history"] = state.loss_history;
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

ModelState load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "state.bin", std::ios::binary);
  if (!in) throw DataError("no model found in " + dir.string());
  char magic[4];
  std::uint32_t version = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, kStateMagic, 4) != 0 ||
      !in.read(reinterpret_cast<char*>(&version), sizeof(version)) || version != kStateVersion)
    throw DataError("checkpoint: unrecognized state file");
  std::uint64_t header[4];
  if (!in.read(reinterpret_cast<char*>(header), sizeof(header)))
    throw DataError("checkpoint: truncated state");
  ModelState s;
  s.adam_step = header[0];
  s.epoch = header[1];
  s.seed = header[2];
  s.loss_history.resize(header[3]);
  if (!in.read(reinterpret_cast<char*>(s.loss_history.data()),
               static_cast<std::streamsize>(s.loss_history.size() * sizeof(double))))
    throw DataError("checkpoint: truncated state");
  for (Matrix* m : state_tables(s)) *m = read_matrix(in);
  return s;
}

bool checkpoint_exists(const fs::path& dir) { return fs::exists(dir / "state.bin"); }

}  // namespace playrec
