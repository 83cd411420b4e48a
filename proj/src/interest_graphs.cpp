#include "playrec/interest_graphs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace playrec {

GraphViews build_graph_views(const Dataset& dataset, const InterestAssignment& assignment,
                             ViewEdgeWeight weighting) {
  if (assignment.gamma.size() != dataset.records.size())
    throw DataError("build_graph_views: assignment does not cover the dataset");
  std::vector<Edge> full, strong;
  full.reserve(dataset.records.size());
  for (std::size_t k = 0; k < dataset.records.size(); ++k) {
    const auto& r = dataset.records[k];
    const double w =
        weighting == ViewEdgeWeight::unit ? 1.0 : std::max(assignment.gamma[k], 1e-3);
    full.push_back({r.user, r.item, w});
    if (assignment.strong(k)) strong.push_back({r.user, r.item, w});
  }
  return {BipartiteGraph(dataset.num_users, dataset.num_items, full),
          BipartiteGraph(dataset.num_users, dataset.num_items, strong)};
}

void SslConfig::validate() const {
  if (!(tau > 0.0)) throw DomainError("SslConfig: tau must be positive");
  if (!(lambda >= 0.0)) throw DomainError("SslConfig: lambda must be non-negative");
  if (negatives == Negatives::sampled_k && sampled_k == 0)
    throw DomainError("SslConfig: sampled_k must be positive");
}

double info_nce(const Matrix& anchor, const Matrix& other, double tau, double scale,
                Matrix& grad_anchor, Matrix& grad_other, const SslConfig& config,
                std::uint64_t stream, std::size_t* zero_norms) {
  const std::size_t n = anchor.rows();
  const std::size_t d = anchor.cols();
  if (other.rows() != n || other.cols() != d)
    throw DomainError("info_nce: view tables differ in shape");
  if (n == 0) return 0.0;

  // Unit vectors and norms; zero vectors keep a zero unit vector (cosine 0).
  auto unit_rows = [&](const Matrix& m, std::vector<double>& norms) {
    Matrix u(n, d);
    norms.assign(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      norms[r] = std::sqrt(squared_norm(m.row(r)));
      if (norms[r] == 0.0) {
        if (zero_norms) ++*zero_norms;
        continue;
      }
      for (std::size_t c = 0; c < d; ++c) u(r, c) = m(r, c) / norms[r];
    }
    return u;
  };
  std::vector<double> na, no;
  const Matrix ua = unit_rows(anchor, na);
  const Matrix uo = unit_rows(other, no);

  const bool dense = config.negatives == SslConfig::Negatives::in_batch_all ||
                     config.sampled_k + 1 >= n;
  // candidate lists: dense uses all rows; sampled uses the anchor plus k others
  std::vector<std::vector<std::size_t>> cand;
  if (!dense) {
    cand.resize(n);
    for (std::size_t a = 0; a < n; ++a) {
      auto rng = make_rng(config.seed, "ssl-negatives", mix64(stream) ^ a);
      auto& c = cand[a];
      c.push_back(a);
      while (c.size() < config.sampled_k + 1) {
        const auto v = static_cast<std::size_t>(uniform_index(rng, n));
        if (std::find(c.begin(), c.end(), v) == c.end()) c.push_back(v);
      }
    }
  }
  auto candidates_of = [&](std::size_t a, std::vector<std::size_t>& buf) -> const std::vector<std::size_t>& {
    if (!dense) return cand[a];
    if (buf.size() != n) {
      buf.resize(n);
      std::iota(buf.begin(), buf.end(), 0);
    }
    return buf;
  };

  // coefficient[a][m] = d loss_a / d cos(a, cand_m), and the matching cosine
  std::vector<std::vector<double>> coef(n), cosines(n);
  std::vector<double> row_loss(n, 0.0);
  parallel_for(n, config.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> buf;
    for (std::size_t a = begin; a < end; ++a) {
      const auto& c = candidates_of(a, buf);
      auto& cs = cosines[a];
      cs.resize(c.size());
      double mx = -INFINITY;
      std::size_t pos = 0;
      for (std::size_t m = 0; m < c.size(); ++m) {
        cs[m] = dot(ua.row(a), uo.row(c[m]));
        mx = std::max(mx, cs[m] / tau);
        if (c[m] == a) pos = m;
      }
      double z = 0.0;
      for (double s : cs) z += std::exp(s / tau - mx);
      row_loss[a] = -(cs[pos] / tau) + mx + std::log(z);
      auto& g = coef[a];
      g.resize(c.size());
      for (std::size_t m = 0; m < c.size(); ++m)
        g[m] = scale * (std::exp(cs[m] / tau - mx) / z - (m == pos ? 1.0 : 0.0)) / tau;
    }
  });

  // d cos(x, y) / dx = (y_hat - cos * x_hat) / |x|
  parallel_for(n, config.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> buf;
    std::vector<double> acc(d);
    for (std::size_t a = begin; a < end; ++a) {
      if (na[a] == 0.0) continue;
      const auto& c = candidates_of(a, buf);
      std::fill(acc.begin(), acc.end(), 0.0);
      double self = 0.0;
      for (std::size_t m = 0; m < c.size(); ++m) {
        if (no[c[m]] == 0.0) continue;
        const auto y = uo.row(c[m]);
        for (std::size_t k = 0; k < d; ++k) acc[k] += coef[a][m] * y[k];
        self += coef[a][m] * cosines[a][m];
      }
      auto g = grad_anchor.row(a);
      const auto x = ua.row(a);
      for (std::size_t k = 0; k < d; ++k) g[k] += (acc[k] - self * x[k]) / na[a];
    }
  });
  {
    // scatter into the other view in anchor order (deterministic)
    std::vector<double> self(n, 0.0);
    Matrix acc(n, d);
    std::vector<std::size_t> buf;
    for (std::size_t a = 0; a < n; ++a) {
      if (na[a] == 0.0) continue;
      const auto& c = candidates_of(a, buf);
      const auto x = ua.row(a);
      for (std::size_t m = 0; m < c.size(); ++m) {
        const std::size_t v = c[m];
        if (no[v] == 0.0) continue;
        auto dst = acc.row(v);
        for (std::size_t k = 0; k < d; ++k) dst[k] += coef[a][m] * x[k];
        self[v] += coef[a][m] * cosines[a][m];
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (no[v] == 0.0) continue;
      auto g = grad_other.row(v);
      const auto y = uo.row(v);
      for (std::size_t k = 0; k < d; ++k) g[k] += (acc(v, k) - self[v] * y[k]) / no[v];
    }
  }
  return std::accumulate(row_loss.begin(), row_loss.end(), 0.0);
}

SslResult ssl_loss(const EmbeddingPair& full, const EmbeddingPair& strong, const SslConfig& config,
                   std::uint64_t epoch) {
  config.validate();
  if (!full.users.same_shape(strong.users) || !full.items.same_shape(strong.items))
    throw DomainError("ssl_loss: views differ in shape");
  SslResult r;
  r.grad_full = {Matrix(full.users.rows(), full.users.cols()),
                 Matrix(full.items.rows(), full.items.cols())};
  r.grad_strong = r.grad_full;
  r.user_loss = info_nce(full.users, strong.users, config.tau, 1.0, r.grad_full.users,
                         r.grad_strong.users, config, 2 * epoch, &r.zero_norm_vectors);
  r.item_loss = info_nce(full.items, strong.items, config.tau, config.lambda, r.grad_full.items,
                         r.grad_strong.items, config, 2 * epoch + 1, &r.zero_norm_vectors);
  r.loss = r.user_loss + config.lambda * r.item_loss;
  return r;
}

EmbeddingPair fuse_views(const EmbeddingPair& full, const EmbeddingPair& strong, IieFusion fusion) {
  if (!full.users.same_shape(strong.users) || !full.items.same_shape(strong.items))
    throw DomainError("fuse_views: views differ in shape");
  EmbeddingPair out = full;
  const double w = fusion == IieFusion::sum ? 1.0 : 0.5;
  for (std::size_t k = 0; k < out.users.size(); ++k)
    out.users.data()[k] = w * (full.users.data()[k] + strong.users.data()[k]);
  for (std::size_t k = 0; k < out.items.size(); ++k)
    out.items.data()[k] = w * (full.items.data()[k] + strong.items.data()[k]);
  return out;
}

}  // namespace playrec
