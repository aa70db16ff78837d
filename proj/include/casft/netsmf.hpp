#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <Eigen/Sparse>

#include "casft/cascade.hpp"
#include "casft/common.hpp"
#include "casft/graphwave.hpp"
#include "casft/rng.hpp"

namespace casft {

struct GlobalEmbedOptions {
  int dim = 64;        // output embedding width d_g
  int window = 10;     // random-walk window T_w
  double negative = 1.0;  // negative-sampling constant b
  int rank = 0;        // factorization rank; 0 means dim
  std::size_t dense_threshold = 2000;  // |V| below this uses the exact dense path
  double samples_per_edge = 8.0;       // sparsifier budget: samples = factor * |E| * T_w
  std::uint64_t seed = 0;
};

namespace detail {

struct WeightedGraph {
  std::vector<std::string> names;
  std::vector<std::vector<std::pair<int, double>>> adj;  // symmetric
  std::vector<double> degree;
  double volume = 0.0;
};

inline WeightedGraph weighted_from_global(const GlobalGraph& g) {
  WeightedGraph w;
  w.names = g.nodes;
  std::map<std::string, int> idx;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) idx[g.nodes[i]] = static_cast<int>(i);
  const auto n = g.nodes.size();
  std::vector<std::map<int, double>> acc(n);
  for (const auto& [edge, mult] : g.edges) {
    const int u = idx.at(edge.first), v = idx.at(edge.second);
    if (u == v) continue;
    acc[static_cast<std::size_t>(u)][v] += mult;
    acc[static_cast<std::size_t>(v)][u] += mult;
  }
  w.adj.resize(n);
  w.degree.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [j, wt] : acc[i]) {
      w.adj[i].emplace_back(j, wt);
      w.degree[i] += wt;
    }
    w.volume += w.degree[i];
  }
  return w;
}

/// Truncated factorization of the symmetric log-PMI matrix: top positive
/// eigencomponents scaled by sqrt(lambda). Restricting to the positive
/// spectrum keeps automorphically equivalent nodes exactly indistinguishable,
/// which plain SVD breaks whenever the negative part carries a degenerate
/// block (any vertex-transitive graph does).
inline Mat factorize_dense(const Mat& logm, int dim) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(logm);
  const auto n = logm.rows();
  Mat e = Mat::Zero(n, dim);
  int out = 0;
  for (Eigen::Index j = n - 1; j >= 0 && out < dim; --j) {
    const double lam = eig.eigenvalues()[j];
    if (lam <= 1e-12) break;
    e.col(out++) = eig.eigenvectors().col(j) * std::sqrt(lam);
  }
  return e;
}

/// Same factorization for a sparse matrix via randomized subspace iteration
/// and a Rayleigh-Ritz projection.
inline Mat factorize_sparse(const Eigen::SparseMatrix<double>& m, int dim, Rng& rng) {
  const Eigen::Index n = m.rows();
  const Eigen::Index k = std::min<Eigen::Index>(n, dim + 8);
  Mat omega(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) omega(i, j) = rng.normal();
  Mat y = m * omega;
  for (int it = 0; it < 3; ++it) {
    Eigen::HouseholderQR<Mat> qr(y);
    y = qr.householderQ() * Mat::Identity(n, k);
    y = m * y;  // symmetric, so no transpose pass needed
  }
  Eigen::HouseholderQR<Mat> qr(y);
  const Mat q = qr.householderQ() * Mat::Identity(n, k);
  Mat t = q.transpose() * (m * q);
  t = 0.5 * (t + t.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(t);
  Mat e = Mat::Zero(n, dim);
  int out = 0;
  for (Eigen::Index j = k - 1; j >= 0 && out < dim; --j) {
    const double lam = eig.eigenvalues()[j];
    if (lam <= 1e-12) break;
    e.col(out++) = (q * eig.eigenvectors().col(j)) * std::sqrt(lam);
  }
  return e;
}

}  // namespace detail

/// Global-view embeddings by factorizing the truncated-log PMI matrix of the
/// window-T_w random-walk polynomial (the DeepWalk matrix). Small graphs get
/// the exact dense construction; larger ones estimate the matrix by sampled
/// random walks before the same truncated factorization. Deterministic under
/// the seed.
inline NodeEmbeddings global_embed(const GlobalGraph& g, GlobalEmbedOptions opt = {}) {
  if (g.nodes.empty()) throw CasftError("global_embed: empty graph");
  NodeEmbeddings emb;
  emb.users = g.nodes;

  detail::WeightedGraph w = detail::weighted_from_global(g);
  const auto n = static_cast<Eigen::Index>(w.names.size());

  int rank = opt.rank > 0 ? opt.rank : opt.dim;
  if (rank > n) {
    emb.warnings.push_back("global_embed: rank " + std::to_string(rank) + " clamped to |V| = " +
                           std::to_string(n));
    rank = static_cast<int>(n);
  }
  const int out_dim = opt.dim;

  if (w.volume <= 0.0) {  // edgeless graph: all-zero PMI
    emb.vectors = Mat::Zero(n, out_dim);
    return emb;
  }

  if (static_cast<std::size_t>(n) < opt.dense_threshold) {
    Mat p = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (w.degree[static_cast<std::size_t>(i)] <= 0.0) continue;
      for (const auto& [j, wt] : w.adj[static_cast<std::size_t>(i)])
        p(i, j) = wt / w.degree[static_cast<std::size_t>(i)];
    }
    Mat power = Mat::Identity(n, n);
    Mat sum = Mat::Zero(n, n);
    for (int r = 0; r < opt.window; ++r) {
      power = power * p;
      sum += power;
    }
    Mat m = sum;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dj = w.degree[static_cast<std::size_t>(j)];
      m.col(j) *= dj > 0.0 ? w.volume / (opt.negative * opt.window * dj) : 0.0;
    }
    Mat logm = m.unaryExpr([](double x) { return x > 1.0 ? std::log(x) : 0.0; });
    Mat e = detail::factorize_dense(logm, rank);
    emb.vectors = e.leftCols(std::min<Eigen::Index>(out_dim, e.cols()));
    if (emb.vectors.cols() < out_dim) {
      Mat padded = Mat::Zero(n, out_dim);
      padded.leftCols(emb.vectors.cols()) = emb.vectors;
      emb.vectors = padded;
    }
    return emb;
  }

  // sampled path: estimate sum_r P^r D^{-1} entries from random walks
  Rng rng(opt.seed);
  std::size_t n_edges = 0;
  for (const auto& nb : w.adj) n_edges += nb.size();
  n_edges /= 2;
  const auto samples = static_cast<std::size_t>(
      std::max(1.0, opt.samples_per_edge * static_cast<double>(n_edges) * opt.window));

  // cumulative degree for stationary start-node sampling
  std::vector<double> cum(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += w.degree[static_cast<std::size_t>(i)];
    cum[static_cast<std::size_t>(i)] = acc;
  }

  const auto step = [&](int u) {
    const auto& nb = w.adj[static_cast<std::size_t>(u)];
    double r = rng.uniform() * w.degree[static_cast<std::size_t>(u)];
    for (const auto& [j, wt] : nb) {
      r -= wt;
      if (r <= 0.0) return j;
    }
    return nb.back().first;
  };

  std::unordered_map<std::uint64_t, double> counts;
  counts.reserve(samples * 2);
  for (std::size_t sidx = 0; sidx < samples; ++sidx) {
    const double pick = rng.uniform() * w.volume;
    const auto it = std::lower_bound(cum.begin(), cum.end(), pick);
    int u = static_cast<int>(it - cum.begin());
    if (u >= n) u = static_cast<int>(n) - 1;
    if (w.degree[static_cast<std::size_t>(u)] <= 0.0) continue;
    const int r_len = static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.window))) + 1;
    int v = u;
    for (int s = 0; s < r_len; ++s) v = step(v);
    counts[(static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(v)] += 1.0;
    counts[(static_cast<std::uint64_t>(v) << 32) | static_cast<std::uint32_t>(u)] += 1.0;
  }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(counts.size());
  for (const auto& [key, cnt] : counts) {
    const auto u = static_cast<int>(key >> 32);
    const auto v = static_cast<int>(key & 0xffffffffu);
    const double du = w.degree[static_cast<std::size_t>(u)], dv = w.degree[static_cast<std::size_t>(v)];
    if (du <= 0.0 || dv <= 0.0) continue;
    const double est =
        w.volume * w.volume * cnt /
        (2.0 * opt.negative * du * dv * static_cast<double>(samples));
    if (est > 1.0) trip.emplace_back(u, v, std::log(est));
  }
  Eigen::SparseMatrix<double> logm(n, n);
  logm.setFromTriplets(trip.begin(), trip.end());

  Rng svd_rng = rng.fork(0x5fd);
  Mat e = detail::factorize_sparse(logm, rank, svd_rng);
  emb.vectors = Mat::Zero(n, out_dim);
  emb.vectors.leftCols(std::min<Eigen::Index>(out_dim, e.cols())) =
      e.leftCols(std::min<Eigen::Index>(out_dim, e.cols()));
  return emb;
}

}  // namespace casft
