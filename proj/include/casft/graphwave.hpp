#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "casft/cascade.hpp"
#include "casft/common.hpp"

namespace casft {

/// Embedding rows aligned with `users`; doubles as the lookup map both
/// embedders return.
struct NodeEmbeddings {
  std::vector<std::string> users;
  Mat vectors;  // one row per user
  std::vector<std::string> warnings;

  std::map<std::string, int> index() const {
    std::map<std::string, int> m;
    for (std::size_t i = 0; i < users.size(); ++i) m[users[i]] = static_cast<int>(i);
    return m;
  }

  Vec at(const std::string& user) const {
    for (std::size_t i = 0; i < users.size(); ++i)
      if (users[i] == user) return vectors.row(static_cast<Eigen::Index>(i)).transpose();
    throw CasftError("NodeEmbeddings: unknown user " + user);
  }
};

struct GraphWaveOptions {
  std::vector<double> scales;         // empty: eigenvalue-based heuristic for num_scales
  int num_scales = 2;
  std::vector<double> sample_points;  // empty: num_points evenly spaced in [0, t_max]
  int num_points = 16;
  double t_max = 100.0;
};

namespace detail {

inline Mat symmetric_adjacency(const std::vector<std::string>& nodes,
                               const std::vector<std::pair<std::string, std::string>>& edges) {
  std::map<std::string, int> idx;
  for (std::size_t i = 0; i < nodes.size(); ++i) idx[nodes[i]] = static_cast<int>(i);
  const auto n = static_cast<Eigen::Index>(nodes.size());
  Mat a = Mat::Zero(n, n);
  for (const auto& [s, t] : edges) {
    const int u = idx.at(s), v = idx.at(t);
    if (u == v) continue;
    a(u, v) = 1.0;  // unweighted, multi-edges collapse
    a(v, u) = 1.0;
  }
  return a;
}

/// GraphWave's scale heuristic: place scales so heat mass survives across the
/// nonzero spectrum, anchored at sqrt(lambda_2 * lambda_max).
inline std::vector<double> heuristic_scales(const Vec& eigenvalues, int num_scales) {
  double lam2 = 0.0, lammax = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    const double l = eigenvalues[i];
    if (l > 1e-10) {
      if (lam2 == 0.0) lam2 = l;
      lammax = l;
    }
  }
  if (lam2 == 0.0) return std::vector<double>(static_cast<std::size_t>(num_scales), 1.0);
  const double gm = std::sqrt(lam2 * lammax);
  const double s_min = -std::log(0.95) / gm;
  const double s_max = -std::log(0.85) / gm;
  std::vector<double> scales;
  if (num_scales == 1) {
    scales.push_back(0.5 * (s_min + s_max));
    return scales;
  }
  for (int i = 0; i < num_scales; ++i)
    scales.push_back(s_min + (s_max - s_min) * i / (num_scales - 1));
  return scales;
}

}  // namespace detail

/// Heat-wavelet structural embeddings. For every node a and scale s the
/// wavelet coefficients are psi_a = U diag(e^{-s lambda}) U^T delta_a on the
/// symmetrized Laplacian; the embedding samples the empirical characteristic
/// function phi_a(t) = mean_m exp(i t psi_{a,m}) at the given points, emitting
/// (Re, Im) pairs. Output dimension: 2 * |scales| * |sample_points|.
inline NodeEmbeddings graphwave_embed(const CascadeGraph& g, GraphWaveOptions opt = {}) {
  if (g.nodes.empty()) throw CasftError("graphwave_embed: empty graph");
  const auto n = static_cast<Eigen::Index>(g.nodes.size());

  const Mat a = detail::symmetric_adjacency(g.nodes, g.edges);
  Mat lap = -a;
  for (Eigen::Index i = 0; i < n; ++i) lap(i, i) = a.row(i).sum();

  Eigen::SelfAdjointEigenSolver<Mat> eig(lap);
  if (eig.info() != Eigen::Success) throw CasftError("graphwave_embed: eigendecomposition failed");
  const Mat& u = eig.eigenvectors();
  const Vec& lam = eig.eigenvalues();

  std::vector<double> scales =
      opt.scales.empty() ? detail::heuristic_scales(lam, opt.num_scales) : opt.scales;
  std::vector<double> points = opt.sample_points;
  if (points.empty()) {
    points.resize(static_cast<std::size_t>(opt.num_points));
    for (int i = 0; i < opt.num_points; ++i)
      points[static_cast<std::size_t>(i)] =
          opt.num_points == 1 ? opt.t_max : opt.t_max * i / (opt.num_points - 1);
  }

  const auto dim = static_cast<Eigen::Index>(2 * scales.size() * points.size());
  NodeEmbeddings emb;
  emb.users = g.nodes;
  emb.vectors = Mat::Zero(n, dim);

  Eigen::Index col = 0;
  for (const double s : scales) {
    Vec filt(n);
    for (Eigen::Index i = 0; i < n; ++i) filt[i] = std::exp(-s * lam[i]);
    const Mat psi = u * filt.asDiagonal() * u.transpose();  // column a = coefficients of node a
    for (const double t : points) {
      for (Eigen::Index node = 0; node < n; ++node) {
        if (a.row(node).sum() == 0.0) {
          // isolated node: analytic single-node embedding (delta wavelet)
          emb.vectors(node, col) = std::cos(t);
          emb.vectors(node, col + 1) = std::sin(t);
          continue;
        }
        double re = 0.0, im = 0.0;
        for (Eigen::Index m = 0; m < n; ++m) {
          const double x = t * psi(m, node);
          re += std::cos(x);
          im += std::sin(x);
        }
        emb.vectors(node, col) = re / static_cast<double>(n);
        emb.vectors(node, col + 1) = im / static_cast<double>(n);
      }
      col += 2;
    }
  }
  return emb;
}

}  // namespace casft
