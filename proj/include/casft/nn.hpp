#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "casft/autodiff.hpp"
#include "casft/common.hpp"
#include "casft/rng.hpp"

namespace casft::nn {

/// Ordered registry of trainable leaves; the optimizer and checkpoints walk it.
class ParamStore {
 public:
  ad::Var add(const std::string& name, Mat init) {
    for (const auto& [n, v] : items_)
      if (n == name) throw CasftError("ParamStore: duplicate parameter " + name);
    ad::Var v = ad::Var::param(std::move(init));
    items_.emplace_back(name, v);
    return v;
  }

  std::size_t size() const { return items_.size(); }
  const std::string& name(std::size_t i) const { return items_[i].first; }
  ad::Var& var(std::size_t i) { return items_[i].second; }
  const ad::Var& var(std::size_t i) const { return items_[i].second; }

  ad::Var* find(const std::string& name) {
    for (auto& [n, v] : items_)
      if (n == name) return &v;
    return nullptr;
  }

  void zero_grad() {
    for (auto& [n, v] : items_) v.zero_grad();
  }

  /// Hash over all parameter values; used by checkpoint identity tests.
  std::string value_hash() const {
    std::string acc;
    for (const auto& [n, v] : items_) acc += n + ":" + hash_matrix(v.val()) + ";";
    return fnv1a_hex(acc);
  }

 private:
  std::vector<std::pair<std::string, ad::Var>> items_;
};

inline Mat xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

enum class Act { none, tanh, relu };

inline ad::Var activate(const ad::Var& x, Act a) {
  switch (a) {
    case Act::tanh: return ad::tanh_(x);
    case Act::relu: return ad::relu(x);
    default: return x;
  }
}

struct Linear {
  ad::Var w, b;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
    w = ps.add(prefix + ".w", xavier_uniform(in, out, rng));
    b = ps.add(prefix + ".b", Mat::Zero(1, out));
  }

  ad::Var operator()(const ad::Var& x) const { return ad::add_rowvec(ad::matmul(x, w), b); }
};

/// Fully connected stack; activation between layers, linear output.
struct Mlp {
  std::vector<Linear> layers;
  Act act = Act::relu;

  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& prefix, const std::vector<int>& dims, Act a, Rng& rng)
      : act(a) {
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      layers.emplace_back(ps, prefix + ".l" + std::to_string(i), dims[i], dims[i + 1], rng);
  }

  ad::Var operator()(ad::Var x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = activate(x, act);
    }
    return x;
  }
};

/// Gated recurrent update h' -> h given an event input x.
/// Convention: h = (1 - z) . h_prev + z . candidate, so a closed update gate
/// (z = 0) leaves the state untouched.
struct GruCell {
  ad::Var wz, uz, bz, wr, ur, br, wc, uc, bc;

  GruCell() = default;
  GruCell(ParamStore& ps, const std::string& prefix, int in, int hidden, Rng& rng) {
    wz = ps.add(prefix + ".wz", xavier_uniform(in, hidden, rng));
    uz = ps.add(prefix + ".uz", xavier_uniform(hidden, hidden, rng));
    bz = ps.add(prefix + ".bz", Mat::Zero(1, hidden));
    wr = ps.add(prefix + ".wr", xavier_uniform(in, hidden, rng));
    ur = ps.add(prefix + ".ur", xavier_uniform(hidden, hidden, rng));
    br = ps.add(prefix + ".br", Mat::Zero(1, hidden));
    wc = ps.add(prefix + ".wc", xavier_uniform(in, hidden, rng));
    uc = ps.add(prefix + ".uc", xavier_uniform(hidden, hidden, rng));
    bc = ps.add(prefix + ".bc", Mat::Zero(1, hidden));
  }

  ad::Var step(const ad::Var& x, const ad::Var& h) const {
    using namespace ad;
    Var z = sigmoid(add_rowvec(add(matmul(x, wz), matmul(h, uz)), bz));
    Var r = sigmoid(add_rowvec(add(matmul(x, wr), matmul(h, ur)), br));
    Var cand = tanh_(add_rowvec(add(matmul(x, wc), matmul(mul(r, h), uc)), bc));
    Var keep = add_scalar(neg(z), 1.0);  // 1 - z
    return add(mul(keep, h), mul(z, cand));
  }
};

/// Single-head scaled dot-product self-attention.
struct SelfAttention {
  Linear q, k, v;
  int d = 0;

  SelfAttention() = default;
  SelfAttention(ParamStore& ps, const std::string& prefix, int in, int width, Rng& rng)
      : q(ps, prefix + ".q", in, width, rng),
        k(ps, prefix + ".k", in, width, rng),
        v(ps, prefix + ".v", in, width, rng),
        d(width) {}

  /// Attention over all tokens (no mask). Rows of the returned matrix are the
  /// per-token outputs.
  ad::Var full(const ad::Var& x) const { return run(x, false); }

  /// Causally masked pass: row j attends to tokens 0..j only, which equals
  /// running attention on prefix j and keeping its last token.
  ad::Var causal(const ad::Var& x) const { return run(x, true); }

  /// Post-softmax weights for the mask setting (diagnostic/testing hook).
  Mat weights(const Mat& x, bool causal_mask) const {
    ad::NoGradGuard ng;
    ad::Var xx = ad::Var::constant(x);
    return softmax_scores(xx, causal_mask).val();
  }

 private:
  ad::Var softmax_scores(const ad::Var& x, bool causal_mask) const {
    using namespace ad;
    Var scores = smul(matmul_nt(q(x), k(x)), 1.0 / std::sqrt(static_cast<double>(d)));
    if (causal_mask) {
      const auto n = scores.val().rows();
      Mat mask = Mat::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) mask(i, j) = -1e9;
      scores = add(scores, Var::constant(std::move(mask)));
    }
    return softmax_rows(scores);
  }

  ad::Var run(const ad::Var& x, bool causal_mask) const {
    return ad::matmul(softmax_scores(x, causal_mask), v(x));
  }
};

}  // namespace casft::nn
