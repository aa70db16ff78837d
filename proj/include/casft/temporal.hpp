#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "casft/autodiff.hpp"
#include "casft/cascade.hpp"
#include "casft/common.hpp"
#include "casft/graphwave.hpp"
#include "casft/nn.hpp"

namespace casft {

/// Trigonometric time encoding. 1-based coordinate j holds
/// cos(t / 10000^{(j-1)/B}) for odd j and sin(t / 10000^{j/B}) for even j.
inline Vec temporal_encode(double t, int B) {
  if (B <= 0 || B % 2 != 0) throw CasftError("temporal_encode: B must be a positive even integer");
  Vec z(B);
  for (int j = 1; j <= B; ++j) {
    if (j % 2 == 1)
      z[j - 1] = std::cos(t / std::pow(10000.0, static_cast<double>(j - 1) / B));
    else
      z[j - 1] = std::sin(t / std::pow(10000.0, static_cast<double>(j) / B));
  }
  return z;
}

/// Per-event inputs for the two attention streams. Sub-sequence j is the
/// prefix of length j+1, so only the full token matrices plus the lengths are
/// materialized.
struct SubSequenceBatch {
  Mat local_inputs;   // row i: z(t_i) + E_c(u_i)
  Mat global_inputs;  // row i: E_g(u_i), zero vector for unknown users
  std::vector<int> lengths;
};

inline SubSequenceBatch build_subsequences(const CascadeSequence& seq, const NodeEmbeddings& local,
                                           const NodeEmbeddings& global, int B) {
  const auto n = static_cast<Eigen::Index>(seq.users.size());
  if (static_cast<Eigen::Index>(local.vectors.cols()) != B)
    throw CasftError("build_subsequences: dim(E_c) must equal the encoding width B");
  SubSequenceBatch out;
  out.local_inputs = Mat::Zero(n, B);
  out.global_inputs = Mat::Zero(n, global.vectors.cols());
  const auto lidx = local.index();
  const auto gidx = global.index();
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string& u = seq.users[static_cast<std::size_t>(i)];
    Vec z = temporal_encode(seq.times[static_cast<std::size_t>(i)], B);
    const auto li = lidx.find(u);
    if (li != lidx.end()) z += local.vectors.row(li->second).transpose();
    out.local_inputs.row(i) = z.transpose();
    const auto gi = gidx.find(u);
    if (gi != gidx.end()) out.global_inputs.row(i) = global.vectors.row(gi->second);
    out.lengths.push_back(static_cast<int>(i) + 1);
  }
  return out;
}

enum class Pooling { last, mean };

/// Dual-stream encoder: one self-attention per view, pooled per sub-sequence,
/// views concatenated. Row j of the result is the spatiotemporal feature s_j.
struct SpatioTemporalEncoder {
  nn::SelfAttention local_attn, global_attn;
  Pooling pooling = Pooling::last;

  SpatioTemporalEncoder() = default;
  SpatioTemporalEncoder(nn::ParamStore& ps, int local_in, int global_in, int d_local,
                        int d_global, Pooling pool, Rng& rng)
      : local_attn(ps, "attn.local", local_in, d_local, rng),
        global_attn(ps, "attn.global", global_in, d_global, rng),
        pooling(pool) {}

  ad::Var encode(const SubSequenceBatch& batch) const {
    ad::Var xl = ad::Var::constant(batch.local_inputs);
    ad::Var xg = ad::Var::constant(batch.global_inputs);
    return fuse_views(pooled(local_attn, xl), pooled(global_attn, xg));
  }

  /// s_j = concat(s_c^j, s_g^j), one row per sub-sequence.
  static ad::Var fuse_views(const ad::Var& s_c, const ad::Var& s_g) {
    if (s_c.val().rows() != s_g.val().rows())
      throw CasftError("fuse_views: view lengths differ");
    return ad::concat_cols(s_c, s_g);
  }

 private:
  ad::Var pooled(const nn::SelfAttention& attn, const ad::Var& x) const {
    if (pooling == Pooling::last) {
      // one causal pass: row j equals last-token attention output of prefix j
      return attn.causal(x);
    }
    // mean pooling runs attention per prefix and averages its token outputs
    const auto n = x.val().rows();
    ad::Var out;
    for (Eigen::Index j = 0; j < n; ++j) {
      ad::Var prefix = ad::slice_rows(x, 0, j + 1);
      ad::Var tokens = attn.full(prefix);
      Mat avg = Mat::Constant(1, j + 1, 1.0 / static_cast<double>(j + 1));
      ad::Var pooled_row = ad::matmul(ad::Var::constant(std::move(avg)), tokens);
      out = j == 0 ? pooled_row : ad::concat_rows(out, pooled_row);
    }
    return out;
  }
};

}  // namespace casft
