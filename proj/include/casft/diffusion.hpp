#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "casft/autodiff.hpp"
#include "casft/common.hpp"
#include "casft/nn.hpp"
#include "casft/rng.hpp"
#include "casft/temporal.hpp"

namespace casft {

enum class ScheduleKind { linear, cosine };

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw CasftError("unknown schedule kind \"" + s + "\"");
}

struct NoiseSchedule {
  int K = 0;
  Vec beta;       // K entries in (0, 1)
  Vec alpha;      // 1 - beta
  Vec alpha_bar;  // cumulative products, strictly decreasing

  double abar(int k) const {  // alpha_bar with abar(0) = 1
    if (k < 0 || k > K) throw CasftError("NoiseSchedule: step out of range");
    return k == 0 ? 1.0 : alpha_bar[k - 1];
  }
};

inline NoiseSchedule make_schedule(int K, ScheduleKind kind, double beta_min = 1e-4,
                                   double beta_max = 0.02) {
  if (K < 2) throw CasftError("make_schedule: K must be at least 2");
  if (!(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0))
    throw CasftError("make_schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.K = K;
  s.beta.resize(K);
  if (kind == ScheduleKind::linear) {
    for (int k = 0; k < K; ++k)
      s.beta[k] = beta_min + (beta_max - beta_min) * static_cast<double>(k) / (K - 1);
  } else {
    // squared-cosine alpha_bar profile, betas recovered from its ratios
    const double off = 0.008;
    auto f = [&](double u) {
      const double x = (u + off) / (1.0 + off) * M_PI / 2.0;
      return std::cos(x) * std::cos(x);
    };
    double prev = 1.0;
    for (int k = 0; k < K; ++k) {
      const double cur = f(static_cast<double>(k + 1) / K) / f(0.0);
      s.beta[k] = std::min(0.999, std::max(1e-8, 1.0 - cur / prev));
      prev = cur;
    }
  }
  s.alpha = (1.0 - s.beta.array()).matrix();
  s.alpha_bar.resize(K);
  double run = 1.0;
  for (int k = 0; k < K; ++k) {
    run *= s.alpha[k];
    s.alpha_bar[k] = run;
  }
  return s;
}

/// Closed-form forward marginal: Y^k = sqrt(abar_k) Y0 + sqrt(1 - abar_k) eps.
inline Vec forward_diffuse(const Vec& y0, int k, const Vec& eps, const NoiseSchedule& s) {
  if (k < 1 || k > s.K) throw CasftError("forward_diffuse: k out of range");
  const double ab = s.abar(k);
  return std::sqrt(ab) * y0 + std::sqrt(1.0 - ab) * eps;
}

/// Maps raw segment counts into the standardized log space the diffusion model
/// is trained in, and back.
struct TrendNormalizer {
  Vec mean, stdev;

  void fit(const std::vector<std::vector<long>>& targets) {
    if (targets.empty()) throw CasftError("TrendNormalizer: nothing to fit");
    const auto l = static_cast<Eigen::Index>(targets.front().size());
    mean = Vec::Zero(l);
    stdev = Vec::Zero(l);
    for (const auto& y : targets)
      for (Eigen::Index i = 0; i < l; ++i) mean[i] += std::log2(static_cast<double>(y[i]) + 1.0);
    mean /= static_cast<double>(targets.size());
    for (const auto& y : targets)
      for (Eigen::Index i = 0; i < l; ++i) {
        const double d = std::log2(static_cast<double>(y[i]) + 1.0) - mean[i];
        stdev[i] += d * d;
      }
    stdev = (stdev / static_cast<double>(targets.size())).cwiseSqrt().cwiseMax(1e-8);
  }

  Vec normalize(const std::vector<long>& y) const {
    Vec v(static_cast<Eigen::Index>(y.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v[i] = (std::log2(static_cast<double>(y[i]) + 1.0) - mean[i]) / stdev[i];
    return v;
  }

  Vec denormalize(const Vec& v) const {
    Vec y(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
      y[i] = std::exp2(v[i] * stdev[i] + mean[i]) - 1.0;
    return y;
  }
};

/// Conditional noise-prediction MLP. The guide vector is concatenated to every
/// layer input; the step index enters through a sinusoidal embedding.
struct Denoiser {
  std::vector<nn::Linear> layers;
  int l = 0, cond_dim = 0, step_dim = 32;

  Denoiser() = default;
  Denoiser(nn::ParamStore& ps, int l_, int cond_dim_, int width, int depth, int step_dim_,
           Rng& rng)
      : l(l_), cond_dim(cond_dim_), step_dim(step_dim_) {
    if (depth < 1) throw CasftError("Denoiser: depth must be >= 1");
    int in = l + step_dim + cond_dim;
    for (int i = 0; i < depth; ++i) {
      const int out = i + 1 == depth ? l : width;
      layers.emplace_back(ps, "denoiser.l" + std::to_string(i), in, out, rng);
      in = width + cond_dim;
    }
  }

  ad::Var operator()(const ad::Var& yk, int k, const ad::Var& cond) const {
    Vec emb = temporal_encode(static_cast<double>(k), step_dim);
    ad::Var x = ad::concat_cols(yk, ad::Var::constant(emb.transpose()));
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](ad::concat_cols(x, cond));
      if (i + 1 < layers.size()) x = ad::relu(x);
    }
    return x;
  }
};

/// Simplified ELBO surrogate: sample a step and a noise draw, return
/// ||eps - eps_hat||^2 on the tape. Any callable (y^k, k, cond) -> Var works
/// as the denoiser, so tests can plug oracle stubs.
template <typename DenoiserFn>
ad::Var diffusion_train_loss(const DenoiserFn& den, const Vec& y0_norm, const ad::Var& cond,
                             const NoiseSchedule& s, Rng& rng) {
  const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.K))) + 1;
  Vec eps(y0_norm.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  const Vec yk = forward_diffuse(y0_norm, k, eps, s);
  ad::Var eps_hat = den(ad::Var::constant(yk.transpose()), k, cond);
  return ad::sumsq(ad::sub(ad::Var::constant(eps.transpose()), eps_hat));
}

inline std::atomic<std::uint64_t>& ddim_call_counter() {
  static std::atomic<std::uint64_t> n{0};
  return n;
}

/// Deterministic DDIM sampler over an S-step sub-schedule. The denoiser is a
/// plain callback (y^k, k) -> eps_hat so oracle stubs can drive it in tests;
/// eta > 0 adds the stochastic DDIM noise term. Returns Y^0 in normalized
/// space; x0_trace, when given, records the x0 prediction at every step.
/// x0_clip > 0 clamps the per-step x0 prediction: near k = K the update
/// divides by sqrt(alpha_bar_K), so an imperfect network otherwise amplifies
/// into values the log-space de-normalization turns astronomical.
inline Vec ddim_sample(const std::function<Vec(const Vec&, int)>& denoiser,
                       const NoiseSchedule& s, int num_steps, std::uint64_t seed,
                       double eta = 0.0, std::vector<Vec>* x0_trace = nullptr, int dim = 0,
                       double x0_clip = 0.0) {
  if (num_steps < 1) throw CasftError("ddim_sample: need at least one step");
  if (num_steps > s.K) throw CasftError("ddim_sample: sub-schedule longer than K");
  ddim_call_counter().fetch_add(1);

  std::vector<int> taus(static_cast<std::size_t>(num_steps));
  for (int i = 1; i <= num_steps; ++i) {
    int t = static_cast<int>(
        std::llround(static_cast<double>(i) * static_cast<double>(s.K) / num_steps));
    taus[static_cast<std::size_t>(i - 1)] = std::max(t, 1);
  }
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (taus[i] <= taus[i - 1]) taus[i] = taus[i - 1] + 1;

  Rng rng(seed);
  if (dim <= 0) throw CasftError("ddim_sample: dim must be positive");
  Vec y(dim);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = rng.normal();

  Vec x0 = y;
  for (int i = num_steps - 1; i >= 0; --i) {
    const int k = taus[static_cast<std::size_t>(i)];
    const int k_prev = i == 0 ? 0 : taus[static_cast<std::size_t>(i - 1)];
    const double ab = s.abar(k);
    const double ab_prev = s.abar(k_prev);
    const Vec eps_hat = denoiser(y, k);
    x0 = (y - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
    if (x0_clip > 0.0) x0 = x0.cwiseMax(-x0_clip).cwiseMin(x0_clip);
    if (x0_trace) x0_trace->push_back(x0);
    double sigma = 0.0;
    if (eta > 0.0 && k_prev > 0)
      sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    y = std::sqrt(ab_prev) * x0 + dir * eps_hat;
    if (sigma > 0.0) {
      Vec z(y.size());
      for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
      y += sigma * z;
    }
  }
  return y;
}

}  // namespace casft
