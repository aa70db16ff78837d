#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "casft/autodiff.hpp"
#include "casft/cascade.hpp"
#include "casft/common.hpp"
#include "casft/config.hpp"
#include "casft/diffusion.hpp"
#include "casft/nn.hpp"
#include "casft/ode.hpp"
#include "casft/temporal.hpp"

namespace casft {

enum class Variant { full, no_ft, no_ode, no_diffusion, fm };

inline Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_ft") return Variant::no_ft;
  if (s == "no_ode") return Variant::no_ode;
  if (s == "no_diffusion") return Variant::no_diffusion;
  if (s == "fm") return Variant::fm;
  throw CasftError("unknown variant " + s);
}

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_ft: return "no_ft";
    case Variant::no_ode: return "no_ode";
    case Variant::no_diffusion: return "no_diffusion";
    case Variant::fm: return "fm";
  }
  return "?";
}

/// Everything the model needs for one cascade, precomputed once: token
/// matrices for both attention streams, event times, labels, segment bounds
/// and the hand-built baseline features.
struct PreparedSample {
  std::string cascade_id;
  SubSequenceBatch tokens;
  std::vector<double> times;
  double truth = 0.0;             // P
  std::vector<long> segments;     // Y
  std::vector<double> bounds;
  Vec baseline_features;
};

/// The popularity predictor: spatiotemporal encoder, jump-ODE dynamic cues,
/// conditional trend diffusion and the fusion head. Ablation variants share
/// the encoder and differ in which branches exist and what the head consumes.
class CasftModel {
 public:
  CasftModel(const ExperimentConfig& cfg, std::uint64_t init_seed)
      : cfg_(cfg), variant_(variant_from_string(cfg.variant)) {
    cfg_.validate();
    Rng rng(init_seed);
    const int fused = fused_dim();
    encoder_ = SpatioTemporalEncoder(
        params_, cfg_.model.encoding_dim, cfg_.model.d_g, cfg_.model.d_attn,
        cfg_.model.d_attn_global > 0 ? cfg_.model.d_attn_global : cfg_.model.d_attn,
        cfg_.model.pooling == "mean" ? Pooling::mean : Pooling::last, rng);

    const int d_h = cfg_.model.d_h;
    const int l = cfg_.model.intervals;
    if (has_dynamics()) {
      f2_ = nn::Mlp(params_, "ode.f2", {d_h + 1, d_h, d_h, d_h}, nn::Act::tanh, rng);
      // near-identity initial flow: without this the randomly initialized
      // drift integrates to huge hidden states over long horizons
      f2_.layers.back().w.mutable_val() *= 0.01;
      growth_ = nn::Linear(params_, "ode.growth", d_h, 1, rng);
      gru_ = nn::GruCell(params_, "ode.jump", fused, d_h, rng);
      h0_ = params_.add("ode.h0", Mat::Zero(1, d_h));
    }
    if (has_diffusion()) {
      sched_ = make_schedule(cfg_.diff.K, schedule_kind_from_string(cfg_.diff.schedule),
                             cfg_.diff.beta_min, cfg_.diff.beta_max);
      denoiser_ = Denoiser(params_, l, condition_dim(), cfg_.diff.denoiser_width,
                           cfg_.diff.denoiser_depth, cfg_.diff.step_dim, rng);
    }
    if (variant_ == Variant::fm)
      seg_mlp_ = nn::Mlp(params_, "fm.segments", {fused, cfg_.model.head_width, l},
                         nn::Act::relu, rng);
    head_ = nn::Mlp(params_, "head", {head_input_dim(), cfg_.model.head_width, 1},
                    nn::Act::relu, rng);
  }

  Variant variant() const { return variant_; }
  const ExperimentConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const NoiseSchedule& schedule() const { return sched_; }

  bool has_dynamics() const {
    return variant_ == Variant::full || variant_ == Variant::no_diffusion;
  }
  bool has_diffusion() const { return variant_ == Variant::full || variant_ == Variant::no_ode; }

  int fused_dim() const {
    const int dg = cfg_.model.d_attn_global > 0 ? cfg_.model.d_attn_global : cfg_.model.d_attn;
    return cfg_.model.d_attn + dg;
  }

  int condition_dim() const {
    return variant_ == Variant::no_ode ? fused_dim() : cfg_.model.d_h + cfg_.model.intervals;
  }

  int head_input_dim() const {
    const int l = cfg_.model.intervals;
    switch (variant_) {
      case Variant::full: return l + cfg_.model.d_h;
      case Variant::no_ft: return fused_dim();
      case Variant::no_ode: return l + fused_dim();
      case Variant::no_diffusion: return cfg_.model.d_h + l;
      case Variant::fm: return l + fused_dim();
    }
    return 0;
  }

  /// Spatiotemporal features, one row per observed event prefix.
  ad::Var encode(const PreparedSample& s) const { return encoder_.encode(s.tokens); }

  DynamicsResult dynamics(const ad::Var& fused, const PreparedSample& s) const {
    DynamicsCore core = dynamics_core();
    std::vector<ad::Var> feats;
    feats.reserve(s.times.size());
    for (std::size_t i = 0; i < s.times.size(); ++i)
      feats.push_back(ad::row(fused, static_cast<Eigen::Index>(i)));
    return encode_dynamics(core, h0_, s.times, feats, cfg_.t_o, s.bounds, cfg_.solver(),
                           cfg_.ode.cues == "increment" ? CueMode::increment
                                                        : CueMode::absolute);
  }

  /// Softplus-headed fusion; the MLP input depends on the variant.
  ad::Var predict_head(const ad::Var& input) const { return ad::softplus(head_(input)); }

  /// Cumulative-popularity cues grow with the horizon; networks consume them
  /// through a log1p squash (bijective, so no information is dropped).
  static ad::Var compress_cues(const ad::Var& cues) {
    return ad::log_(ad::add_scalar(cues, 1.0));
  }

  /// L1 (+ gamma L2 where the variant has a generative branch) for one sample.
  /// The head consumes the ground-truth normalized trend during training; the
  /// generative branch trains through the epsilon-prediction surrogate.
  ad::Var training_loss(const PreparedSample& s, const TrendNormalizer& norm, Rng& noise_rng) {
    using namespace ad;
    Var fused = encode(s);
    const Eigen::Index n_last = fused.val().rows() - 1;
    const Vec y_norm = norm.normalize(s.segments);
    Var y_norm_row = Var::constant(y_norm.transpose());

    Var p_hat;      // 1x1, softplus output
    Var gen_loss;   // 1x1 when defined
    switch (variant_) {
      case Variant::full: {
        DynamicsResult dyn = dynamics(fused, s);
        p_hat = predict_head(concat_cols(y_norm_row, dyn.h_to));
        if (cfg_.train.gamma > 0.0) {
          Var cond = concat_cols(dyn.h_to, compress_cues(dyn.cues));
          gen_loss = diffusion_train_loss(denoiser_, y_norm, cond, sched_, noise_rng);
        }
        break;
      }
      case Variant::no_ft: {
        p_hat = predict_head(row(fused, n_last));
        break;
      }
      case Variant::no_ode: {
        Var cond = row(fused, n_last);
        p_hat = predict_head(concat_cols(y_norm_row, cond));
        if (cfg_.train.gamma > 0.0)
          gen_loss = diffusion_train_loss(denoiser_, y_norm, cond, sched_, noise_rng);
        break;
      }
      case Variant::no_diffusion: {
        DynamicsResult dyn = dynamics(fused, s);
        p_hat = predict_head(concat_cols(dyn.h_to, compress_cues(dyn.cues)));
        break;
      }
      case Variant::fm: {
        Var sfeat = row(fused, n_last);
        Var y_hat = seg_mlp_(sfeat);
        p_hat = predict_head(concat_cols(y_hat, sfeat));
        if (cfg_.train.gamma > 0.0) gen_loss = sumsq(sub(y_norm_row, y_hat));
        break;
      }
    }

    Var l1 = square(sub(Var::constant(Mat::Constant(1, 1, std::log2(s.truth + 1.0))),
                        smul(log_(add_scalar(p_hat, 1.0)), 1.0 / M_LN2)));
    if (gen_loss.defined()) return add(l1, smul(gen_loss, cfg_.train.gamma));
    return l1;
  }

  /// Full inference for one sample; deterministic under sample_seed. The
  /// generated (de-normalized) trend lands in *trend when requested.
  double predict(const PreparedSample& s, const TrendNormalizer& norm, std::uint64_t sample_seed,
                 Vec* trend = nullptr) {
    using namespace ad;
    NoGradGuard ng;
    Var fused = encode(s);
    const Eigen::Index n_last = fused.val().rows() - 1;

    switch (variant_) {
      case Variant::full: {
        DynamicsResult dyn = dynamics(fused, s);
        Var cond = concat_cols(dyn.h_to, compress_cues(dyn.cues));
        const Vec y0 = sample_trend(cond.val().row(0).transpose(), sample_seed);
        if (trend) *trend = norm.denormalize(y0);
        return predict_head(concat_cols(Var::constant(y0.transpose()), dyn.h_to)).scalar();
      }
      case Variant::no_ft:
        return predict_head(row(fused, n_last)).scalar();
      case Variant::no_ode: {
        Var cond = row(fused, n_last);
        const Vec y0 = sample_trend(cond.val().row(0).transpose(), sample_seed);
        if (trend) *trend = norm.denormalize(y0);
        return predict_head(concat_cols(Var::constant(y0.transpose()), cond)).scalar();
      }
      case Variant::no_diffusion: {
        DynamicsResult dyn = dynamics(fused, s);
        return predict_head(concat_cols(dyn.h_to, compress_cues(dyn.cues))).scalar();
      }
      case Variant::fm: {
        Var sfeat = row(fused, n_last);
        Var y_hat = seg_mlp_(sfeat);
        if (trend) *trend = norm.denormalize(y_hat.val().row(0).transpose());
        return predict_head(concat_cols(y_hat, sfeat)).scalar();
      }
    }
    throw CasftError("predict: unreachable");
  }

  /// DDIM sampling of the normalized trend under the given condition,
  /// averaging diff.num_samples deterministic draws.
  Vec sample_trend(const Vec& cond, std::uint64_t seed) {
    ad::NoGradGuard ng;
    auto den = [&](const Vec& yk, int k) {
      ad::Var out =
          denoiser_(ad::Var::constant(yk.transpose()), k, ad::Var::constant(cond.transpose()));
      return Vec(out.val().row(0).transpose());
    };
    const int l = cfg_.model.intervals;
    Vec acc = Vec::Zero(l);
    const int m = std::max(1, cfg_.diff.num_samples);
    for (int i = 0; i < m; ++i) {
      const std::uint64_t s =
          seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(i + 1));
      acc += ddim_sample(den, sched_, cfg_.diff.ddim_steps, s, cfg_.diff.eta, nullptr, l,
                         cfg_.diff.x0_clip);
    }
    return acc / static_cast<double>(m);
  }

  DynamicsCore dynamics_core() const {
    DynamicsCore core;
    core.d_h = cfg_.model.d_h;
    const double time_scale = cfg_.t_o;
    core.drift = [this, time_scale](double t, const ad::Var& h) {
      ad::Var tt = ad::Var::constant(Mat::Constant(1, 1, t / time_scale));
      return f2_(ad::concat_cols(h, tt));
    };
    core.rate = [this](const ad::Var& h) { return ad::softplus(growth_(h)); };
    core.jump = [this](const ad::Var& h, const ad::Var& s) { return gru_.step(s, h); };
    return core;
  }

 private:
  ExperimentConfig cfg_;
  Variant variant_;
  nn::ParamStore params_;
  SpatioTemporalEncoder encoder_;
  nn::Mlp f2_;
  nn::Linear growth_;
  nn::GruCell gru_;
  ad::Var h0_;
  Denoiser denoiser_;
  NoiseSchedule sched_;
  nn::Mlp seg_mlp_;
  nn::Mlp head_;
};

}  // namespace casft
