#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "casft/common.hpp"
#include "casft/ode.hpp"

namespace casft {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | jsonl | deephawkes
  std::string path;                  // for file sources, resolved against CASFT_DATA_DIR
  std::string cache_dir;             // optional embedding cache; not part of the config hash
  // synthetic generator settings
  std::size_t synth_n = 256;
  double mu = 0.6;
  double alpha = 0.5;
  double delta = 0.35;
  double horizon = 120.0;
  std::size_t population = 1200;
  double alpha_jitter = 0.0;
  std::uint64_t synth_seed = 7;
};

struct ModelConfig {
  int encoding_dim = 64;   // B; must equal d_c
  int d_c = 64;            // local embedding width (2 * scales * points)
  int d_g = 64;            // global embedding width
  int gw_num_scales = 2;
  int d_attn = 64;
  int d_attn_global = 0;   // 0: share d_attn
  int d_h = 32;
  int intervals = 8;       // l
  std::string pooling = "last";  // last | mean
  int head_width = 64;
  int max_observed_events = 256;
};

struct OdeConfig {
  std::string method = "dopri5";
  double rtol = 1e-5;
  double atol = 1e-5;
  double step = 0.1;
  std::string cues = "absolute";  // absolute | increment
};

struct DiffusionConfig {
  int K = 1000;
  std::string schedule = "linear";
  double beta_min = 1e-4;
  double beta_max = 0.02;
  int ddim_steps = 50;
  double eta = 0.0;
  int num_samples = 1;
  double x0_clip = 8.0;  // sampler x0 clamp in normalized units; 0 disables
  int denoiser_width = 128;
  int denoiser_depth = 3;
  int step_dim = 32;
};

struct TrainSettings {
  double lr = 1e-3;
  int batch = 64;
  int epochs = 100;
  int patience = 10;
  double gamma = 0.1;
  std::uint64_t seed = 1;
};

struct SplitSettings {
  double train = 0.70, val = 0.15, test = 0.15;
  int min_observed = 10;
  std::uint64_t seed = 42;
};

struct ExperimentConfig {
  double t_o = 30.0;
  double t_p = 120.0;
  std::string variant = "full";  // full | no_ft | no_ode | no_diffusion | fm
  DataConfig data;
  ModelConfig model;
  OdeConfig ode;
  DiffusionConfig diff;
  TrainSettings train;
  SplitSettings split;
  std::string out_dir = "out";  // not part of the config hash

  SolverSpec solver() const {
    SolverSpec s;
    s.method = ode_method_from_string(ode.method);
    s.rtol = ode.rtol;
    s.atol = ode.atol;
    s.step = ode.step;
    return s;
  }

  void validate() const {
    if (!(0.0 < t_o && t_o < t_p)) throw CasftError("config: need 0 < t_o < t_p");
    if (model.encoding_dim != model.d_c)
      throw CasftError("config: encoding_dim must equal d_c (tokens are z(t) + E_c(u))");
    if (model.encoding_dim % 2 != 0) throw CasftError("config: encoding_dim must be even");
    if (model.d_c % (2 * model.gw_num_scales) != 0)
      throw CasftError("config: d_c must be divisible by 2 * gw_num_scales");
    if (model.intervals < 1) throw CasftError("config: intervals must be >= 1");
    if (model.pooling != "last" && model.pooling != "mean")
      throw CasftError("config: pooling must be last or mean");
    if (variant != "full" && variant != "no_ft" && variant != "no_ode" &&
        variant != "no_diffusion" && variant != "fm")
      throw CasftError("config: unknown variant " + variant);
    if (diff.K < 2 || diff.ddim_steps < 1 || diff.ddim_steps > diff.K)
      throw CasftError("config: need K >= 2 and 1 <= ddim_steps <= K");
    if (train.gamma < 0.0) throw CasftError("config: gamma must be non-negative");
    const double rs = split.train + split.val + split.test;
    if (std::abs(rs - 1.0) > 1e-9) throw CasftError("config: split ratios must sum to 1");
    ode_method_from_string(ode.method);  // throws on unknown solver
  }
};

inline void to_json(nlohmann::json& j, const DataConfig& c) {
  j = {{"source", c.source},   {"path", c.path},
       {"cache_dir", c.cache_dir},
       {"synth_n", c.synth_n}, {"mu", c.mu},
       {"alpha", c.alpha},     {"delta", c.delta},
       {"horizon", c.horizon}, {"population", c.population},
       {"alpha_jitter", c.alpha_jitter}, {"synth_seed", c.synth_seed}};
}
inline void from_json(const nlohmann::json& j, DataConfig& c) {
  c.source = j.value("source", c.source);
  c.path = j.value("path", c.path);
  c.cache_dir = j.value("cache_dir", c.cache_dir);
  c.synth_n = j.value("synth_n", c.synth_n);
  c.mu = j.value("mu", c.mu);
  c.alpha = j.value("alpha", c.alpha);
  c.delta = j.value("delta", c.delta);
  c.horizon = j.value("horizon", c.horizon);
  c.population = j.value("population", c.population);
  c.alpha_jitter = j.value("alpha_jitter", c.alpha_jitter);
  c.synth_seed = j.value("synth_seed", c.synth_seed);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoding_dim", c.encoding_dim},
       {"d_c", c.d_c},
       {"d_g", c.d_g},
       {"gw_num_scales", c.gw_num_scales},
       {"d_attn", c.d_attn},
       {"d_attn_global", c.d_attn_global},
       {"d_h", c.d_h},
       {"intervals", c.intervals},
       {"pooling", c.pooling},
       {"head_width", c.head_width},
       {"max_observed_events", c.max_observed_events}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.encoding_dim = j.value("encoding_dim", c.encoding_dim);
  c.d_c = j.value("d_c", c.d_c);
  c.d_g = j.value("d_g", c.d_g);
  c.gw_num_scales = j.value("gw_num_scales", c.gw_num_scales);
  c.d_attn = j.value("d_attn", c.d_attn);
  c.d_attn_global = j.value("d_attn_global", c.d_attn_global);
  c.d_h = j.value("d_h", c.d_h);
  c.intervals = j.value("intervals", c.intervals);
  c.pooling = j.value("pooling", c.pooling);
  c.head_width = j.value("head_width", c.head_width);
  c.max_observed_events = j.value("max_observed_events", c.max_observed_events);
}

inline void to_json(nlohmann::json& j, const OdeConfig& c) {
  j = {{"method", c.method}, {"rtol", c.rtol}, {"atol", c.atol}, {"step", c.step}, {"cues", c.cues}};
}
inline void from_json(const nlohmann::json& j, OdeConfig& c) {
  c.method = j.value("method", c.method);
  c.rtol = j.value("rtol", c.rtol);
  c.atol = j.value("atol", c.atol);
  c.step = j.value("step", c.step);
  c.cues = j.value("cues", c.cues);
}

inline void to_json(nlohmann::json& j, const DiffusionConfig& c) {
  j = {{"K", c.K},
       {"schedule", c.schedule},
       {"beta_min", c.beta_min},
       {"beta_max", c.beta_max},
       {"ddim_steps", c.ddim_steps},
       {"eta", c.eta},
       {"num_samples", c.num_samples},
       {"x0_clip", c.x0_clip},
       {"denoiser_width", c.denoiser_width},
       {"denoiser_depth", c.denoiser_depth},
       {"step_dim", c.step_dim}};
}
inline void from_json(const nlohmann::json& j, DiffusionConfig& c) {
  c.K = j.value("K", c.K);
  c.schedule = j.value("schedule", c.schedule);
  c.beta_min = j.value("beta_min", c.beta_min);
  c.beta_max = j.value("beta_max", c.beta_max);
  c.ddim_steps = j.value("ddim_steps", c.ddim_steps);
  c.eta = j.value("eta", c.eta);
  c.num_samples = j.value("num_samples", c.num_samples);
  c.x0_clip = j.value("x0_clip", c.x0_clip);
  c.denoiser_width = j.value("denoiser_width", c.denoiser_width);
  c.denoiser_depth = j.value("denoiser_depth", c.denoiser_depth);
  c.step_dim = j.value("step_dim", c.step_dim);
}

inline void to_json(nlohmann::json& j, const TrainSettings& c) {
  j = {{"lr", c.lr},           {"batch", c.batch},   {"epochs", c.epochs},
       {"patience", c.patience}, {"gamma", c.gamma}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, TrainSettings& c) {
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.patience = j.value("patience", c.patience);
  c.gamma = j.value("gamma", c.gamma);
  c.seed = j.value("seed", c.seed);
}

inline void to_json(nlohmann::json& j, const SplitSettings& c) {
  j = {{"train", c.train},
       {"val", c.val},
       {"test", c.test},
       {"min_observed", c.min_observed},
       {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, SplitSettings& c) {
  c.train = j.value("train", c.train);
  c.val = j.value("val", c.val);
  c.test = j.value("test", c.test);
  c.min_observed = j.value("min_observed", c.min_observed);
  c.seed = j.value("seed", c.seed);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"t_o", c.t_o},     {"t_p", c.t_p},   {"variant", c.variant}, {"data", c.data},
       {"model", c.model}, {"ode", c.ode},   {"diff", c.diff},       {"train", c.train},
       {"split", c.split}, {"out_dir", c.out_dir}};
}
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.t_o = j.value("t_o", c.t_o);
  c.t_p = j.value("t_p", c.t_p);
  c.variant = j.value("variant", c.variant);
  if (j.contains("data")) j.at("data").get_to(c.data);
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("ode")) j.at("ode").get_to(c.ode);
  if (j.contains("diff")) j.at("diff").get_to(c.diff);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("split")) j.at("split").get_to(c.split);
  c.out_dir = j.value("out_dir", c.out_dir);
}

/// Hash over everything that changes results; output and cache locations are
/// excluded.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = c;
  j.erase("out_dir");
  j["data"].erase("cache_dir");
  return fnv1a_hex(j.dump());
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CasftError("cannot open config file " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CasftError("config parse error in " + path + ": " + e.what());
  }
  ExperimentConfig c = j.get<ExperimentConfig>();
  c.validate();
  return c;
}

/// Resolve a data path against CASFT_DATA_DIR when it is relative.
inline std::string resolve_data_path(const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  if (const char* root = std::getenv("CASFT_DATA_DIR")) return std::string(root) + "/" + path;
  return path;
}

/// Observation/prediction presets for the common corpora; times in seconds
/// except the citation corpus (years).
inline void apply_preset(ExperimentConfig& c, const std::string& name) {
  const double day = 86400.0, hour = 3600.0;
  if (name == "twitter-1d") {
    c.t_o = 1 * day;
    c.t_p = 15 * day;
  } else if (name == "twitter-2d") {
    c.t_o = 2 * day;
    c.t_p = 15 * day;
  } else if (name == "aps-3y") {
    c.t_o = 3.0;
    c.t_p = 20.0;
  } else if (name == "aps-5y") {
    c.t_o = 5.0;
    c.t_p = 20.0;
  } else if (name == "weibo-0.5h") {
    c.t_o = 0.5 * hour;
    c.t_p = 24 * hour;
  } else if (name == "weibo-1h") {
    c.t_o = 1 * hour;
    c.t_p = 24 * hour;
  } else {
    throw CasftError("unknown preset " + name);
  }
}

}  // namespace casft
