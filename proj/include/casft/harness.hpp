#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "casft/cascade.hpp"
#include "casft/checkpoint.hpp"
#include "casft/common.hpp"
#include "casft/config.hpp"
#include "casft/embed_cache.hpp"
#include "casft/hawkes.hpp"
#include "casft/metrics.hpp"
#include "casft/model.hpp"
#include "casft/netsmf.hpp"
#include "casft/plot.hpp"

namespace casft {

inline std::vector<Cascade> load_cascades(const DataConfig& d) {
  if (d.source == "synthetic") {
    HawkesParams p;
    p.mu = d.mu;
    p.alpha = d.alpha;
    p.delta = d.delta;
    p.horizon = d.horizon;
    p.graph.population = d.population;
    p.graph.alpha_jitter = d.alpha_jitter;
    return simulate_hawkes_cascades(d.synth_n, p, d.synth_seed);
  }
  const std::string path = resolve_data_path(d.path);
  std::ifstream f(path);
  if (!f) throw CasftError("cannot open dataset " + path);
  return parse_cascades(f, d.source == "jsonl" ? CascadeFormat::jsonl
                                               : CascadeFormat::deephawkes_tsv);
}

/// Observed slice of a cascade: events up to t_o, capped at max_events.
inline Cascade observed_view(const Cascade& c, double t_o, int max_events) {
  Cascade v;
  v.cascade_id = c.cascade_id;
  v.root_user = c.root_user;
  for (const auto& e : c.events) {
    if (e.time > t_o) break;
    v.events.push_back(e);
    if (max_events > 0 && static_cast<int>(v.events.size()) >= max_events) break;
  }
  return v;
}

/// The five hand-built features of the reference baseline: observed size,
/// mean-to-max inter-event gap ratio, cascade tree depth, root out-degree, and
/// the time of the last observed event.
inline Vec baseline_features(const Cascade& c, double t_o) {
  const Cascade v = observed_view(c, t_o, 0);
  const auto n = v.events.size();
  Vec f(5);
  f[0] = static_cast<double>(n);

  double mean_gap = 0.0, max_gap = 0.0;
  if (n >= 2) {
    for (std::size_t i = 1; i < n; ++i) {
      const double g = v.events[i].time - v.events[i - 1].time;
      mean_gap += g;
      max_gap = std::max(max_gap, g);
    }
    mean_gap /= static_cast<double>(n - 1);
  }
  f[1] = max_gap > 0.0 ? mean_gap / max_gap : 1.0;

  std::map<std::string, int> depth;
  depth[v.root_user] = 0;
  int max_depth = 0, root_degree = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const auto& e = v.events[i];
    const auto it = depth.find(e.source_user);
    const int d = (it == depth.end() ? 0 : it->second) + 1;
    auto [dit, inserted] = depth.emplace(e.target_user, d);
    if (!inserted) dit->second = std::min(dit->second, d);
    max_depth = std::max(max_depth, d);
    if (e.source_user == v.root_user) ++root_degree;
  }
  f[2] = static_cast<double>(max_depth);
  f[3] = static_cast<double>(root_degree);
  f[4] = n >= 1 ? v.events[n - 1].time : 0.0;
  return f;
}

struct PreparedDataset {
  std::vector<PreparedSample> train, val, test;
  DatasetSplit split;
  TrendNormalizer normalizer;
  std::size_t generated = 0;  // cascades before the participant filter
};

/// Runs the preprocessing protocol and turns every surviving cascade into a
/// PreparedSample: labels, structural embeddings, token matrices, bounds.
/// Local embeddings come from each observed cascade graph; global embeddings
/// from the union graph of the *training* cascades, with unseen users mapped
/// to the zero vector.
inline PreparedDataset build_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<Cascade> cascades = load_cascades(cfg.data);
  if (cascades.empty()) throw CasftError("build_dataset: no cascades");

  std::vector<LabeledSample> labels;
  labels.reserve(cascades.size());
  for (const auto& c : cascades)
    labels.push_back(label_sample(c, cfg.t_o, cfg.t_p, cfg.model.intervals));

  SplitRatios ratios{cfg.split.train, cfg.split.val, cfg.split.test};
  PreparedDataset ds;
  ds.generated = cascades.size();
  ds.split = filter_and_split(cascades, labels, cfg.split.min_observed, ratios, cfg.split.seed);

  std::map<std::string, const Cascade*> by_id;
  for (const auto& c : cascades) by_id[c.cascade_id] = &c;

  // global graph over the training corpus only
  std::vector<Cascade> train_cascades;
  for (const auto& s : ds.split.train) train_cascades.push_back(*by_id.at(s.cascade_id));
  const GlobalGraph gg = build_global_graph(train_cascades, cfg.t_o);
  GlobalEmbedOptions gopt;
  gopt.dim = cfg.model.d_g;
  gopt.seed = cfg.split.seed;
  const NodeEmbeddings global_emb = global_embed(gg, gopt);

  std::optional<EmbeddingCache> cache;
  if (!cfg.data.cache_dir.empty()) cache.emplace(cfg.data.cache_dir);

  GraphWaveOptions gw;
  gw.num_scales = cfg.model.gw_num_scales;
  gw.num_points = cfg.model.d_c / (2 * cfg.model.gw_num_scales);
  const std::string gw_params = "gw:s" + std::to_string(gw.num_scales) + ":p" +
                                std::to_string(gw.num_points) + ":t" + std::to_string(gw.t_max);

  auto prepare = [&](const LabeledSample& lab) {
    const Cascade& full = *by_id.at(lab.cascade_id);
    const Cascade view = observed_view(full, cfg.t_o, cfg.model.max_observed_events);
    const CascadeGraph graph = build_cascade_graph(view, cfg.t_o);
    NodeEmbeddings local;
    if (cache) {
      const std::string key = EmbeddingCache::key(graph_content_hash(graph), gw_params);
      if (cache->contains(key)) {
        local = cache->load(key);
      } else {
        local = graphwave_embed(graph, gw);
        cache->store(key, local);
      }
    } else {
      local = graphwave_embed(graph, gw);
    }
    const CascadeSequence seq = build_cascade_sequence(view, cfg.t_o);

    PreparedSample ps;
    ps.cascade_id = lab.cascade_id;
    ps.tokens = build_subsequences(seq, local, global_emb, cfg.model.encoding_dim);
    ps.times = seq.times;
    ps.truth = static_cast<double>(lab.incremental_popularity);
    ps.segments = lab.segment_targets;
    ps.bounds = segment_bounds(cfg.t_o, cfg.t_p, cfg.model.intervals);
    ps.baseline_features = baseline_features(full, cfg.t_o);
    return ps;
  };

  for (const auto& s : ds.split.train) ds.train.push_back(prepare(s));
  for (const auto& s : ds.split.val) ds.val.push_back(prepare(s));
  for (const auto& s : ds.split.test) ds.test.push_back(prepare(s));

  std::vector<std::vector<long>> train_targets;
  for (const auto& s : ds.split.train) train_targets.push_back(s.segment_targets);
  ds.normalizer.fit(train_targets);
  return ds;
}

/// Adam with bias correction. Parameters whose gradient never materialized in
/// a step are left untouched.
class Adam {
 public:
  Adam(nn::ParamStore& ps, double lr) : lr_(lr) {
    m_.resize(ps.size());
    v_.resize(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
      m_[i] = Mat::Zero(ps.var(i).val().rows(), ps.var(i).val().cols());
      v_[i] = Mat::Zero(ps.var(i).val().rows(), ps.var(i).val().cols());
    }
  }

  void step(nn::ParamStore& ps) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ad::Var& p = ps.var(i);
      const Mat& g = p.grad();
      if (g.cwiseAbs().maxCoeff() == 0.0) continue;
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
      const Mat mhat = m_[i] / bc1;
      const Mat vhat = v_[i] / bc2;
      p.mutable_val() -=
          (lr_ * mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
    }
  }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

inline std::uint64_t per_item_seed(std::uint64_t base, std::size_t index) {
  return base ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1));
}

/// Inference over a list of samples; deterministic given eval_seed.
inline std::vector<PredictionRecord> predict_split(CasftModel& model,
                                                   std::vector<PreparedSample>& samples,
                                                   const TrendNormalizer& norm,
                                                   std::uint64_t eval_seed) {
  std::vector<PredictionRecord> records;
  records.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    PredictionRecord r;
    r.cascade_id = samples[i].cascade_id;
    r.truth = samples[i].truth;
    r.predicted = model.predict(samples[i], norm, per_item_seed(eval_seed, i));
    records.push_back(r);
  }
  return records;
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_msle = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  double initial_train_msle = 0.0;
  double final_train_msle = 0.0;
  int best_epoch = 0;
};

/// Mini-batch training with early stopping on validation MSLE. Deterministic
/// for a fixed (config, dataset) pair on a single device.
inline TrainResult train_model(const ExperimentConfig& cfg, PreparedDataset& ds,
                               std::ostream* log_stream = nullptr) {
  cfg.validate();
  if (ds.train.empty()) throw CasftError("train_model: empty training split");

  CasftModel model(cfg, cfg.train.seed);
  Adam adam(model.params(), cfg.train.lr);
  Rng shuffle_rng(cfg.train.seed ^ 0x5851f42d4c957f2dULL);
  Rng noise_rng(cfg.train.seed ^ 0x14057b7ef767814fULL);

  TrainResult result;
  {
    auto recs = predict_split(model, ds.train, ds.normalizer, cfg.train.seed);
    result.initial_train_msle = make_report(recs, "train", config_hash(cfg)).msle;
  }

  std::vector<std::size_t> order(ds.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::string, Mat>> best_params;
  int best_epoch = 0, stale = 0;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.train.batch, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + cfg.train.batch);
      model.params().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        ad::Var loss = model.training_loss(ds.train[order[i]], ds.normalizer, noise_rng);
        batch_loss += loss.scalar();
        ad::smul(loss, 1.0 / static_cast<double>(end - start)).backward();
      }
      if (!std::isfinite(batch_loss))
        throw CasftError("training diverged (non-finite loss) in epoch " +
                         std::to_string(epoch) + ", batch " + std::to_string(batch_id));
      adam.step(model.params());
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(order.size());

    EpochLog lg;
    lg.epoch = epoch;
    lg.train_loss = epoch_loss;
    bool stop = false;
    if (!ds.val.empty()) {
      auto recs = predict_split(model, ds.val, ds.normalizer, cfg.train.seed + 1);
      lg.val_msle = make_report(recs, "val", config_hash(cfg)).msle;
      if (lg.val_msle < best_val - 1e-12) {
        best_val = lg.val_msle;
        best_epoch = epoch;
        best_params.clear();
        auto& ps = model.params();
        for (std::size_t i = 0; i < ps.size(); ++i)
          best_params.emplace_back(ps.name(i), ps.var(i).val());
        stale = 0;
      } else if (++stale >= cfg.train.patience) {
        stop = true;
      }
    }
    result.log.push_back(lg);
    if (log_stream)
      *log_stream << "{\"epoch\":" << epoch << ",\"train_loss\":" << epoch_loss
                  << ",\"val_msle\":" << lg.val_msle << ",\"early_stop\":" << (stop ? "true" : "false")
                  << "}\n";
    if (stop) break;
  }

  if (!best_params.empty()) {
    auto& ps = model.params();
    for (const auto& [name, m] : best_params) ps.find(name)->mutable_val() = m;
  } else {
    best_epoch = static_cast<int>(result.log.size()) - 1;
  }
  result.best_epoch = best_epoch;

  {
    auto recs = predict_split(model, ds.train, ds.normalizer, cfg.train.seed);
    result.final_train_msle = make_report(recs, "train", config_hash(cfg)).msle;
  }
  result.checkpoint = snapshot(model, ds.normalizer, best_epoch,
                               std::isfinite(best_val) ? best_val : result.final_train_msle);
  return result;
}

/// Full inference over one split of the dataset attached to a checkpoint.
inline std::pair<MetricsReport, std::vector<PredictionRecord>> evaluate_checkpoint(
    const Checkpoint& ck, PreparedDataset& ds, const std::string& split_name) {
  std::vector<PreparedSample>* samples = nullptr;
  if (split_name == "train")
    samples = &ds.train;
  else if (split_name == "val")
    samples = &ds.val;
  else if (split_name == "test")
    samples = &ds.test;
  else
    throw CasftError("evaluate: unknown split " + split_name);
  if (samples->empty()) throw CasftError("evaluate: split " + split_name + " is empty");

  CasftModel model = restore_model(ck);
  auto records = predict_split(model, *samples, ck.normalizer, ck.config.train.seed + 2);
  return {make_report(records, split_name, ck.hash), records};
}

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double msle = 0.0;
  double mape = 0.0;
  std::uint64_t ddim_calls = 0;
};

inline const std::vector<std::string>& all_variants() {
  static const std::vector<std::string> v{"full", "no_ft", "no_ode", "no_diffusion", "fm"};
  return v;
}

/// Trains and evaluates each requested variant under a shared seed and shared
/// data; reports test metrics plus how many DDIM sampler invocations the run
/// made (structural check that ablated branches stay cold).
inline std::vector<AblationRow> ablate(const ExperimentConfig& base, PreparedDataset& ds,
                                       const std::vector<std::string>& variants,
                                       std::ostream* log_stream = nullptr) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    ExperimentConfig cfg = base;
    cfg.variant = v;
    const std::uint64_t before = ddim_call_counter().load();
    TrainResult tr = train_model(cfg, ds, log_stream);
    auto [report, records] = evaluate_checkpoint(tr.checkpoint, ds, "test");
    AblationRow row;
    row.variant = v;
    row.seed = cfg.train.seed;
    row.msle = report.msle;
    row.mape = report.mape;
    row.ddim_calls = ddim_call_counter().load() - before;
    rows.push_back(row);
  }
  return rows;
}

struct SweepRow {
  double value = 0.0;
  std::string label;
  double msle = 0.0;
  double mape = 0.0;
};

enum class SweepAxis { diffusion_steps, hidden_dim, intervals, solver };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "diffusion_steps") return SweepAxis::diffusion_steps;
  if (s == "hidden_dim") return SweepAxis::hidden_dim;
  if (s == "intervals") return SweepAxis::intervals;
  if (s == "solver") return SweepAxis::solver;
  throw CasftError("unknown sweep axis " + s +
                   " (options: diffusion_steps, hidden_dim, intervals, solver)");
}

/// One train+evaluate per value under a shared seed. String values name ODE
/// solvers; numeric values set the chosen axis. Returns rows in input order.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis,
                                   const std::vector<std::string>& values,
                                   std::ostream* log_stream = nullptr) {
  std::vector<SweepRow> rows;
  // dataset depends on l for the intervals axis, so it is rebuilt per value
  std::optional<PreparedDataset> shared;
  if (axis != SweepAxis::intervals) shared.emplace(build_dataset(base));

  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    ExperimentConfig cfg = base;
    SweepRow row;
    row.label = values[vi];
    switch (axis) {
      case SweepAxis::diffusion_steps:
        cfg.diff.K = std::stoi(values[vi]);
        cfg.diff.ddim_steps = std::min(cfg.diff.ddim_steps, cfg.diff.K);
        row.value = cfg.diff.K;
        break;
      case SweepAxis::hidden_dim:
        cfg.model.d_h = std::stoi(values[vi]);
        row.value = cfg.model.d_h;
        break;
      case SweepAxis::intervals:
        cfg.model.intervals = std::stoi(values[vi]);
        row.value = cfg.model.intervals;
        break;
      case SweepAxis::solver:
        ode_method_from_string(values[vi]);  // throws with the option list
        cfg.ode.method = values[vi];
        row.value = static_cast<double>(vi);
        break;
    }
    cfg.validate();
    PreparedDataset local;
    PreparedDataset& ds = shared ? *shared : local;
    if (!shared) local = build_dataset(cfg);
    TrainResult tr = train_model(cfg, ds, log_stream);
    auto [report, records] = evaluate_checkpoint(tr.checkpoint, ds, "test");
    row.msle = report.msle;
    row.mape = report.mape;
    rows.push_back(row);
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::string& axis,
                            const std::vector<SweepRow>& rows) {
  out << axis << ",msle,mape\n";
  for (const auto& r : rows) out << r.label << "," << r.msle << "," << r.mape << "\n";
}

inline void write_sweep_plot(const std::string& path, const std::string& axis,
                             const std::vector<SweepRow>& rows) {
  std::vector<double> xs;
  std::map<std::string, std::vector<double>> series;
  for (const auto& r : rows) {
    xs.push_back(r.value);
    series["msle"].push_back(r.msle);
    series["mape"].push_back(r.mape);
  }
  write_line_svg(path, "sweep: " + axis, xs, series);
}

/// Feature-based reference predictor: standardized hand-built features into a
/// small MLP trained on the regression loss alone.
struct BaselineResult {
  MetricsReport report;
  std::vector<PredictionRecord> records;
};

inline BaselineResult baseline_feature_mlp(const ExperimentConfig& cfg, PreparedDataset& ds) {
  if (ds.train.empty()) throw CasftError("baseline: empty training split");
  const Eigen::Index dim = ds.train.front().baseline_features.size();

  Vec mean = Vec::Zero(dim), stdev = Vec::Zero(dim);
  for (const auto& s : ds.train) mean += s.baseline_features;
  mean /= static_cast<double>(ds.train.size());
  for (const auto& s : ds.train)
    stdev += (s.baseline_features - mean).cwiseProduct(s.baseline_features - mean);
  stdev = (stdev / static_cast<double>(ds.train.size())).cwiseSqrt().cwiseMax(1e-8);
  auto featurize = [&](const PreparedSample& s) {
    return Mat(((s.baseline_features - mean).cwiseQuotient(stdev)).transpose());
  };

  nn::ParamStore params;
  Rng rng(cfg.train.seed);
  nn::Mlp mlp(params, "baseline", {static_cast<int>(dim), 32, 1}, nn::Act::relu, rng);
  Adam adam(params, cfg.train.lr);
  Rng shuffle_rng(cfg.train.seed ^ 0xda3e39cb94b95bdbULL);

  std::vector<std::size_t> order(ds.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.train.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.train.batch);
      params.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const PreparedSample& s = ds.train[order[i]];
        ad::Var p_hat = ad::softplus(mlp(ad::Var::constant(featurize(s))));
        ad::Var l1 = ad::square(
            ad::sub(ad::Var::constant(Mat::Constant(1, 1, std::log2(s.truth + 1.0))),
                    ad::smul(ad::log_(ad::add_scalar(p_hat, 1.0)), 1.0 / M_LN2)));
        ad::smul(l1, 1.0 / static_cast<double>(end - start)).backward();
      }
      adam.step(params);
    }
  }

  BaselineResult res;
  ad::NoGradGuard ng;
  for (const auto& s : ds.test) {
    PredictionRecord r;
    r.cascade_id = s.cascade_id;
    r.truth = s.truth;
    r.predicted = ad::softplus(mlp(ad::Var::constant(featurize(s)))).scalar();
    res.records.push_back(r);
  }
  res.report = make_report(res.records, "test", config_hash(cfg));
  return res;
}

}  // namespace casft
