#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casft/common.hpp"
#include "casft/config.hpp"
#include "casft/diffusion.hpp"
#include "casft/model.hpp"

namespace casft {

namespace detail {

inline nlohmann::json matrix_to_json(const Mat& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Mat matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw CasftError("checkpoint matrix size mismatch");
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2)
      m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)];
  return m;
}

}  // namespace detail

struct Checkpoint {
  ExperimentConfig config;
  std::string hash;  // config hash at save time
  int epoch = 0;
  double val_msle = 0.0;
  TrendNormalizer normalizer;
  std::vector<std::pair<std::string, Mat>> parameters;
};

inline Checkpoint snapshot(CasftModel& model, const TrendNormalizer& norm, int epoch,
                           double val_msle) {
  Checkpoint ck;
  ck.config = model.config();
  ck.hash = config_hash(ck.config);
  ck.epoch = epoch;
  ck.val_msle = val_msle;
  ck.normalizer = norm;
  auto& ps = model.params();
  for (std::size_t i = 0; i < ps.size(); ++i) ck.parameters.emplace_back(ps.name(i), ps.var(i).val());
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json j;
  j["config"] = ck.config;
  j["config_hash"] = ck.hash;
  j["epoch"] = ck.epoch;
  j["val_msle"] = ck.val_msle;
  if (ck.normalizer.mean.size() > 0) {
    j["normalizer"] = {
        {"mean", std::vector<double>(ck.normalizer.mean.data(),
                                     ck.normalizer.mean.data() + ck.normalizer.mean.size())},
        {"stdev", std::vector<double>(ck.normalizer.stdev.data(),
                                      ck.normalizer.stdev.data() + ck.normalizer.stdev.size())}};
  }
  auto params = nlohmann::json::object();
  for (const auto& [name, m] : ck.parameters) params[name] = detail::matrix_to_json(m);
  j["parameters"] = std::move(params);
  std::ofstream f(path);
  if (!f) throw CasftError("cannot write checkpoint " + path);
  f << j.dump() << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CasftError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CasftError("checkpoint parse error: " + std::string(e.what()));
  }
  Checkpoint ck;
  ck.config = j.at("config").get<ExperimentConfig>();
  ck.hash = j.at("config_hash").get<std::string>();
  ck.epoch = j.value("epoch", 0);
  ck.val_msle = j.value("val_msle", 0.0);
  if (j.contains("normalizer")) {
    const auto mean = j["normalizer"].at("mean").get<std::vector<double>>();
    const auto stdev = j["normalizer"].at("stdev").get<std::vector<double>>();
    ck.normalizer.mean = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    ck.normalizer.stdev =
        Eigen::Map<const Vec>(stdev.data(), static_cast<Eigen::Index>(stdev.size()));
  }
  for (const auto& [name, jm] : j.at("parameters").items())
    ck.parameters.emplace_back(name, detail::matrix_from_json(jm));
  return ck;
}

/// Rebuilds the model and overwrites its parameters with the stored values.
inline CasftModel restore_model(const Checkpoint& ck) {
  if (config_hash(ck.config) != ck.hash)
    throw CasftError("checkpoint hash mismatch: config was edited after saving");
  CasftModel model(ck.config, ck.config.train.seed);
  auto& ps = model.params();
  for (const auto& [name, m] : ck.parameters) {
    ad::Var* v = ps.find(name);
    if (!v) throw CasftError("checkpoint parameter " + name + " has no slot in the model");
    if (v->val().rows() != m.rows() || v->val().cols() != m.cols())
      throw CasftError("checkpoint parameter " + name + " has mismatched shape");
    v->mutable_val() = m;
  }
  return model;
}

}  // namespace casft
