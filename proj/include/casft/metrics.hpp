#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casft/common.hpp"

namespace casft {

namespace detail {

/// Pairwise summation: deterministic for a fixed order and far less drift
/// than naive accumulation.
inline double pairwise_sum(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

inline void check_metric_inputs(const std::vector<double>& truth,
                                const std::vector<double>& pred) {
  if (truth.size() != pred.size()) throw CasftError("metrics: length mismatch");
  if (truth.empty()) throw CasftError("metrics: empty input");
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] < 0.0 || pred[i] < 0.0) throw CasftError("metrics: negative popularity value");
}

}  // namespace detail

/// Mean squared logarithmic error, base-2 logs with the +1 shift.
inline double msle(const std::vector<double>& truth, const std::vector<double>& pred) {
  detail::check_metric_inputs(truth, pred);
  std::vector<double> terms(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = std::log2(truth[i] + 1.0) - std::log2(pred[i] + 1.0);
    terms[i] = d * d;
  }
  return detail::pairwise_sum(terms, 0, terms.size()) / static_cast<double>(terms.size());
}

/// Mean absolute percentage error in log space; the +2 shift keeps the
/// denominator away from zero.
inline double mape(const std::vector<double>& truth, const std::vector<double>& pred) {
  detail::check_metric_inputs(truth, pred);
  std::vector<double> terms(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double denom = std::log2(truth[i] + 2.0);
    terms[i] = std::abs(std::log2(truth[i] + 2.0) - std::log2(pred[i] + 2.0)) / denom;
  }
  return detail::pairwise_sum(terms, 0, terms.size()) / static_cast<double>(terms.size());
}

/// Training regression loss; by construction the same formula as msle.
inline double regression_loss(const std::vector<double>& truth, const std::vector<double>& pred) {
  return msle(truth, pred);
}

inline double total_loss(double l1, double l2, double gamma) {
  if (gamma < 0.0) throw CasftError("total_loss: gamma must be non-negative");
  return l1 + gamma * l2;
}

struct PredictionRecord {
  std::string cascade_id;
  double truth = 0.0;
  double predicted = 0.0;
};

struct MetricsReport {
  double msle = 0.0;
  double mape = 0.0;
  std::size_t count = 0;
  std::string split;
  std::string config_hash;
};

inline MetricsReport make_report(const std::vector<PredictionRecord>& records,
                                 const std::string& split, const std::string& config_hash) {
  std::vector<double> truth, pred;
  truth.reserve(records.size());
  pred.reserve(records.size());
  for (const auto& r : records) {
    truth.push_back(r.truth);
    pred.push_back(r.predicted);
  }
  MetricsReport rep;
  rep.msle = msle(truth, pred);
  rep.mape = mape(truth, pred);
  rep.count = records.size();
  rep.split = split;
  rep.config_hash = config_hash;
  return rep;
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
  return nlohmann::json{{"msle", r.msle},
                        {"mape", r.mape},
                        {"count", r.count},
                        {"split", r.split},
                        {"config_hash", r.config_hash}};
}

inline void write_predictions_csv(std::ostream& out, const std::vector<PredictionRecord>& recs) {
  out << "cascade_id,P,P_hat,P_hat_rounded\n";
  char buf[64];
  for (const auto& r : recs) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.predicted);
    out << r.cascade_id << "," << static_cast<long long>(std::llround(r.truth)) << "," << buf
        << "," << std::llround(r.predicted) << "\n";
  }
}

}  // namespace casft
