#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "casft/common.hpp"
#include "casft/rng.hpp"

namespace casft {

/// One resharing action: source_user's post was reshared by target_user at
/// `time` seconds after the cascade root. The root post itself is stored as a
/// self-event (root, root, 0) at index 0 of every cascade.
struct RetweetEvent {
  std::string source_user;
  std::string target_user;
  double time = 0.0;

  bool operator==(const RetweetEvent&) const = default;
};

struct Cascade {
  std::string cascade_id;
  std::string root_user;
  std::vector<RetweetEvent> events;  // time-sorted, events[0] is the root at t=0

  bool operator==(const Cascade&) const = default;

  /// Events with time <= t_o, root included.
  std::size_t observed_events(double t_o) const {
    std::size_t n = 0;
    for (const auto& e : events)
      if (e.time <= t_o) ++n;
    return n;
  }

  /// Distinct users appearing in the observed sequence, root included.
  std::size_t participants(double t_o) const {
    std::set<std::string> users;
    for (const auto& e : events) {
      if (e.time > t_o) break;
      users.insert(e.target_user);
    }
    users.insert(root_user);
    return users.size();
  }
};

struct CascadeGraph {
  std::vector<std::string> nodes;  // first-appearance order, root first
  std::vector<std::pair<std::string, std::string>> edges;  // one per non-root event
};

struct GlobalGraph {
  std::vector<std::string> nodes;
  // unique (source, target) pairs with how many times they occurred
  std::vector<std::pair<std::pair<std::string, std::string>, int>> edges;
};

struct CascadeSequence {
  std::vector<std::string> users;
  std::vector<double> times;
};

struct LabeledSample {
  std::string cascade_id;
  double t_o = 0.0;
  double t_p = 0.0;
  long incremental_popularity = 0;      // P
  std::vector<long> segment_targets;    // Y, length l, sums to P
};

struct SplitRatios {
  double train = 0.70, val = 0.15, test = 0.15;
};

struct DatasetSplit {
  std::vector<LabeledSample> train, val, test;
  std::uint64_t seed = 0;
  int min_observed = 10;
  SplitRatios ratios;
};

enum class CascadeFormat { jsonl, deephawkes_tsv };

struct ParseStats {
  std::size_t lines = 0;
  std::size_t sort_repairs = 0;  // cascades whose timestamps had to be re-sorted
};

namespace detail {

inline void canonicalize(Cascade& c, ParseStats* stats) {
  if (c.events.empty()) {
    c.events.push_back({c.root_user, c.root_user, 0.0});
    return;
  }
  if (!std::is_sorted(c.events.begin(), c.events.end(),
                      [](const RetweetEvent& a, const RetweetEvent& b) { return a.time < b.time; })) {
    std::stable_sort(c.events.begin(), c.events.end(),
                     [](const RetweetEvent& a, const RetweetEvent& b) { return a.time < b.time; });
    if (stats) ++stats->sort_repairs;
  }
  const double t0 = c.events.front().time;
  for (auto& e : c.events) e.time -= t0;
  // events[0] becomes the canonical root self-event
  c.events.front() = {c.root_user, c.root_user, 0.0};
}

}  // namespace detail

/// One cascade per line: {"cascade_id": "...", "root_user": "...",
/// "events": [[src, dst, t], ...]}. Events are rebased so the first one sits
/// at t = 0 and is rewritten as the root self-event.
inline std::vector<Cascade> parse_cascades_jsonl(std::istream& in, ParseStats* stats = nullptr) {
  std::vector<Cascade> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (stats) ++stats->lines;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw CasftError("jsonl parse error at line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      Cascade c;
      c.cascade_id = j.at("cascade_id").get<std::string>();
      c.root_user = j.at("root_user").get<std::string>();
      for (const auto& ev : j.at("events")) {
        if (!ev.is_array() || ev.size() != 3)
          throw CasftError("event must be [src, dst, t]");
        c.events.push_back({ev[0].get<std::string>(), ev[1].get<std::string>(), ev[2].get<double>()});
      }
      detail::canonicalize(c, stats);
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw CasftError("jsonl field error at line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// DeepHawkes-style TSV: id<TAB>root<TAB>publish_time<TAB>size<TAB>path:t path:t ...
/// A path is a slash-separated user chain; its last hop is the new edge, so
/// "A/B/C:9" contributes the event (B, C, 9). A single-user path declares the
/// root post.
inline std::vector<Cascade> parse_cascades_deephawkes(std::istream& in, ParseStats* stats = nullptr) {
  std::vector<Cascade> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (stats) ++stats->lines;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    {
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, '\t')) fields.push_back(f);
    }
    if (fields.size() < 5)
      throw CasftError("deephawkes parse error at line " + std::to_string(lineno) +
                       ": expected 5 tab-separated fields, got " + std::to_string(fields.size()));
    Cascade c;
    c.cascade_id = fields[0];
    c.root_user = fields[1];
    std::stringstream paths(fields[4]);
    std::string item;
    while (paths >> item) {
      const auto colon = item.rfind(':');
      if (colon == std::string::npos)
        throw CasftError("deephawkes parse error at line " + std::to_string(lineno) +
                         ": path item without ':' time — \"" + item + "\"");
      double t;
      try {
        t = std::stod(item.substr(colon + 1));
      } catch (const std::exception&) {
        throw CasftError("deephawkes parse error at line " + std::to_string(lineno) +
                         ": bad time in \"" + item + "\"");
      }
      std::vector<std::string> chain;
      std::stringstream cs(item.substr(0, colon));
      std::string hop;
      while (std::getline(cs, hop, '/')) chain.push_back(hop);
      if (chain.empty() || chain.front().empty())
        throw CasftError("deephawkes parse error at line " + std::to_string(lineno) +
                         ": empty path in \"" + item + "\"");
      if (chain.size() == 1) {
        c.events.push_back({chain[0], chain[0], t});  // root declaration
      } else {
        c.events.push_back({chain[chain.size() - 2], chain.back(), t});
      }
    }
    detail::canonicalize(c, stats);
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<Cascade> parse_cascades(std::istream& in, CascadeFormat format,
                                           ParseStats* stats = nullptr) {
  return format == CascadeFormat::jsonl ? parse_cascades_jsonl(in, stats)
                                        : parse_cascades_deephawkes(in, stats);
}

inline std::string cascade_to_jsonl(const Cascade& c) {
  nlohmann::json j;
  j["cascade_id"] = c.cascade_id;
  j["root_user"] = c.root_user;
  auto events = nlohmann::json::array();
  for (const auto& e : c.events)
    events.push_back(nlohmann::json::array({e.source_user, e.target_user, e.time}));
  j["events"] = std::move(events);
  return j.dump();
}

inline void write_cascades_jsonl(std::ostream& out, const std::vector<Cascade>& cs) {
  for (const auto& c : cs) out << cascade_to_jsonl(c) << "\n";
}

inline CascadeGraph build_cascade_graph(const Cascade& c, double t_o) {
  if (t_o <= 0.0) throw CasftError("build_cascade_graph: t_o must be positive");
  CascadeGraph g;
  std::set<std::string> seen;
  auto add_node = [&](const std::string& u) {
    if (seen.insert(u).second) g.nodes.push_back(u);
  };
  bool any = false;
  for (const auto& e : c.events) {
    if (e.time > t_o) break;
    any = true;
    add_node(e.source_user);
    add_node(e.target_user);
    if (e.source_user != e.target_user || e.time > 0.0)
      g.edges.emplace_back(e.source_user, e.target_user);
  }
  if (!any) throw CasftError("empty observation: no events within t_o for cascade " + c.cascade_id);
  return g;
}

inline CascadeSequence build_cascade_sequence(const Cascade& c, double t_o) {
  if (t_o <= 0.0) throw CasftError("build_cascade_sequence: t_o must be positive");
  CascadeSequence s;
  for (const auto& e : c.events) {
    if (e.time > t_o) break;
    s.users.push_back(e.target_user);
    s.times.push_back(e.time);
  }
  if (s.users.empty())
    throw CasftError("empty observation: no events within t_o for cascade " + c.cascade_id);
  return s;
}

/// Union of the per-cascade graphs at t_o; duplicate directed edges collapse
/// into a single entry carrying their multiplicity.
inline GlobalGraph build_global_graph(const std::vector<Cascade>& cascades, double t_o) {
  if (cascades.empty()) throw CasftError("build_global_graph: empty cascade list");
  GlobalGraph g;
  std::set<std::string> seen;
  std::map<std::pair<std::string, std::string>, int> multi;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& c : cascades) {
    CascadeGraph cg = build_cascade_graph(c, t_o);
    for (const auto& u : cg.nodes)
      if (seen.insert(u).second) g.nodes.push_back(u);
    for (const auto& e : cg.edges) {
      auto it = multi.find(e);
      if (it == multi.end()) {
        multi.emplace(e, 1);
        order.push_back(e);
      } else {
        ++it->second;
      }
    }
  }
  for (const auto& e : order) g.edges.emplace_back(e, multi.at(e));
  return g;
}

/// P counts events in (t_o, t_p]; Y bins them into l uniform segments with
/// left-exclusive, right-inclusive boundaries. The last boundary is pinned to
/// t_p exactly so an event at the prediction time lands in segment l.
inline LabeledSample label_sample(const Cascade& c, double t_o, double t_p, int l) {
  if (!(0.0 < t_o && t_o < t_p)) throw CasftError("label_sample: need 0 < t_o < t_p");
  if (l < 1) throw CasftError("label_sample: need l >= 1");
  LabeledSample s;
  s.cascade_id = c.cascade_id;
  s.t_o = t_o;
  s.t_p = t_p;
  s.segment_targets.assign(static_cast<std::size_t>(l), 0);
  std::vector<double> bounds(static_cast<std::size_t>(l));
  const double delta = (t_p - t_o) / l;
  for (int i = 0; i < l; ++i) bounds[static_cast<std::size_t>(i)] = t_o + (i + 1) * delta;
  bounds.back() = t_p;
  for (const auto& e : c.events) {
    if (e.time <= t_o || e.time > t_p) continue;
    auto it = std::lower_bound(bounds.begin(), bounds.end(), e.time);
    if (it == bounds.end()) it = bounds.end() - 1;
    ++s.segment_targets[static_cast<std::size_t>(it - bounds.begin())];
    ++s.incremental_popularity;
  }
  return s;
}

/// Segment boundaries used by label_sample and by the dynamic-cue extractor.
inline std::vector<double> segment_bounds(double t_o, double t_p, int l) {
  std::vector<double> bounds(static_cast<std::size_t>(l));
  const double delta = (t_p - t_o) / l;
  for (int i = 0; i < l; ++i) bounds[static_cast<std::size_t>(i)] = t_o + (i + 1) * delta;
  bounds.back() = t_p;
  return bounds;
}

/// Drops cascades with fewer than min_observed distinct observed participants,
/// then shuffles deterministically and cuts by the configured ratios.
inline DatasetSplit filter_and_split(const std::vector<Cascade>& cascades,
                                     const std::vector<LabeledSample>& samples,
                                     int min_observed, SplitRatios ratios, std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw CasftError("filter_and_split: ratios must sum to 1");
  if (cascades.size() != samples.size())
    throw CasftError("filter_and_split: cascades and samples must be parallel");

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cascades.size(); ++i) {
    if (static_cast<int>(cascades[i].participants(samples[i].t_o)) >= min_observed)
      keep.push_back(i);
  }
  if (keep.size() < 3)
    throw CasftError("filter_and_split: fewer than 3 samples survive the participant filter");

  Rng rng(seed);
  rng.shuffle(keep);

  const auto n = keep.size();
  auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  DatasetSplit split;
  split.seed = seed;
  split.min_observed = min_observed;
  split.ratios = ratios;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[keep[i]];
    if (i < n_train)
      split.train.push_back(s);
    else if (i < n_train + n_val)
      split.val.push_back(s);
    else
      split.test.push_back(s);
  }
  return split;
}

/// Split manifest: cascade ids per split plus the settings that produced it.
inline nlohmann::json split_manifest(const DatasetSplit& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["min_observed"] = s.min_observed;
  j["ratios"] = {s.ratios.train, s.ratios.val, s.ratios.test};
  auto ids = [](const std::vector<LabeledSample>& v) {
    auto a = nlohmann::json::array();
    for (const auto& x : v) a.push_back(x.cascade_id);
    return a;
  };
  j["train"] = ids(s.train);
  j["val"] = ids(s.val);
  j["test"] = ids(s.test);
  return j;
}

}  // namespace casft
