#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "casft/cascade.hpp"
#include "casft/common.hpp"
#include "casft/rng.hpp"

namespace casft {

/// Knobs for how simulated cascades attach to users.
struct HawkesGraphModel {
  std::size_t population = 1000;  // shared user pool across cascades
  double alpha_jitter = 0.0;      // per-cascade branching drawn from alpha +/- jitter
  std::size_t max_events = 200000;
};

struct HawkesParams {
  double mu = 0.5;       // background retweet rate of the root post
  double alpha = 0.5;    // branching ratio (mean offspring per event)
  double delta = 1.0;    // exponential kernel decay
  double horizon = 100;  // simulate events in (0, horizon]
  HawkesGraphModel graph;
};

namespace detail {

struct SimEvent {
  double time;
  std::size_t parent;  // index into the event array; root post = SIZE_MAX
  std::string user;
};

}  // namespace detail

/// Self-exciting cascade simulation via the cluster (branching) construction:
/// background events arrive at rate mu as direct reshares of the root, and
/// every event spawns Poisson(alpha * (1 - e^{-delta (T - s)})) children with
/// exponentially decaying delays truncated to the horizon. Subcritical
/// parameters are required up front. Deterministic given the seed.
inline std::vector<Cascade> simulate_hawkes_cascades(std::size_t n, const HawkesParams& p,
                                                     std::uint64_t seed) {
  if (p.mu < 0.0 || p.delta <= 0.0 || p.alpha < 0.0 || p.graph.alpha_jitter < 0.0 ||
      p.horizon <= 0.0 || p.graph.population < 2)
    throw CasftError("simulate_hawkes_cascades: invalid parameters");
  if (p.alpha + p.graph.alpha_jitter >= 1.0)
    throw CasftError("simulate_hawkes_cascades: supercritical parameters (alpha + jitter >= 1)");

  Rng master(seed);
  std::vector<Cascade> out;
  out.reserve(n);

  for (std::size_t ci = 0; ci < n; ++ci) {
    Rng rng = master.fork(ci);
    const double alpha_c =
        p.graph.alpha_jitter > 0.0
            ? p.alpha + rng.uniform(-p.graph.alpha_jitter, p.graph.alpha_jitter)
            : p.alpha;

    const auto pick_user = [&](const std::string& not_this) {
      std::string u;
      do {
        u = "u" + std::to_string(rng.below(p.graph.population));
      } while (u == not_this);
      return u;
    };

    const std::string root = "u" + std::to_string(rng.below(p.graph.population));

    std::vector<detail::SimEvent> events;
    // background arrivals in (0, horizon]
    if (p.mu > 0.0) {
      double t = rng.exponential(p.mu);
      while (t <= p.horizon) {
        events.push_back({t, SIZE_MAX, pick_user(root)});
        t += rng.exponential(p.mu);
      }
    }
    // offspring, breadth-first over the growing event list
    for (std::size_t i = 0; i < events.size(); ++i) {
      const double s = events[i].time;
      const double tail = 1.0 - std::exp(-p.delta * (p.horizon - s));
      const auto kids = rng.poisson(alpha_c * tail);
      for (std::uint64_t k = 0; k < kids; ++k) {
        const double u = rng.uniform();
        const double dt = -std::log(1.0 - u * tail) / p.delta;
        events.push_back({s + dt, i, pick_user(events[i].user)});
        if (events.size() > p.graph.max_events)
          throw CasftError("simulate_hawkes_cascades: event cap exceeded in cascade " +
                           std::to_string(ci));
      }
    }

    std::vector<std::size_t> order(events.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return events[a].time < events[b].time;
    });

    Cascade c;
    c.cascade_id = "sim" + std::to_string(seed) + "_" + std::to_string(ci);
    c.root_user = root;
    c.events.push_back({root, root, 0.0});
    for (std::size_t idx : order) {
      const auto& e = events[idx];
      const std::string& parent_user = e.parent == SIZE_MAX ? root : events[e.parent].user;
      c.events.push_back({parent_user, e.user, e.time});
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace casft
