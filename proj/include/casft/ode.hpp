#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "casft/autodiff.hpp"
#include "casft/common.hpp"
#include "casft/nn.hpp"

namespace casft {

enum class OdeMethod { euler, midpoint, rk4, bosh3, adaptive_heun, dopri5, implicit_adams };

inline OdeMethod ode_method_from_string(const std::string& s) {
  if (s == "euler") return OdeMethod::euler;
  if (s == "midpoint") return OdeMethod::midpoint;
  if (s == "rk4") return OdeMethod::rk4;
  if (s == "bosh3") return OdeMethod::bosh3;
  if (s == "adaptive_heun") return OdeMethod::adaptive_heun;
  if (s == "dopri5") return OdeMethod::dopri5;
  if (s == "implicit_adams") return OdeMethod::implicit_adams;
  throw CasftError("unknown ODE solver \"" + s +
                   "\"; options: bosh3, adaptive_heun, euler, rk4, implicit_adams, midpoint, dopri5");
}

inline std::string ode_method_name(OdeMethod m) {
  switch (m) {
    case OdeMethod::euler: return "euler";
    case OdeMethod::midpoint: return "midpoint";
    case OdeMethod::rk4: return "rk4";
    case OdeMethod::bosh3: return "bosh3";
    case OdeMethod::adaptive_heun: return "adaptive_heun";
    case OdeMethod::dopri5: return "dopri5";
    case OdeMethod::implicit_adams: return "implicit_adams";
  }
  return "?";
}

struct SolverSpec {
  OdeMethod method = OdeMethod::dopri5;
  double rtol = 1e-5;
  double atol = 1e-5;
  double step = 0.1;  // fixed-step methods

  bool adaptive() const {
    return method == OdeMethod::dopri5 || method == OdeMethod::bosh3 ||
           method == OdeMethod::adaptive_heun;
  }
};

using OdeFunc = std::function<ad::Var(double, const ad::Var&)>;

namespace detail {

inline double error_norm(const Mat& err, const Mat& y0, const Mat& y1, double atol, double rtol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double r = err(i) / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

inline ad::Var axpy(const ad::Var& y, double h, const ad::Var& k) {
  return ad::add(y, ad::smul(k, h));
}

struct AdaptiveTableau {
  int stages;
  double order;                    // of the propagating solution
  std::vector<std::vector<double>> a;
  std::vector<double> b, b_err, c;  // b_err = b - b*, applied to stages
  bool fsal;
};

inline const AdaptiveTableau& dopri5_tableau() {
  static const AdaptiveTableau t{
      7,
      5.0,
      {{},
       {1.0 / 5},
       {3.0 / 40, 9.0 / 40},
       {44.0 / 45, -56.0 / 15, 32.0 / 9},
       {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
       {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
       {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}},
      {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0},
      {35.0 / 384 - 5179.0 / 57600, 0.0, 500.0 / 1113 - 7571.0 / 16695, 125.0 / 192 - 393.0 / 640,
       -2187.0 / 6784 + 92097.0 / 339200, 11.0 / 84 - 187.0 / 2100, -1.0 / 40},
      {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0},
      true};
  return t;
}

inline const AdaptiveTableau& bosh3_tableau() {
  static const AdaptiveTableau t{
      4,
      3.0,
      {{}, {1.0 / 2}, {0.0, 3.0 / 4}, {2.0 / 9, 1.0 / 3, 4.0 / 9}},
      {2.0 / 9, 1.0 / 3, 4.0 / 9, 0.0},
      {2.0 / 9 - 7.0 / 24, 1.0 / 3 - 1.0 / 4, 4.0 / 9 - 1.0 / 3, -1.0 / 8},
      {0.0, 1.0 / 2, 3.0 / 4, 1.0},
      true};
  return t;
}

inline const AdaptiveTableau& heun_tableau() {
  static const AdaptiveTableau t{2,
                                 2.0,
                                 {{}, {1.0}},
                                 {1.0 / 2, 1.0 / 2},
                                 {-1.0 / 2, 1.0 / 2},  // heun minus euler
                                 {0.0, 1.0},
                                 false};
  return t;
}

inline ad::Var integrate_adaptive(const OdeFunc& f, ad::Var y, double t0, double t1,
                                  const SolverSpec& spec, const AdaptiveTableau& tab) {
  const double span = t1 - t0;
  double t = t0;
  ad::Var k_first = f(t, y);

  // initial step size from the scaled magnitudes of y and f (Hairer-style)
  double dt;
  {
    const double d0 = y.val().norm();
    const double d1 = k_first.val().norm();
    dt = (d0 > 1e-12 && d1 > 1e-12) ? 0.01 * d0 / d1 : span * 0.01;
    dt = std::min(std::max(dt, 1e-8 * span), span);
  }

  std::vector<ad::Var> k(static_cast<std::size_t>(tab.stages));
  while (t < t1) {
    dt = std::min(dt, t1 - t);
    if (dt < 1e-14 * std::max(1.0, std::abs(t)))
      throw CasftError("ODE step-size underflow in [" + std::to_string(t) + ", " +
                       std::to_string(t1) + "]");

    k[0] = k_first;
    for (int s = 1; s < tab.stages; ++s) {
      ad::Var ys = y;
      for (int j = 0; j < s; ++j) {
        const double w = tab.a[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)];
        if (w != 0.0) ys = axpy(ys, dt * w, k[static_cast<std::size_t>(j)]);
      }
      k[static_cast<std::size_t>(s)] = f(t + tab.c[static_cast<std::size_t>(s)] * dt, ys);
    }

    ad::Var y_next = y;
    for (int s = 0; s < tab.stages; ++s)
      if (tab.b[static_cast<std::size_t>(s)] != 0.0)
        y_next = axpy(y_next, dt * tab.b[static_cast<std::size_t>(s)], k[static_cast<std::size_t>(s)]);

    Mat err = Mat::Zero(y.val().rows(), y.val().cols());
    for (int s = 0; s < tab.stages; ++s)
      if (tab.b_err[static_cast<std::size_t>(s)] != 0.0)
        err += dt * tab.b_err[static_cast<std::size_t>(s)] * k[static_cast<std::size_t>(s)].val();

    const double en = error_norm(err, y.val(), y_next.val(), spec.atol, spec.rtol);
    if (std::isfinite(en) && en <= 1.0) {
      t += dt;
      if (t1 - t <= 1e-14 * std::max(1.0, std::abs(t1))) t = t1;
      y = y_next;
      k_first = tab.fsal ? k[static_cast<std::size_t>(tab.stages - 1)] : f(t, y);
    }
    const double factor = !std::isfinite(en)
                              ? 0.2
                              : (en <= 1e-14
                                     ? 10.0
                                     : std::clamp(0.9 * std::pow(en, -1.0 / tab.order), 0.2, 10.0));
    dt *= factor;
  }
  return y;
}

inline ad::Var rk4_step(const OdeFunc& f, const ad::Var& y, double t, double dt) {
  ad::Var k1 = f(t, y);
  ad::Var k2 = f(t + 0.5 * dt, axpy(y, 0.5 * dt, k1));
  ad::Var k3 = f(t + 0.5 * dt, axpy(y, 0.5 * dt, k2));
  ad::Var k4 = f(t + dt, axpy(y, dt, k3));
  ad::Var acc = ad::add(k1, ad::smul(ad::add(k2, k3), 2.0));
  return axpy(y, dt / 6.0, ad::add(acc, k4));
}

inline ad::Var integrate_fixed(const OdeFunc& f, ad::Var y, double t0, double t1,
                               const SolverSpec& spec) {
  const double span = t1 - t0;
  const auto n = static_cast<long>(std::max(1.0, std::ceil(span / spec.step - 1e-12)));
  const double dt = span / static_cast<double>(n);

  if (spec.method == OdeMethod::implicit_adams) {
    // 4th-order Adams-Bashforth predictor + Adams-Moulton corrector (PECE),
    // bootstrapped with RK4 while the derivative history fills up.
    std::deque<ad::Var> hist;  // f at the last up-to-4 accepted points, newest front
    hist.push_front(f(t0, y));
    for (long i = 0; i < n; ++i) {
      const double t = t0 + dt * static_cast<double>(i);
      if (hist.size() < 4) {
        y = rk4_step(f, y, t, dt);
      } else {
        ad::Var pred = y;
        pred = axpy(pred, dt * 55.0 / 24.0, hist[0]);
        pred = axpy(pred, dt * -59.0 / 24.0, hist[1]);
        pred = axpy(pred, dt * 37.0 / 24.0, hist[2]);
        pred = axpy(pred, dt * -9.0 / 24.0, hist[3]);
        for (int it = 0; it < 2; ++it) {
          ad::Var fp = f(t + dt, pred);
          ad::Var corr = y;
          corr = axpy(corr, dt * 9.0 / 24.0, fp);
          corr = axpy(corr, dt * 19.0 / 24.0, hist[0]);
          corr = axpy(corr, dt * -5.0 / 24.0, hist[1]);
          corr = axpy(corr, dt * 1.0 / 24.0, hist[2]);
          pred = corr;
        }
        y = pred;
      }
      hist.push_front(f(t + dt, y));
      if (hist.size() > 4) hist.pop_back();
    }
    return y;
  }

  for (long i = 0; i < n; ++i) {
    const double t = t0 + dt * static_cast<double>(i);
    switch (spec.method) {
      case OdeMethod::euler:
        y = axpy(y, dt, f(t, y));
        break;
      case OdeMethod::midpoint: {
        ad::Var k1 = f(t, y);
        y = axpy(y, dt, f(t + 0.5 * dt, axpy(y, 0.5 * dt, k1)));
        break;
      }
      case OdeMethod::rk4:
        y = rk4_step(f, y, t, dt);
        break;
      default:
        throw CasftError("integrate_fixed: not a fixed-step method");
    }
  }
  return y;
}

}  // namespace detail

/// Numerically integrates dy/dt = f(t, y) from t_from to t_to on the autodiff
/// tape, so gradients flow through the solver arithmetic. t_to == t_from
/// returns y unchanged.
inline ad::Var evolve(const OdeFunc& f, const ad::Var& y, double t_from, double t_to,
                      const SolverSpec& spec) {
  if (t_to < t_from) throw CasftError("evolve: t_to must be >= t_from");
  if (t_to == t_from) return y;
  switch (spec.method) {
    case OdeMethod::dopri5:
      return detail::integrate_adaptive(f, y, t_from, t_to, spec, detail::dopri5_tableau());
    case OdeMethod::bosh3:
      return detail::integrate_adaptive(f, y, t_from, t_to, spec, detail::bosh3_tableau());
    case OdeMethod::adaptive_heun:
      return detail::integrate_adaptive(f, y, t_from, t_to, spec, detail::heun_tableau());
    default:
      return detail::integrate_fixed(f, y, t_from, t_to, spec);
  }
}

/// The pieces of the hidden-state dynamics; as callbacks so tests can freeze
/// any one of them.
struct DynamicsCore {
  int d_h = 0;
  OdeFunc drift;                                              // dh/dt = f2(t, h)
  std::function<ad::Var(const ad::Var&)> rate;                // lambda = softplus(w h + b)
  std::function<ad::Var(const ad::Var&, const ad::Var&)> jump;  // GRU update at events
};

enum class CueMode { absolute, increment };

/// Plain-value record of the integrated path (diagnostics only).
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> hidden;
  std::vector<double> rate_values;
  std::vector<double> cumulative;
};

struct DynamicsResult {
  ad::Var h_to;   // 1 x d_h hidden state at the observation time
  ad::Var cues;   // 1 x l cumulative-popularity cues at the segment bounds
  Trajectory trajectory;
};

/// Runs the jump-ODE over the observed events and extrapolates through the
/// segment bounds. The cumulative popularity rides along as an extra state
/// coordinate with d(Lambda)/dt = lambda(h), Lambda(0) = 0, so hidden state
/// and integral always share one solver. Jumps fire at events after the root.
inline DynamicsResult encode_dynamics(const DynamicsCore& core, const ad::Var& h0,
                                      const std::vector<double>& event_times,
                                      const std::vector<ad::Var>& event_features, double t_o,
                                      const std::vector<double>& bounds, const SolverSpec& spec,
                                      CueMode cue_mode = CueMode::absolute) {
  if (event_times.size() != event_features.size())
    throw CasftError("encode_dynamics: times/features length mismatch");
  for (double t : event_times)
    if (t > t_o) throw CasftError("encode_dynamics: event time beyond t_o");
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const double prev = i == 0 ? t_o : bounds[i - 1];
    if (bounds[i] <= prev)
      throw CasftError("encode_dynamics: segment bounds must increase from t_o");
  }

  const int d = core.d_h;
  OdeFunc aug = [&core, d](double t, const ad::Var& y) {
    ad::Var h = ad::slice_cols(y, 0, d);
    return ad::concat_cols(core.drift(t, h), core.rate(h));
  };

  ad::Var y = ad::concat_cols(h0, ad::Var::constant(Mat::Zero(1, 1)));
  double t = 0.0;

  DynamicsResult res;
  auto record = [&](double when) {
    ad::NoGradGuard ng;
    ad::Var h = ad::Var::constant(y.val().leftCols(d));
    res.trajectory.times.push_back(when);
    res.trajectory.hidden.push_back(h.val().row(0).transpose());
    res.trajectory.rate_values.push_back(core.rate(h).scalar());
    res.trajectory.cumulative.push_back(y.val()(0, d));
  };

  record(0.0);
  for (std::size_t i = 1; i < event_times.size(); ++i) {
    y = evolve(aug, y, t, event_times[i], spec);
    t = event_times[i];
    ad::Var h = core.jump(ad::slice_cols(y, 0, d), event_features[i]);
    y = ad::concat_cols(h, ad::slice_cols(y, d, 1));
    record(t);
  }

  y = evolve(aug, y, t, t_o, spec);
  t = t_o;
  record(t);
  res.h_to = ad::slice_cols(y, 0, d);
  ad::Var lambda_to = ad::slice_cols(y, d, 1);

  ad::Var cues;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    y = evolve(aug, y, t, bounds[i], spec);
    t = bounds[i];
    record(t);
    ad::Var cue = ad::slice_cols(y, d, 1);
    if (cue_mode == CueMode::increment) cue = ad::sub(cue, lambda_to);
    cues = i == 0 ? cue : ad::concat_cols(cues, cue);
  }
  res.cues = cues;
  return res;
}

}  // namespace casft
