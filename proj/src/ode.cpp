#include "sigmaflow/ode.hpp"

#include <boost/numeric/odeint.hpp>
#include <boost/numeric/odeint/external/eigen/eigen.hpp>
#include <cmath>
#include <limits>

namespace sigmaflow {

namespace {

namespace ode = boost::numeric::odeint;

using Stepper = ode::runge_kutta_dopri5<StateVec, double, StateVec, double,
                                        ode::vector_space_algebra>;

struct EventState {
  double g_prev;
  bool armed;  // false until g has left zero
};

bool crossed(const OdeEvent& ev, double g_prev, double g_now) {
  if (ev.direction <= 0 && g_prev > 0 && g_now <= 0) return true;
  if (ev.direction >= 0 && g_prev < 0 && g_now >= 0) return true;
  return false;
}

}  // namespace

OdeResult integrate_ode(const RhsFn& rhs, const StateVec& y0, double t0, double t1,
                        const std::vector<OdeEvent>& events, const OdeOptions& opts) {
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  auto sys = [&rhs](const StateVec& y, StateVec& dydt, double t) {
    dydt.resizeLike(y);
    rhs(y, dydt, t);
  };

  auto dense = ode::make_dense_output(opts.abs_tol, opts.rel_tol, Stepper());
  dense.initialize(y0, t0, dir * std::abs(opts.init_step));

  OdeResult out;
  out.y_end = y0;
  out.t_end = t0;
  if (opts.record) out.samples.push_back({t0, y0});

  std::vector<EventState> est(events.size());
  for (size_t i = 0; i < events.size(); ++i) {
    est[i].g_prev = events[i].g(y0, t0);
    est[i].armed = est[i].g_prev != 0.0;
  }

  StateVec tmp = y0;
  while (dir * (t1 - dense.current_time()) > 0) {
    const double t_before = dense.current_time();
    dense.do_step(sys);
    ++out.steps;
    double t_after = dense.current_time();

    if (std::abs(t_after - t_before) < opts.min_step) {
      throw StepSizeUnderflow("integrate_ode: step collapsed to " +
                              std::to_string(t_after - t_before) + " at t = " +
                              std::to_string(t_after));
    }
    if (out.steps > opts.max_steps) {
      throw TolerancesUnachievable("integrate_ode: exceeded " +
                                   std::to_string(opts.max_steps) + " steps");
    }

    // clamp the query point to the requested window
    bool final_step = false;
    if (dir * (t_after - t1) >= 0) {
      t_after = t1;
      final_step = true;
    }
    dense.calc_state(t_after, tmp);

    // earliest event root inside (t_before, t_after], found by bisection
    int fired = -1;
    double t_fire = t_after;
    for (size_t i = 0; i < events.size(); ++i) {
      const double g_now = events[i].g(tmp, t_after);
      if (!est[i].armed) {
        est[i].armed = g_now != 0.0;
        est[i].g_prev = g_now;
        continue;
      }
      if (crossed(events[i], est[i].g_prev, g_now)) {
        double lo = t_before, hi = t_after;
        StateVec mid_state = tmp;
        while (std::abs(hi - lo) > opts.event_time_tol) {
          const double mid = 0.5 * (lo + hi);
          dense.calc_state(mid, mid_state);
          if (crossed(events[i], est[i].g_prev, events[i].g(mid_state, mid))) {
            hi = mid;
          } else {
            lo = mid;
          }
        }
        if (fired < 0 || dir * (hi - t_fire) < 0) {
          fired = static_cast<int>(i);
          t_fire = hi;
        }
      }
      est[i].g_prev = g_now;
    }

    if (fired >= 0) {
      dense.calc_state(t_fire, tmp);
      out.t_end = t_fire;
      out.y_end = tmp;
      out.event_index = fired;
      if (opts.record) out.samples.push_back({t_fire, tmp});
      return out;
    }

    out.t_end = t_after;
    out.y_end = tmp;
    if (opts.record) out.samples.push_back({t_after, tmp});
    if (final_step) break;
  }
  return out;
}

}  // namespace sigmaflow
