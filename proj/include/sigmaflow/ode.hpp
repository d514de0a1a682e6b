#pragma once

#include <functional>
#include <vector>

#include "sigmaflow/common.hpp"
#include "sigmaflow/errors.hpp"

namespace sigmaflow {

using StateVec = Eigen::VectorXd;

// dy/dt = rhs(y, t); dxdt is preallocated to the state size
using RhsFn = std::function<void(const StateVec& y, StateVec& dydt, double t)>;

// Scalar event functions; a root of g along the trajectory stops the integration.
struct OdeEvent {
  std::function<double(const StateVec& y, double t)> g;
  // -1: fire when g crosses from > 0 to <= 0; +1: from < 0 to >= 0; 0: either way
  int direction = 0;
};

struct OdeOptions {
  double abs_tol = 1e-12;
  double rel_tol = 1e-12;
  double init_step = 1e-4;
  double min_step = 1e-15;       // underflow guard on the adaptive step
  long max_steps = 2000000;      // budget before giving up
  double event_time_tol = 1e-12; // width of the bisection bracket on event times
  bool record = true;            // keep every accepted step in samples
};

struct OdeSample {
  double t;
  StateVec y;
};

struct OdeResult {
  double t_end = 0;
  StateVec y_end;
  int event_index = -1;  // -1: reached the requested end time
  long steps = 0;
  std::vector<OdeSample> samples;
};

// Adaptive order-5 integration from t0 to t1 (either direction). Events are
// detected on each accepted step and located by bisection on the dense output.
OdeResult integrate_ode(const RhsFn& rhs, const StateVec& y0, double t0, double t1,
                        const std::vector<OdeEvent>& events = {},
                        const OdeOptions& opts = {});

}  // namespace sigmaflow
