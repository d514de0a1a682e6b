#pragma once

#include <complex>
#include <vector>

#include "sigmaflow/common.hpp"
#include "sigmaflow/errors.hpp"

namespace sigmaflow {

// Directional chart of the quasi-homogeneous blow-up with weights (3,1,2):
// rho = R^3, s = R sbar, zeta = R^2 zetabar. Extra slow coordinates ride along
// unchanged under the truncated flow.
struct DirChartState {
  double R = 0;
  double sbar = 0;
  double zetabar = 0;
  Eigen::VectorXd xi_rest;  // carried parameters, constant for the local model
};

// Polar chart: rho = R^3 rhobar, s = R sin(omega), zeta = R^2 cos(omega).
struct PolarChartState {
  double R = 0;
  double omega = 0;
  double rhobar = 0;
};

struct EquilibriumReport {
  enum class Chart { Dir, Polar };
  Chart chart;
  Vec3 location;  // (R, sbar, zetabar) or (R, omega, rhobar)
  Mat3 jacobian;
  std::array<std::complex<double>, 3> eigenvalues;  // sorted by (Re, Im)
  int stable_dim = 0;
  int unstable_dim = 0;
};

// Blown-up local model in the slow time of the directional chart:
// R' = -(1/3) R sbar, sbar' = (5/6) sbar^2 + zetabar, zetabar' = (2/3) sbar zetabar + c.
Vec3 dir_chart_field(const DirChartState& st, double c);

// The unique interior equilibrium of the directional chart and its spectrum.
// Throws DegenerateParameter when c = 0.
EquilibriumReport interior_equilibrium(double c);

// Polar-chart model field as contracted: R' = R A, omega' = B, rhobar' = -rhobar C with
//   A = sin w (cos w + sin^2 w / 2) + c rhobar cos w
//   B = cos w (2 cos w + sin^2 w) - c rhobar sin w
//   C = sin w (1 + cos^2 w + cos w + sin^2 w / 2) + c rhobar cos w.
Vec3 polar_chart_field(const PolarChartState& st, double c);

// Exact pushforward of the local model into the polar chart, rescaled by the
// positive factor (1 + cos^2 w). Differs from polar_chart_field only in the
// rhobar component; see the orbit-level notes in the tests.
Vec3 polar_chart_true_field(const PolarChartState& st, double c);

// Equilibria of the polar-chart field on {R = 0, rhobar = 0}: omega in
// {pi/2, -pi/2, w0, -w0} with cos w0 = 1 - sqrt(2), in that order.
std::vector<EquilibriumReport> boundary_equilibria(double c);

Vec3 blow_down(const DirChartState& st);    // -> (rho, s, zeta)
Vec3 blow_down(const PolarChartState& st);  // -> (rho, s, zeta)

// Inverse charts. The directional chart needs rho > 0; the polar chart needs
// (s, zeta) != (0, 0).
DirChartState blow_up_dir(const Vec3& rsz);
PolarChartState blow_up_polar(const Vec3& rsz);

}  // namespace sigmaflow
