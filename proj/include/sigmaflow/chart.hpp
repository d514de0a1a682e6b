#pragma once

#include <functional>

#include "sigmaflow/pmp.hpp"

namespace sigmaflow {

// Coordinates adapted to the switching locus. The adjoint is encoded by the two
// polar pairs (H1,H2) = rho (cos theta, sin theta) and (H01,H02) = r (cos phi, sin phi);
// the remaining coordinates xi = (x, r, phi) parametrize the locus itself.
struct SingularChartState {
  Vec4 x;
  double rho = 0;
  double theta = 0;
  double r = 0;
  double phi = 0;

  // angle between the switching pair and the direction it rotates toward
  double s() const { return wrap_angle(theta - phi - M_PI / 2); }
};

enum class SigmaClass { NotOnSigma, SigmaMinus, SigmaPlus, SigmaZero };

// Row order of the adjoint frame: F1, F2, [F0,F1], [F0,F2].
Mat4 adjoint_frame(const AffineSystem& sys, const Vec4& x);

SingularChartState to_chart(const AffineSystem& sys, const CotangentPoint& z,
                            const Tol& tol = default_tol());

// Inverse chart: reconstructs p from the frame values at x by a 4x4 solve.
CotangentPoint from_chart(const AffineSystem& sys, const SingularChartState& st,
                          const Tol& tol = default_tol());

// The locus test is relative: on Sigma iff rho <= tau_rho_rel * r, making the answer
// invariant under p -> lambda p. The equality band for SigmaZero is tau_sigma * r^2.
SigmaClass classify(const LiftValues& lv, double tau_sigma = default_tol().sigma_band,
                    double tau_rho_rel = 1e-8);

// Time frames of the chain dt1 = r dt, dt1 = rho dt2, dt3-field = t2-field / R with
// R = rho^(1/3), so that dt = (rho/(r R)) dt3.
enum class TimeFrame { Physical, T1, T2, T3 };

struct ChartRates {
  Vec4 dx;
  double drho, dtheta, dr, dphi;
  double dt_phys;  // rate of physical time in the chosen frame
};

// Rates of (x, rho, theta, r, phi, t) along the extremal flow with the feedback
// u = (cos theta, sin theta), expressed in the chosen frame. The T2 rates are regular
// at rho = 0; T3 requires rho > 0.
ChartRates chart_flow_rates(const AffineSystem& sys, const SingularChartState& st,
                            TimeFrame frame, const Tol& tol = default_tol());

// Section of the locus: xi = (x, r, phi) with rho = 0.
struct XiPoint {
  Vec4 x;
  double r, phi;
};

struct XiRates {
  Vec4 dx;
  double dr, dphi;
};

// a(xi) = H12 / r with the adjoint reconstructed from (0, 0, r cos phi, r sin phi).
double a_of_xi(const AffineSystem& sys, const XiPoint& xi, const Tol& tol = default_tol());

// Velocity of xi per unit t1 on the rho = 0 section, with the control angle
// theta = phi + pi/2 + s. This is the slow drift the locus coordinates inherit
// from the extremal flow.
XiRates xi_velocity_on_sigma(const AffineSystem& sys, const XiPoint& xi, double s = 0.0,
                             const Tol& tol = default_tol());

struct NormalFormParams {
  double a;      // H12 / r at the base point
  double alpha;  // a - 1
  double c;      // directional derivative of a(xi) along xi_velocity_on_sigma
};

// Local invariants of the flow at a point of the switching locus. Throws
// NotInNeighborhood if z is not on the locus, GenericityViolated if require_generic
// is set and |c| <= tol.genericity.
NormalFormParams normal_form_params(const AffineSystem& sys, const CotangentPoint& zbar,
                                    bool require_generic = false,
                                    const Tol& tol = default_tol());

// Rates of (rho, s, xi) per unit t1 for rho > 0; drho = -sin(s) exactly and
// rho * ds tends to a(xi) - cos(s) as rho -> 0.
struct RescaledRates {
  double drho, ds;
  Vec4 dx;
  double dr, dphi;
};

RescaledRates rescaled_field(const AffineSystem& sys, const SingularChartState& st,
                             const Tol& tol = default_tol());

// Optional higher-order terms added on top of the truncated normal form.
using ModelPerturbation = std::function<Vec3(const Vec3&)>;

// Local model of the flow near a degenerate locus point, in t2 time over
// (rho, s, zeta): rho' = -rho s, s' = zeta + s^2/2, zeta' = c rho. The plane
// rho = 0 is invariant for the truncated field.
Vec3 model_field(const Vec3& state, double c, const ModelPerturbation& pert = nullptr);

}  // namespace sigmaflow
