#pragma once

#include <optional>
#include <vector>

#include "sigmaflow/chart.hpp"
#include "sigmaflow/ode.hpp"
#include "sigmaflow/pmp.hpp"

namespace sigmaflow {

enum class ArcKind { Bang, Singular, BlownUp };

// How an arc ended. None means the time budget ran out. FrameSeam marks a
// change of integration frame (t <-> t1 <-> t2) with the trajectory continuing
// in the next arc; BlowupHandoff marks entry into the rescaled funnel frame.
enum class ArcEnd {
  None,
  SwitchPi,
  ContactSigma0,
  ExitNeighborhood,
  BlowupHandoff,
  FrameSeam,
};

// Layout of Arc::samples[i].y.
enum class StateRep {
  Raw8,    // [x(4), p(4)], sample time is physical
  Chart9,  // [x(4), rho, theta, r, phi, t_phys], sample time is frame time
  Model3,  // [R, sbar, zetabar] in the directional chart, time is t3
};

struct ArcSample {
  double time;
  StateVec y;
  double rho = 0;  // |(H1,H2)| at the sample, recorded for diagnostics
};

struct Arc {
  ArcKind kind = ArcKind::Bang;
  TimeFrame frame = TimeFrame::Physical;
  StateRep rep = StateRep::Raw8;
  std::vector<ArcSample> samples;
  ArcEnd end = ArcEnd::None;
};

struct EventRecord {
  double t_phys;
  ArcEnd kind;
  int arc_index;
};

// Data captured when a trajectory reaches the switching locus through the
// funnel (rho -> 0 with the rescaled variables locked near the interior
// equilibrium).
struct ContactInfo {
  CotangentPoint zbar;        // blown-down contact point, on Sigma
  double t_phys = 0;          // quadrature part of the contact time
  double tail = 0;            // analytic remainder for the unresolved decay
  double a = 0;               // H12/r at contact, close to +1 or -1
  double s_star = 0;          // funnel angle offset (0 or pi)
  double sigma = 1;           // orientation of the funnel frame
  double c_eff = 0;           // transverse drift rate in the funnel frame
  double sbar0 = 0;           // equilibrium coordinate implied by c_eff
  double sbar_end = 0;        // measured rescaled angle at termination
  double zetabar_end = 0;
  double R_end = 0;           // (rho/r)^{1/3} at termination
  double gap_frame = 0;       // control angle relative to the moving frame
  double gap_raw = 0;         // angle between incoming control and u_s
  bool singular_admissible = false;
};

struct Extremal {
  std::vector<Arc> arcs;
  std::vector<EventRecord> events;
  std::optional<ContactInfo> contact;
  double r0 = 0;  // |(H01,H02)| at the initial point, scale for thresholds
};

struct ContactTimes {
  std::optional<double> t_sigma;   // transversal crossing (one switch)
  std::optional<double> t_sigma0;  // funnel contact, quadrature + tail
  double tail_bound = 0;
};

struct BangOptions {
  double rho_switch = 1e-6;  // absolute stop radius for |(H1,H2)|
  OdeOptions ode;
};

struct NearSigmaOptions {
  // Thresholds on rho/r (invariant under p -> lambda p).
  double rho_hand = 1e-4;   // switch from t1-frame to t2-frame integration
  double rho_cross = 1e-6;  // corner radius for a transversal crossing
  double rho_exit = 5e-2;   // leaving the neighborhood
  // Funnel handling; R compares against (rho/r)^{1/3}.
  double R_contact = 1e-6;
  double funnel_alpha = 0.2;   // |a -+ 1| window for funnel candidacy
  double funnel_band = 0.5;    // |sbar - sbar0| capture band
  double contact_band = 0.05;  // band required when declaring contact
  // Frame-time budgets.
  double t1_horizon = 50;
  double t2_horizon = 400;
  double t3_horizon = 120;
  double t_phys_horizon = 100;
  // Continuation with the singular flow after an admissible contact.
  bool singular_continuation = true;
  double singular_time = 0.5;
  double singular_norm_tol = 1e-9;  // ||u_s|| <= 1 + tol keeps the arc alive
  OdeOptions ode = make_tight_ode();

  static OdeOptions make_tight_ode() {
    OdeOptions o;
    o.abs_tol = 1e-12;
    o.rel_tol = 1e-12;
    return o;
  }
};

// Integrates the maximized-Hamiltonian flow from an off-locus point in
// physical time until the horizon or until |(H1,H2)| falls to rho_switch.
Arc integrate_bang(const AffineSystem& sys, const CotangentPoint& z0,
                   double horizon, const BangOptions& opts = {});

// Integrates through a neighborhood of the switching locus, changing time
// frames as rho shrinks, and reports what the trajectory did: left the
// neighborhood, crossed transversally with the control swinging between the
// two rest directions (angle 2*acos(|H12|/r), a pi rotation when H12 = 0),
// or contacted Sigma_0 through the funnel (optionally continuing with the
// singular flow).
Extremal integrate_near_sigma(const AffineSystem& sys, const CotangentPoint& z0,
                              const NearSigmaOptions& opts = {},
                              const Tol& tol = default_tol());

// Same, entering directly in chart coordinates. Use this form when the entry
// state is deep below the locus scale (rho/r ~ 1e-9): converting through a
// cotangent point quantizes the control angle at machine-eps/rho, which is
// enough to knock a funnel trajectory off the stable set.
Extremal integrate_near_sigma(const AffineSystem& sys,
                              const SingularChartState& st0,
                              const NearSigmaOptions& opts = {},
                              const Tol& tol = default_tol());

// Contact/crossing times of an extremal produced above. The crossing time is
// re-derived from the recorded samples (kink of rho(t)) independently of the
// event refinement stored in the extremal.
ContactTimes contact_time(const Extremal& ext);

struct ControlSample {
  double t;  // physical
  Vec2 u;
};

struct ControlJump {
  double t;
  double gap;        // measured |wrap(theta+ - theta-)|
  double gap_frame;  // at a contact: angle relative to the e_s frame
  double gap_raw;    // at a contact: angle to the singular control
  ArcEnd cause;
};

struct ControlHistory {
  std::vector<ControlSample> samples;
  std::vector<ControlJump> jumps;
};

ControlHistory control_history(const AffineSystem& sys, const Extremal& ext);

// Diagnostics used by the validation suite.
double max_junction_mismatch(const AffineSystem& sys, const Extremal& ext);
CotangentPoint state_at_sample(const AffineSystem& sys, const Arc& arc,
                               std::size_t i);
double physical_time_at_sample(const Arc& arc, std::size_t i);

// Projects a point of the switching locus onto Sigma_0 by sliding the base
// point along the on-locus drift direction until |H12| = |(H01,H02)|.
CotangentPoint project_to_sigma0(const AffineSystem& sys,
                                 const CotangentPoint& zbar, double s_star,
                                 double sigma, const Tol& tol = default_tol());

// An initial condition constructed on the attracting ray of the funnel above
// a Sigma_0 base point, refined by shooting so the rescaled variables track
// the interior equilibrium down to R_refine.
struct FunnelSeed {
  SingularChartState st0;  // authoritative entry state; pass to the chart
                           // overload of integrate_near_sigma
  CotangentPoint z0;       // from_chart(st0), for reporting
  double c_eff = 0;
  double sbar0 = 0;
  double zetabar0 = 0;
  double s_star = 0;
  double sigma = 1;
  double dev = 0;  // fit residual in (sbar, zetabar) at the deepest matching
                   // radius R; floored by the zetabar readout, which divides
                   // an absolute state error by R^2
  int newton_evals = 0;
};

// zbar must satisfy |H12| ~ |(H01,H02)| (|a| within funnel_alpha of 1) and the
// transverse drift there must be positive, otherwise the funnel repels and no
// seed exists. R0 and R_refine are radii for (rho/r)^{1/3}.
FunnelSeed seed_funnel(const AffineSystem& sys, const CotangentPoint& zbar,
                       double R0, double R_refine,
                       const NearSigmaOptions& opts = {},
                       const Tol& tol = default_tol());

}  // namespace sigmaflow
