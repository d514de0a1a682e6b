#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "sigmaflow/blowup.hpp"
#include "sigmaflow/integrate.hpp"

namespace sigmaflow {

// Seed for shooting along an invariant manifold of a blow-up equilibrium.
struct ManifoldSeed {
  EquilibriumReport equilibrium;
  Vec3 direction;  // unit eigenvector of equilibrium.jacobian
  double offset = 1e-6;
  int side = 1;
};

// Shot along the radial eigendirection of the interior equilibrium. Samples
// are (R, sbar, zetabar) in the slow time of the directional chart; the arc
// parameter runs in the direction that grows R, which is reversed t3 when the
// radial eigenvalue is stable (drift parameter c > 0) and plain t3 otherwise.
struct ManifoldShot {
  ManifoldSeed seed;
  Arc arc;               // rep Model3, frame T3
  bool backward = true;  // arc parameter is reversed t3
  double residual = 0;   // distance to the equilibrium after re-integrating
                         // the shot in the contracting direction
};

// Shoots the radial manifold of the interior equilibrium from a point offset
// along the eigenvector, stopping at R = R_exit or after `horizon` slow-time
// units, then re-integrates toward the equilibrium to measure the shooting
// residual (first order in `offset`). The return leg amplifies transverse
// error by (R_exit/offset)^(7/2); the default exit radius keeps the residual
// offset-dominated over the allowed offset range. Throws DegenerateParameter
// when c = 0 and Error when offset lies outside [1e-8, 1e-3].
ManifoldShot stable_manifold_m0(double c, double offset, double horizon,
                                double R_exit = 0.05,
                                const OdeOptions& ode = {});

enum class Stratum { S0, Ss, Ss0 };

// Classification of a near-locus initial condition by what its extremal does:
// leaves the neighborhood (S0), crosses the locus transversally (Ss), or
// contacts the locus tangentially through the funnel (Ss0).
struct StratumLabel {
  Stratum stratum = Stratum::S0;
  std::optional<EventRecord> witness;  // crossing/contact/exit event
  std::optional<ContactInfo> contact;  // populated for Ss0
  double min_rho_rel = std::numeric_limits<double>::infinity();
};

// Runs integrate_near_sigma and reduces the outcome to a stratum label.
// Throws InconclusiveClassification when the horizon ends with none of the
// three outcomes; the message carries the smallest rho/r reached.
StratumLabel classify_initial_condition(const AffineSystem& sys,
                                        const CotangentPoint& z0,
                                        const NearSigmaOptions& opts = {},
                                        const Tol& tol = default_tol());

struct StratumBoundary {
  double t_lo = 0;  // segment parameters bracketing the flip
  double t_hi = 1;
  StratumLabel label_lo;
  StratumLabel label_hi;
};

// Bisects z(t) = ((1-t) x_A + t x_B, (1-t) p_A + t p_B) for a classification
// flip. The endpoint labels must differ; the returned bracket has
// t_hi - t_lo <= width.
StratumBoundary classify_segment_boundary(const AffineSystem& sys,
                                          const CotangentPoint& zA,
                                          const CotangentPoint& zB,
                                          double width = 1e-10,
                                          const NearSigmaOptions& opts = {},
                                          const Tol& tol = default_tol());

// Limit sets of the sphere flow (the blow-up model restricted to R = 0):
// the interior equilibrium, the four boundary equilibria named by their
// angle (w0 solves cos w0 = 1 - sqrt(2)), or no equilibrium reached within
// the horizon.
enum class SphereLimit { M0, PiHalf, MinusPiHalf, W0, MinusW0, Escape };

const char* to_string(SphereLimit l);

struct SphereGridSpec {
  // Window in the directional chart, sampled n_sbar x n_zetabar.
  int n_sbar = 50;
  int n_zetabar = 50;
  double sbar_min = -3.0;
  double sbar_max = 3.0;
  double zetabar_min = -3.0;
  double zetabar_max = 3.0;
  // Optional equator band in the polar chart, sampled n_omega x n_rhobar.
  int n_omega = 0;
  int n_rhobar = 0;
  double omega_min = -M_PI;
  double omega_max = M_PI;
  double rhobar_min = 0.01;
  double rhobar_max = 0.04;
  // Per-direction slow-time budget and the limit-set test: a trajectory is
  // classified once it stays within classify_radius of an equilibrium for
  // `dwell` time units.
  double horizon = 400;
  double classify_radius = 1e-4;
  double dwell = 5.0;
  OdeOptions ode;
};

struct PortraitRow {
  int chart = 0;  // 0: directional (sbar, zetabar), 1: polar (omega, rhobar)
  Vec2 init{0, 0};
  SphereLimit limit_forward = SphereLimit::Escape;
  SphereLimit limit_backward = SphereLimit::Escape;
  long steps = 0;        // accepted steps, both directions
  double min_rhobar = std::numeric_limits<double>::infinity();
};

struct SpherePortrait {
  double c = 0;
  std::vector<PortraitRow> rows;
};

// Integrates the sphere flow forward and backward from every grid point and
// records the limit sets. Integration hands off between the two charts near
// the equator (entering the polar chart when the gauge height rho/R^3 falls
// below 0.02, returning above 0.05), so coordinates stay bounded in both
// charts. Throws DegenerateParameter when c = 0.
SpherePortrait portrait_sphere(double c, const SphereGridSpec& spec = {});

struct CycleSearchSpec {
  // Section base points sit on rays from the interior equilibrium:
  // n_rays directions, n_radii radii in [r_min, r_max].
  int n_rays = 10;
  int n_radii = 5;
  double r_min = 0.3;
  double r_max = 1.5;
  // Launch offsets along each section: 2 n_offsets + 1 points spanning
  // [-halfwidth, halfwidth] across the flow.
  int n_offsets = 5;
  double halfwidth = 0.1;
  double horizon = 200;  // slow-time budget per launch
  int max_hunts = 4;     // plane crossings allowed outside the section window
  // Divergence scan over the positive-sbar, negative-zetabar region.
  int div_grid = 21;
  double div_margin = 0.05;
  double div_extent = 3.0;
  OdeOptions ode;
};

struct SectionProbe {
  Vec2 base{0, 0};     // directional-chart coordinates
  Vec2 tangent{0, 0};  // unit section direction, orthogonal to the flow
  int launches = 0;
  int returns = 0;
  bool sign_change = false;  // return displacement changes sign along the
                             // section: a fixed point of the return map
  double min_abs_displacement = std::numeric_limits<double>::infinity();
};

struct CycleReport {
  std::vector<SectionProbe> sections;
  int candidate_cycles = 0;  // sections whose displacements change sign
  long div_samples = 0;
  double div_min = std::numeric_limits<double>::infinity();
  double div_mismatch = 0;  // max |numeric trace - 2 sbar| over the scan
};

// Searches for periodic orbits of the sphere flow with first-return maps on
// transverse sections and, over the scanned region, checks the model field's
// 3D divergence against its closed form 2 sbar (positive there, which is why
// no cycle can bound a region on that side). Throws DegenerateParameter when
// c = 0.
CycleReport falsify_periodic_orbits(double c, const CycleSearchSpec& spec = {});

// Numeric trace of the blow-up model Jacobian at (R = 0, sbar, zetabar),
// central differences; the exact field has trace 2 sbar.
double model_divergence(double c, double sbar, double zetabar);

}  // namespace sigmaflow
