#include "sigmaflow/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "sigmaflow/pmp.hpp"

namespace sigmaflow {

namespace {

StateVec pack2(const Vec2& v) {
  StateVec y(2);
  y << v[0], v[1];
  return y;
}

StateVec pack3(const Vec3& v) {
  StateVec y(3);
  y << v[0], v[1], v[2];
  return y;
}

Vec3 unpack3(const StateVec& y) { return Vec3(y[0], y[1], y[2]); }

// Full 3D model in the directional chart, with an overall sign so the same
// routine serves both time directions.
RhsFn model_rhs(double c, double sign) {
  return [c, sign](const StateVec& y, StateVec& d, double) {
    DirChartState st;
    st.R = y[0];
    st.sbar = y[1];
    st.zetabar = y[2];
    Vec3 f = dir_chart_field(st, c);
    d.resize(3);
    d << sign * f[0], sign * f[1], sign * f[2];
  };
}

}  // namespace

ManifoldShot stable_manifold_m0(double c, double offset, double horizon,
                                double R_exit, const OdeOptions& ode) {
  if (!(offset >= 1e-8 && offset <= 1e-3))
    throw Error("stable_manifold_m0: offset outside [1e-8, 1e-3]");

  ManifoldShot shot;
  shot.seed.equilibrium = interior_equilibrium(c);
  // The tangential components of the model do not depend on R, so the
  // radial eigenvector is exactly the R axis and the offset ray is exactly
  // invariant.
  shot.seed.direction = Vec3(1, 0, 0);
  shot.seed.offset = offset;
  shot.seed.side = 1;
  const Vec3 m0 = shot.seed.equilibrium.location;
  const Vec3 y0 = m0 + offset * shot.seed.direction;

  // Grow R: against t3 when the radial rate -sbar0/3 contracts (c > 0).
  shot.backward = c > 0;
  const double sign = shot.backward ? -1.0 : 1.0;

  // The residual is measured by flying back to the equilibrium, and on that
  // leg transverse errors are amplified by (R_exit/offset)^(7/2), the ratio
  // of the unstable rate to the radial one. Tight tolerances keep the
  // injected error below the offset-order part of the residual.
  OdeOptions tight = ode;
  tight.abs_tol = std::min(tight.abs_tol, 1e-14);
  tight.rel_tol = std::min(tight.rel_tol, 1e-14);

  OdeEvent exit_ev{
      [R_exit](const StateVec& y, double) { return y[0] - R_exit; }, +1};
  OdeResult out = integrate_ode(model_rhs(c, sign), pack3(y0), 0.0, horizon,
                                {exit_ev}, tight);

  shot.arc.kind = ArcKind::BlownUp;
  shot.arc.frame = TimeFrame::T3;
  shot.arc.rep = StateRep::Model3;
  shot.arc.end = out.event_index == 0 ? ArcEnd::ExitNeighborhood : ArcEnd::None;
  shot.arc.samples.reserve(out.samples.size());
  for (const OdeSample& s : out.samples) {
    DirChartState st;
    st.R = s.y[0];
    st.sbar = s.y[1];
    st.zetabar = s.y[2];
    shot.arc.samples.push_back({s.t, s.y, blow_down(st)[0]});
  }

  // Return leg over the same span; the distance to the equilibrium is the
  // shooting residual, offset plus the amplified transverse error.
  OdeOptions quiet = tight;
  quiet.record = false;
  OdeResult back = integrate_ode(model_rhs(c, -sign), out.y_end, 0.0,
                                 out.t_end, {}, quiet);
  shot.residual = (unpack3(back.y_end) - m0).norm();
  return shot;
}

namespace {

double min_rho_rel_of(const AffineSystem& sys, const Extremal& ext) {
  double best = std::numeric_limits<double>::infinity();
  for (const Arc& arc : ext.arcs) {
    for (const ArcSample& s : arc.samples) {
      double rel = std::numeric_limits<double>::infinity();
      switch (arc.rep) {
        case StateRep::Chart9:
          rel = s.y[4] / s.y[6];
          break;
        case StateRep::Raw8: {
          LiftValues lv = lift_values(
              sys, CotangentPoint{s.y.segment<4>(0), s.y.segment<4>(4)});
          if (lv.r() > 0) rel = lv.rho() / lv.r();
          break;
        }
        default:
          continue;
      }
      best = std::min(best, rel);
    }
  }
  return best;
}

}  // namespace

StratumLabel classify_initial_condition(const AffineSystem& sys,
                                        const CotangentPoint& z0,
                                        const NearSigmaOptions& opts,
                                        const Tol& tol) {
  Extremal ext = integrate_near_sigma(sys, z0, opts, tol);
  StratumLabel label;
  label.min_rho_rel = min_rho_rel_of(sys, ext);
  if (ext.contact) {
    label.stratum = Stratum::Ss0;
    label.contact = ext.contact;
    for (const EventRecord& ev : ext.events)
      if (ev.kind == ArcEnd::ContactSigma0) label.witness = ev;
    return label;
  }
  for (const EventRecord& ev : ext.events) {
    if (ev.kind == ArcEnd::SwitchPi) {
      label.stratum = Stratum::Ss;
      label.witness = ev;
      return label;
    }
  }
  for (const EventRecord& ev : ext.events) {
    if (ev.kind == ArcEnd::ExitNeighborhood) {
      label.stratum = Stratum::S0;
      label.witness = ev;
      return label;
    }
  }
  throw InconclusiveClassification(
      "classify_initial_condition: horizon ended without exit, crossing, or "
      "contact; min rho/r reached " +
      std::to_string(label.min_rho_rel));
}

StratumBoundary classify_segment_boundary(const AffineSystem& sys,
                                          const CotangentPoint& zA,
                                          const CotangentPoint& zB,
                                          double width,
                                          const NearSigmaOptions& opts,
                                          const Tol& tol) {
  auto at = [&](double t) {
    return CotangentPoint{(1 - t) * zA.x + t * zB.x,
                          (1 - t) * zA.p + t * zB.p};
  };
  StratumBoundary out;
  out.label_lo = classify_initial_condition(sys, zA, opts, tol);
  out.label_hi = classify_initial_condition(sys, zB, opts, tol);
  if (out.label_lo.stratum == out.label_hi.stratum)
    throw Error("classify_segment_boundary: endpoints carry the same label");
  double lo = 0, hi = 1;
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    StratumLabel lm = classify_initial_condition(sys, at(mid), opts, tol);
    if (lm.stratum == out.label_lo.stratum) {
      lo = mid;
      out.label_lo = std::move(lm);
    } else {
      hi = mid;
      out.label_hi = std::move(lm);
    }
  }
  out.t_lo = lo;
  out.t_hi = hi;
  return out;
}

namespace {

// Sphere-flow atlas on {R = 0}. Chart 0 is the directional chart in
// (sbar, zetabar); chart 1 is the polar chart in (omega, rhobar), using the
// true pushforward field so orbits glue consistently across handoffs.
constexpr double kEnterPolar = 0.02;  // hand off below this gauge height
constexpr double kReturnDir = 0.05;   // and back above this one

struct SpherePoint {
  int chart = 0;
  Vec2 y{0, 0};
};

Vec2 dir_to_polar(const Vec2& sz) {
  PolarChartState p = blow_up_polar(Vec3(1.0, sz[0], sz[1]));
  return Vec2(p.omega, p.rhobar);
}

Vec2 polar_to_dir(const Vec2& wr) {
  DirChartState d = blow_up_dir(blow_down(PolarChartState{1.0, wr[0], wr[1]}));
  return Vec2(d.sbar, d.zetabar);
}

// Gauge height rho/R^3 of a directional-chart point, large near the chart
// origin (the axis, where the polar gauge degenerates).
double rhobar_gauge(const Vec2& sz) {
  if (sz.squaredNorm() < 1.0) return 1e3;
  return dir_to_polar(sz)[1];
}

RhsFn sphere_rhs(int chart, double c, double sign) {
  if (chart == 0) {
    return [c, sign](const StateVec& y, StateVec& d, double) {
      DirChartState st;
      st.R = 0;
      st.sbar = y[0];
      st.zetabar = y[1];
      Vec3 f = dir_chart_field(st, c);
      d.resize(2);
      d << sign * f[1], sign * f[2];
    };
  }
  return [c, sign](const StateVec& y, StateVec& d, double) {
    PolarChartState st;
    st.R = 0;
    st.omega = y[0];
    st.rhobar = y[1];
    Vec3 f = polar_chart_true_field(st, c);
    d.resize(2);
    d << sign * f[1], sign * f[2];
  };
}

double wrap_pi(double a) { return std::remainder(a, 2.0 * M_PI); }

struct SphereEquilibrium {
  SphereLimit label = SphereLimit::Escape;
  int chart = 0;
  Vec2 y{0, 0};
};

std::vector<SphereEquilibrium> sphere_equilibria(double c) {
  EquilibriumReport m0 = interior_equilibrium(c);
  const double w0 = std::acos(1.0 - std::sqrt(2.0));
  return {
      {SphereLimit::M0, 0, Vec2(m0.location[1], m0.location[2])},
      {SphereLimit::PiHalf, 1, Vec2(M_PI / 2, 0.0)},
      {SphereLimit::MinusPiHalf, 1, Vec2(-M_PI / 2, 0.0)},
      {SphereLimit::W0, 1, Vec2(w0, 0.0)},
      {SphereLimit::MinusW0, 1, Vec2(-w0, 0.0)},
  };
}

// Distance from an atlas point to an equilibrium, measured in the chart the
// equilibrium lives in; infinite when the point cannot be expressed there.
double eq_distance(const SpherePoint& pt, const SphereEquilibrium& eq) {
  if (eq.chart == 0) {
    if (pt.chart == 0) return (pt.y - eq.y).norm();
    if (pt.y[1] < 1e-3) return std::numeric_limits<double>::infinity();
    return (polar_to_dir(pt.y) - eq.y).norm();
  }
  Vec2 wr;
  if (pt.chart == 1) {
    wr = pt.y;
  } else {
    if (pt.y.squaredNorm() < 1.0)
      return std::numeric_limits<double>::infinity();
    wr = dir_to_polar(pt.y);
  }
  return std::hypot(wrap_pi(wr[0] - eq.y[0]), wr[1] - eq.y[1]);
}

struct SphereRun {
  SphereLimit limit = SphereLimit::Escape;
  long steps = 0;
  double min_rhobar = std::numeric_limits<double>::infinity();
};

// Follows one trajectory of the sphere flow (sign selects the direction)
// until it parks inside a classification ball for a full dwell period or the
// horizon runs out. Free flight goes in dwell-sized chunks so the chart and
// the ball test are refreshed regularly; mid-chunk handoffs are event-driven.
SphereRun run_to_limit(SpherePoint pt, double c, double sign,
                       const SphereGridSpec& spec) {
  SphereRun run;
  const std::vector<SphereEquilibrium> eqs = sphere_equilibria(c);
  OdeOptions ode = spec.ode;
  ode.record = true;

  auto note_samples = [&run](int chart, const std::vector<OdeSample>& ss) {
    for (const OdeSample& s : ss) {
      const double rb =
          chart == 1 ? s.y[1] : rhobar_gauge(Vec2(s.y[0], s.y[1]));
      run.min_rhobar = std::min(run.min_rhobar, rb);
    }
  };

  double t_used = 0;
  while (t_used < spec.horizon) {
    // Keep each chart on its own side of the gauge corridor.
    if (pt.chart == 0 && rhobar_gauge(pt.y) < kEnterPolar) {
      pt = {1, dir_to_polar(pt.y)};
    } else if (pt.chart == 1 && pt.y[1] > kReturnDir) {
      pt = {0, polar_to_dir(pt.y)};
    }

    int inside = -1;
    for (std::size_t i = 0; i < eqs.size(); ++i)
      if (eq_distance(pt, eqs[i]) <= spec.classify_radius) inside = int(i);

    if (inside >= 0) {
      // Dwell test: classified once the trajectory stays within twice the
      // classification radius for a full dwell period.
      const SphereEquilibrium eq = eqs[inside];
      const int chart_now = pt.chart;
      const double radius = spec.classify_radius;
      OdeEvent leave{[eq, chart_now, radius](const StateVec& y, double) {
                       return eq_distance({chart_now, Vec2(y[0], y[1])}, eq) -
                              2.0 * radius;
                     },
                     +1};
      OdeResult res = integrate_ode(sphere_rhs(chart_now, c, sign),
                                    pack2(pt.y), 0.0, spec.dwell, {leave}, ode);
      run.steps += res.steps;
      note_samples(chart_now, res.samples);
      t_used += res.t_end;
      pt.y = Vec2(res.y_end[0], res.y_end[1]);
      if (res.event_index < 0) {
        run.limit = eq.label;
        return run;
      }
      continue;
    }

    // Free flight for one chunk, stopping early at a chart handoff.
    std::vector<OdeEvent> evs;
    if (pt.chart == 0) {
      evs.push_back({[](const StateVec& y, double) {
                       return rhobar_gauge(Vec2(y[0], y[1])) - kEnterPolar;
                     },
                     -1});
    } else {
      evs.push_back(
          {[](const StateVec& y, double) { return y[1] - kReturnDir; }, +1});
    }
    OdeResult res =
        integrate_ode(sphere_rhs(pt.chart, c, sign), pack2(pt.y), 0.0,
                      std::min(spec.dwell, spec.horizon - t_used), evs, ode);
    run.steps += res.steps;
    note_samples(pt.chart, res.samples);
    t_used += res.t_end;
    pt.y = Vec2(res.y_end[0], res.y_end[1]);
    if (res.event_index == 0)
      pt = pt.chart == 0 ? SpherePoint{1, dir_to_polar(pt.y)}
                         : SpherePoint{0, polar_to_dir(pt.y)};
  }
  return run;  // horizon exhausted away from every equilibrium
}

}  // namespace

const char* to_string(SphereLimit l) {
  switch (l) {
    case SphereLimit::M0: return "m0";
    case SphereLimit::PiHalf: return "pi/2";
    case SphereLimit::MinusPiHalf: return "-pi/2";
    case SphereLimit::W0: return "w0";
    case SphereLimit::MinusW0: return "-w0";
    case SphereLimit::Escape: return "escape";
  }
  return "escape";
}

SpherePortrait portrait_sphere(double c, const SphereGridSpec& spec) {
  SpherePortrait out;
  out.c = c;
  interior_equilibrium(c);  // rejects c = 0 before any integration

  auto sample = [&](int chart, const Vec2& y0) {
    PortraitRow row;
    row.chart = chart;
    row.init = y0;
    SphereRun fwd = run_to_limit({chart, y0}, c, +1.0, spec);
    SphereRun bwd = run_to_limit({chart, y0}, c, -1.0, spec);
    row.limit_forward = fwd.limit;
    row.limit_backward = bwd.limit;
    row.steps = fwd.steps + bwd.steps;
    row.min_rhobar = std::min(fwd.min_rhobar, bwd.min_rhobar);
    out.rows.push_back(row);
  };

  for (int i = 0; i < spec.n_sbar; ++i) {
    const double s =
        spec.n_sbar == 1 ? spec.sbar_min
                         : spec.sbar_min + (spec.sbar_max - spec.sbar_min) *
                                               i / double(spec.n_sbar - 1);
    for (int j = 0; j < spec.n_zetabar; ++j) {
      const double z = spec.n_zetabar == 1
                           ? spec.zetabar_min
                           : spec.zetabar_min +
                                 (spec.zetabar_max - spec.zetabar_min) * j /
                                     double(spec.n_zetabar - 1);
      sample(0, Vec2(s, z));
    }
  }
  for (int i = 0; i < spec.n_omega; ++i) {
    const double w = spec.omega_min + (spec.omega_max - spec.omega_min) *
                                          (i + 0.5) / double(spec.n_omega);
    for (int j = 0; j < spec.n_rhobar; ++j) {
      const double rb = spec.n_rhobar == 1
                            ? spec.rhobar_min
                            : spec.rhobar_min +
                                  (spec.rhobar_max - spec.rhobar_min) * j /
                                      double(spec.n_rhobar - 1);
      sample(1, Vec2(w, rb));
    }
  }
  return out;
}

double model_divergence(double c, double sbar, double zetabar) {
  const double h = 1e-6;
  auto field = [c](const Vec3& v) {
    DirChartState st;
    st.R = v[0];
    st.sbar = v[1];
    st.zetabar = v[2];
    return dir_chart_field(st, c);
  };
  double tr = 0;
  for (int k = 0; k < 3; ++k) {
    Vec3 hi(0, sbar, zetabar), lo(0, sbar, zetabar);
    hi[k] += h;
    lo[k] -= h;
    tr += (field(hi)[k] - field(lo)[k]) / (2 * h);
  }
  return tr;
}

CycleReport falsify_periodic_orbits(double c, const CycleSearchSpec& spec) {
  CycleReport report;
  EquilibriumReport m0 = interior_equilibrium(c);
  const Vec2 center(m0.location[1], m0.location[2]);

  auto field2 = [c](const Vec2& y) {
    DirChartState st;
    st.R = 0;
    st.sbar = y[0];
    st.zetabar = y[1];
    Vec3 f = dir_chart_field(st, c);
    return Vec2(f[1], f[2]);
  };

  OdeOptions ode = spec.ode;
  ode.record = false;

  for (int ray = 0; ray < spec.n_rays; ++ray) {
    const double ang = 2.0 * M_PI * ray / spec.n_rays;
    for (int ri = 0; ri < spec.n_radii; ++ri) {
      const double rad =
          spec.n_radii == 1 ? spec.r_min
                            : spec.r_min + (spec.r_max - spec.r_min) * ri /
                                               double(spec.n_radii - 1);
      const Vec2 base = center + rad * Vec2(std::cos(ang), std::sin(ang));
      const Vec2 v = field2(base);
      if (v.norm() < 1e-3) continue;  // section would not be transverse
      const Vec2 vhat = v.normalized();
      const Vec2 nhat(-vhat[1], vhat[0]);

      SectionProbe probe;
      probe.base = base;
      probe.tangent = nhat;
      std::vector<std::pair<double, double>> disp;

      OdeEvent far{[center](const StateVec& s, double) {
                     return (Vec2(s[0], s[1]) - center).norm() - 6.0;
                   },
                   +1};

      for (int k = -spec.n_offsets; k <= spec.n_offsets; ++k) {
        const double sigma = spec.halfwidth * k / double(spec.n_offsets);
        ++probe.launches;
        Vec2 y = base + sigma * nhat;
        double t_left = spec.horizon;
        int hunts = 0;

        // offset launches start on the section line, and the field rotation
        // across the offset can push them fractionally behind it, so a pierce
        // only counts once the trajectory has cleared the launch neighborhood
        const double arm_radius = 3.0 * spec.halfwidth;
        {
          OdeEvent clear{[base, arm_radius](const StateVec& s, double) {
                           return (Vec2(s[0], s[1]) - base).norm() - arm_radius;
                         },
                         +1};
          OdeResult res = integrate_ode(sphere_rhs(0, c, +1.0), pack2(y), 0.0,
                                        t_left, {clear, far}, ode);
          t_left -= res.t_end;
          y = Vec2(res.y_end[0], res.y_end[1]);
          if (res.event_index != 0) t_left = 0;
        }

        while (t_left > 0 && hunts <= spec.max_hunts) {
          OdeEvent cross{[vhat, base](const StateVec& s, double) {
                           return vhat.dot(Vec2(s[0], s[1]) - base);
                         },
                         +1};
          OdeResult res = integrate_ode(sphere_rhs(0, c, +1.0), pack2(y), 0.0,
                                        t_left, {cross, far}, ode);
          t_left -= res.t_end;
          y = Vec2(res.y_end[0], res.y_end[1]);
          if (res.event_index != 0) break;  // escaped or out of time
          const double lateral = nhat.dot(y - base);
          if (std::abs(lateral) <= 1.5 * spec.halfwidth) {
            ++probe.returns;
            disp.push_back({sigma, lateral - sigma});
            probe.min_abs_displacement = std::min(probe.min_abs_displacement,
                                                  std::abs(lateral - sigma));
            break;
          }
          ++hunts;  // pierced the section line outside the window
        }
      }

      for (std::size_t i = 0; i + 1 < disp.size(); ++i)
        if (disp[i].second * disp[i + 1].second < 0) probe.sign_change = true;
      if (probe.sign_change) ++report.candidate_cycles;
      report.sections.push_back(std::move(probe));
    }
  }

  const int n = spec.div_grid;
  for (int i = 0; i < n; ++i) {
    const double s = spec.div_margin +
                     (spec.div_extent - spec.div_margin) * i / double(n - 1);
    for (int j = 0; j < n; ++j) {
      const double z = -spec.div_margin -
                       (spec.div_extent - spec.div_margin) * j / double(n - 1);
      const double tr = model_divergence(c, s, z);
      report.div_min = std::min(report.div_min, tr);
      report.div_mismatch =
          std::max(report.div_mismatch, std::abs(tr - 2.0 * s));
      ++report.div_samples;
    }
  }
  return report;
}

}  // namespace sigmaflow
