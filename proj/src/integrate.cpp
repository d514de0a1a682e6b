#include "sigmaflow/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sigmaflow/errors.hpp"

namespace sigmaflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

StateVec pack_chart(const SingularChartState& st, double t_phys) {
  StateVec y(9);
  y.segment<4>(0) = st.x;
  y[4] = st.rho;
  y[5] = st.theta;
  y[6] = st.r;
  y[7] = st.phi;
  y[8] = t_phys;
  return y;
}

SingularChartState unpack_chart(const StateVec& y) {
  SingularChartState st;
  st.x = y.segment<4>(0);
  st.rho = y[4];
  st.theta = y[5];
  st.r = y[6];
  st.phi = y[7];
  return st;
}

StateVec pack_raw(const CotangentPoint& z) {
  StateVec y(8);
  y.segment<4>(0) = z.x;
  y.segment<4>(4) = z.p;
  return y;
}

CotangentPoint unpack_raw(const StateVec& y) {
  return CotangentPoint{y.segment<4>(0), y.segment<4>(4)};
}

double rho_rel_of(const StateVec& y) { return y[4] / y[6]; }

RhsFn make_chart_rhs(const AffineSystem& sys, TimeFrame frame, Tol tol) {
  return [&sys, frame, tol](const StateVec& y, StateVec& d, double) {
    ChartRates cr = chart_flow_rates(sys, unpack_chart(y), frame, tol);
    d.resize(9);
    d.segment<4>(0) = cr.dx;
    d[4] = cr.drho;
    d[5] = cr.dtheta;
    d[6] = cr.dr;
    d[7] = cr.dphi;
    d[8] = cr.dt_phys;
  };
}

RhsFn make_hmax_rhs(const AffineSystem& sys) {
  return [&sys](const StateVec& y, StateVec& d, double) {
    CoTangent f = hmax_flow_field(sys, unpack_raw(y), 0.0);
    d.resize(8);
    d.segment<4>(0) = f.dx;
    d.segment<4>(4) = f.dp;
  };
}

void append_chart_samples(Arc& arc, const OdeResult& res) {
  for (const auto& s : res.samples) {
    if (!arc.samples.empty() && s.t <= arc.samples.back().time) continue;
    arc.samples.push_back({s.t, s.y});
    arc.samples.back().rho = s.y[4];
  }
}

void append_raw_samples(const AffineSystem& sys, Arc& arc, const OdeResult& res) {
  for (const auto& s : res.samples) {
    if (!arc.samples.empty() && s.t <= arc.samples.back().time) continue;
    arc.samples.push_back({s.t, s.y});
    arc.samples.back().rho = lift_values(sys, unpack_raw(s.y)).rho();
  }
}

// Directional derivative of a(xi) along the on-locus drift with control angle
// offset s_star, Richardson-extrapolated central difference.
double a_slope(const AffineSystem& sys, const XiPoint& xi, double s_star,
               const Tol& tol) {
  XiRates v = xi_velocity_on_sigma(sys, xi, s_star, tol);
  auto slope = [&](double h) {
    XiPoint plus{xi.x + h * v.dx, xi.r + h * v.dr, xi.phi + h * v.dphi};
    XiPoint minus{xi.x - h * v.dx, xi.r - h * v.dr, xi.phi - h * v.dphi};
    return (a_of_xi(sys, plus, tol) - a_of_xi(sys, minus, tol)) / (2.0 * h);
  };
  const double h = 1e-5;
  return (4.0 * slope(h / 2) - slope(h)) / 3.0;
}

struct FunnelFrame {
  double s_star;
  double sigma;
  double a0;
  double c_eff;
  double sbar0;
  double zetabar0;
};

double funnel_sbar(const SingularChartState& st, const FunnelFrame& f) {
  const double R = std::cbrt(st.rho / st.r);
  if (R <= 0) return kNaN;
  return f.sigma * wrap_angle(st.s() - f.s_star) / R;
}

std::optional<FunnelFrame> detect_funnel(const AffineSystem& sys,
                                         const SingularChartState& st,
                                         const NearSigmaOptions& opts,
                                         const Tol& tol) {
  XiPoint xi{st.x, st.r, st.phi};
  double a;
  try {
    a = a_of_xi(sys, xi, tol);
  } catch (const Error&) {
    return std::nullopt;
  }
  FunnelFrame f;
  if (std::abs(a - 1.0) <= opts.funnel_alpha) {
    f.s_star = 0.0;
    f.sigma = 1.0;
    f.a0 = 1.0;
  } else if (std::abs(a + 1.0) <= opts.funnel_alpha) {
    f.s_star = M_PI;
    f.sigma = -1.0;
    f.a0 = -1.0;
  } else {
    return std::nullopt;
  }
  f.c_eff = f.sigma * a_slope(sys, xi, f.s_star, tol);
  // the funnel only drains toward the locus when the transverse drift is
  // positive in the oriented frame
  if (!(f.c_eff > tol.genericity)) return std::nullopt;
  f.sbar0 = std::cbrt(9.0 * f.c_eff / 5.0);
  f.zetabar0 = -(5.0 / 6.0) * f.sbar0 * f.sbar0;
  const double sb = funnel_sbar(st, f);
  if (!std::isfinite(sb) || std::abs(sb - f.sbar0) > opts.funnel_band)
    return std::nullopt;
  return f;
}

// Intersection of the lines fitted on both flanks of a V-shaped dip of
// rho(t). The dip is rounded at the scale of the closest-approach radius, so
// the fit points are chosen by value, well above the bottom, where the two
// asymptotes are already straight.
double kink_time(const std::vector<ArcSample>& samples) {
  std::size_t m = 0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].rho < samples[m].rho) m = i;
  }
  if (m == 0 || m + 1 >= samples.size()) return samples[m].time;
  const double floor_v = 30.0 * std::max(samples[m].rho, 1e-300);
  std::size_t l1 = m, r1 = m;
  while (l1 > 0 && samples[l1].rho < floor_v) --l1;
  while (r1 + 1 < samples.size() && samples[r1].rho < floor_v) ++r1;
  if (samples[l1].rho < floor_v || samples[r1].rho < floor_v)
    return samples[m].time;
  std::size_t l0 = l1, r0 = r1;
  while (l0 > 0 && samples[l0].rho < 3.0 * samples[l1].rho) --l0;
  while (r0 + 1 < samples.size() && samples[r0].rho < 3.0 * samples[r1].rho) ++r0;
  if (l0 == l1 || r0 == r1) return samples[m].time;
  auto line_through = [&](std::size_t i, std::size_t j, double& k, double& b) {
    const double t0 = samples[i].time, t1 = samples[j].time;
    const double v0 = samples[i].rho, v1 = samples[j].rho;
    k = (v1 - v0) / (t1 - t0);
    b = v0 - k * t0;
  };
  double kl, bl, kr, br;
  line_through(l0, l1, kl, bl);
  line_through(r1, r0, kr, br);
  if (std::abs(kl - kr) < 1e-300) return samples[m].time;
  return (br - bl) / (kl - kr);
}

}  // namespace

Arc integrate_bang(const AffineSystem& sys, const CotangentPoint& z0,
                   double horizon, const BangOptions& opts) {
  LiftValues lv0 = lift_values(sys, z0);
  if (lv0.rho() <= opts.rho_switch)
    throw OnSwitchingLocus("integrate_bang: initial point has |(H1,H2)| <= rho_switch");
  OdeEvent hit{[&sys, &opts](const StateVec& y, double) {
                 return lift_values(sys, unpack_raw(y)).rho() - opts.rho_switch;
               },
               -1};
  OdeResult res = integrate_ode(make_hmax_rhs(sys), pack_raw(z0), 0.0, horizon,
                                {hit}, opts.ode);
  Arc arc;
  arc.kind = ArcKind::Bang;
  arc.frame = TimeFrame::Physical;
  arc.rep = StateRep::Raw8;
  append_raw_samples(sys, arc, res);
  arc.end = res.event_index == 0 ? ArcEnd::SwitchPi : ArcEnd::None;
  return arc;
}

CotangentPoint project_to_sigma0(const AffineSystem& sys,
                                 const CotangentPoint& zbar, double s_star,
                                 double sigma, const Tol& tol) {
  SingularChartState st = to_chart(sys, zbar, tol);
  const double a0 = std::abs(wrap_angle(s_star)) < 1.0 ? 1.0 : -1.0;
  XiPoint xi{st.x, st.r, st.phi};
  for (int iter = 0; iter < 6; ++iter) {
    const double zt = sigma * (a_of_xi(sys, xi, tol) - a0);
    if (std::abs(zt) <= 1e-13) break;
    const double slope = sigma * a_slope(sys, xi, s_star, tol);
    if (std::abs(slope) <= tol.genericity)
      throw GenericityViolated("project_to_sigma0: flat drift direction");
    const double h = -zt / slope;
    XiRates v = xi_velocity_on_sigma(sys, xi, s_star, tol);
    xi.x += h * v.dx;
    xi.r += h * v.dr;
    xi.phi += h * v.dphi;
  }
  SingularChartState out;
  out.x = xi.x;
  out.rho = 0.0;
  out.theta = st.theta;
  out.r = xi.r;
  out.phi = xi.phi;
  return from_chart(sys, out, tol);
}

Extremal integrate_near_sigma(const AffineSystem& sys, const CotangentPoint& z0,
                              const NearSigmaOptions& opts, const Tol& tol) {
  return integrate_near_sigma(sys, to_chart(sys, z0, tol), opts, tol);
}

Extremal integrate_near_sigma(const AffineSystem& sys,
                              const SingularChartState& st0,
                              const NearSigmaOptions& opts, const Tol& tol) {
  Extremal ext;
  SingularChartState cur = st0;
  ext.r0 = cur.r;
  double t_phys = 0.0;
  if (cur.rho / cur.r > opts.rho_exit)
    throw NotInNeighborhood("integrate_near_sigma: |(H1,H2)| already above the exit radius");

  enum class Phase { T1, T2, Funnel, Retreat, Done };
  Phase phase = (cur.rho / cur.r >= opts.rho_hand) ? Phase::T1 : Phase::T2;
  bool crossed = false;
  bool funnel_barred = false;
  std::optional<FunnelFrame> funnel;

  // resuming after a funnel miss: deep under the handoff radius the t2 clock
  // crawls, so the leg back out (or down through the corner) is flown in the
  // t3 frame instead
  auto resume_phase = [&](const SingularChartState& st) {
    return st.rho / st.r >= 1.2 * opts.rho_hand ? Phase::T1 : Phase::Retreat;
  };

  // a dip below the corner radius is finished in the raw variables so the
  // corner and the control rotation are measured, not imposed
  auto corner_stage = [&]() {
    CotangentPoint z = from_chart(sys, cur, tol);
    Arc raw;
    raw.kind = ArcKind::Bang;
    raw.frame = TimeFrame::Physical;
    raw.rep = StateRep::Raw8;
    const double budget = 1e4 * opts.rho_cross + 1e-9;
    // stage 1: to the closest approach, where d/dt of rho^2/2 crosses zero
    OdeEvent turn{[&sys](const StateVec& y, double) {
                    LiftValues lv = lift_values(sys, unpack_raw(y));
                    return lv.H1 * lv.H01 + lv.H2 * lv.H02;
                  },
                  +1};
    OdeResult stage1 = integrate_ode(make_hmax_rhs(sys), pack_raw(z), t_phys,
                                     t_phys + budget, {turn}, opts.ode);
    append_raw_samples(sys, raw, stage1);
    bool switched = stage1.event_index == 0;
    const double t_bar = stage1.t_end;
    OdeResult stage2;
    if (switched) {
      OdeEvent away{[&](const StateVec& y, double) {
                      LiftValues lv = lift_values(sys, unpack_raw(y));
                      return lv.rho() / lv.r() - 1.05 * opts.rho_cross;
                    },
                    +1};
      stage2 = integrate_ode(make_hmax_rhs(sys), stage1.y_end, stage1.t_end,
                             t_phys + budget, {away}, opts.ode);
      append_raw_samples(sys, raw, stage2);
      switched = stage2.event_index == 0;
    }
    raw.end = ArcEnd::FrameSeam;
    const OdeResult& last = stage1.event_index == 0 ? stage2 : stage1;
    cur = to_chart(sys, unpack_raw(last.y_end), tol);
    t_phys = last.t_end;
    ext.arcs.push_back(std::move(raw));
    if (switched) {
      ext.events.push_back({t_bar, ArcEnd::SwitchPi, int(ext.arcs.size()) - 1});
      crossed = true;
    }
    // without a turn and a clean recession inside the budget, hand what is
    // left back to the t2 flow rather than guessing
    phase = Phase::T2;
  };

  auto horizon_event = [&](const StateVec& y, double) {
    return y[8] - opts.t_phys_horizon;
  };

  int guard = 0;
  while (phase != Phase::Done) {
    if (++guard > 64) break;
    if (phase == Phase::T1) {
      OdeEvent down{[&](const StateVec& y, double) { return rho_rel_of(y) - opts.rho_hand; }, -1};
      OdeEvent out{[&](const StateVec& y, double) { return rho_rel_of(y) - opts.rho_exit; }, +1};
      OdeEvent tp{horizon_event, +1};
      OdeResult res = integrate_ode(make_chart_rhs(sys, TimeFrame::T1, tol),
                                    pack_chart(cur, t_phys), 0.0, opts.t1_horizon,
                                    {down, out, tp}, opts.ode);
      Arc arc;
      arc.kind = ArcKind::Bang;
      arc.frame = TimeFrame::T1;
      arc.rep = StateRep::Chart9;
      append_chart_samples(arc, res);
      cur = unpack_chart(res.y_end);
      t_phys = res.y_end[8];
      if (res.event_index == 0) {
        arc.end = ArcEnd::FrameSeam;
        ext.arcs.push_back(std::move(arc));
        phase = Phase::T2;
      } else if (res.event_index == 1) {
        arc.end = ArcEnd::ExitNeighborhood;
        ext.arcs.push_back(std::move(arc));
        ext.events.push_back({t_phys, ArcEnd::ExitNeighborhood, int(ext.arcs.size()) - 1});
        phase = Phase::Done;
      } else {
        arc.end = ArcEnd::None;
        ext.arcs.push_back(std::move(arc));
        phase = Phase::Done;
      }
    } else if (phase == Phase::T2) {
      if (!crossed && !funnel_barred) {
        funnel = detect_funnel(sys, cur, opts, tol);
        if (funnel) {
          if (!ext.arcs.empty()) ext.arcs.back().end = ArcEnd::BlowupHandoff;
          ext.events.push_back({t_phys, ArcEnd::BlowupHandoff, int(ext.arcs.size()) - 1});
          phase = Phase::Funnel;
          continue;
        }
      }
      OdeEvent corner{[&](const StateVec& y, double) { return rho_rel_of(y) - opts.rho_cross; }, -1};
      OdeEvent up{[&](const StateVec& y, double) { return rho_rel_of(y) - 1.2 * opts.rho_hand; }, +1};
      OdeEvent tp{horizon_event, +1};
      OdeResult res = integrate_ode(make_chart_rhs(sys, TimeFrame::T2, tol),
                                    pack_chart(cur, t_phys), 0.0, opts.t2_horizon,
                                    {corner, up, tp}, opts.ode);
      Arc arc;
      arc.kind = ArcKind::Bang;
      arc.frame = TimeFrame::T2;
      arc.rep = StateRep::Chart9;
      append_chart_samples(arc, res);
      cur = unpack_chart(res.y_end);
      t_phys = res.y_end[8];
      if (res.event_index == 0) {
        // transversal crossing: finish the approach in the raw variables so the
        // corner and the control rotation are measured, not imposed
        arc.end = ArcEnd::FrameSeam;
        ext.arcs.push_back(std::move(arc));
        corner_stage();
      } else if (res.event_index == 1) {
        arc.end = ArcEnd::FrameSeam;
        ext.arcs.push_back(std::move(arc));
        phase = Phase::T1;
      } else {
        arc.end = ArcEnd::None;
        ext.arcs.push_back(std::move(arc));
        phase = Phase::Done;
      }
    } else if (phase == Phase::Retreat) {
      // a barred trajectory either climbs back to the handoff radius or dives
      // on through the corner; both walls are set where their successor
      // stage's own events arm
      const double dip_thr =
          std::min(2.0 * opts.rho_cross, 0.5 * cur.rho / cur.r);
      OdeEvent up{[&](const StateVec& y, double) {
                    return rho_rel_of(y) - 1.2 * opts.rho_hand;
                  },
                  +1};
      OdeEvent descend{[&, dip_thr](const StateVec& y, double) {
                         return rho_rel_of(y) - dip_thr;
                       },
                       -1};
      OdeEvent tp{horizon_event, +1};
      OdeResult res = integrate_ode(make_chart_rhs(sys, TimeFrame::T3, tol),
                                    pack_chart(cur, t_phys), 0.0, opts.t3_horizon,
                                    {up, descend, tp}, opts.ode);
      Arc arc;
      arc.kind = ArcKind::BlownUp;
      arc.frame = TimeFrame::T3;
      arc.rep = StateRep::Chart9;
      append_chart_samples(arc, res);
      cur = unpack_chart(res.y_end);
      t_phys = res.y_end[8];
      if (res.event_index == 0) {
        arc.end = ArcEnd::FrameSeam;
        ext.arcs.push_back(std::move(arc));
        phase = Phase::T1;
      } else if (res.event_index == 1) {
        arc.end = ArcEnd::FrameSeam;
        ext.arcs.push_back(std::move(arc));
        corner_stage();
      } else {
        arc.end = ArcEnd::None;
        ext.arcs.push_back(std::move(arc));
        phase = Phase::Done;
      }
    } else {  // Funnel, t3 frame
      const FunnelFrame f = *funnel;
      const double zeta_band =
          (5.0 / 3.0) * std::abs(f.sbar0) * opts.funnel_band;
      auto zetabar_of = [&](const SingularChartState& st) {
        const double R = std::cbrt(st.rho / st.r);
        if (!(R > 0)) return kNaN;
        XiPoint xi{st.x, st.r, st.phi};
        try {
          return f.sigma * (a_of_xi(sys, xi, tol) - f.a0) / (R * R);
        } catch (const Error&) {
          return kNaN;
        }
      };
      // the t3 frame is only trusted inside the funnel box and descending; a
      // near-miss drifts off in the transverse coordinate without ever pulling
      // the angle out of its band, so the angle test alone cannot end the stage
      const double zb_in = zetabar_of(cur);
      const double R_in = std::cbrt(cur.rho / cur.r);
      if (!std::isfinite(zb_in) || std::abs(zb_in - f.zetabar0) > zeta_band) {
        funnel_barred = true;
        phase = resume_phase(cur);
        continue;
      }
      OdeEvent contact{[&](const StateVec& y, double) {
                         return std::cbrt(rho_rel_of(y)) - opts.R_contact;
                       },
                       -1};
      OdeEvent escape{[&, f](const StateVec& y, double) {
                        return std::abs(funnel_sbar(unpack_chart(y), f) - f.sbar0) -
                               opts.funnel_band;
                      },
                      +1};
      OdeEvent drift{[&](const StateVec& y, double) {
                       const double zb = zetabar_of(unpack_chart(y));
                       if (!std::isfinite(zb)) return 1.0;
                       return std::abs(zb - f.zetabar0) - zeta_band;
                     },
                     +1};
      OdeEvent rise{[&, R_in](const StateVec& y, double) {
                      return std::cbrt(rho_rel_of(y)) - 1.2 * R_in;
                    },
                    +1};
      OdeEvent tp{horizon_event, +1};
      OdeResult res = integrate_ode(make_chart_rhs(sys, TimeFrame::T3, tol),
                                    pack_chart(cur, t_phys), 0.0, opts.t3_horizon,
                                    {contact, escape, drift, rise, tp}, opts.ode);
      Arc arc;
      arc.kind = ArcKind::BlownUp;
      arc.frame = TimeFrame::T3;
      arc.rep = StateRep::Chart9;
      append_chart_samples(arc, res);
      cur = unpack_chart(res.y_end);
      t_phys = res.y_end[8];
      if (res.event_index == 0) {
        arc.end = ArcEnd::ContactSigma0;
        ext.arcs.push_back(std::move(arc));

        ContactInfo ci;
        ci.s_star = f.s_star;
        ci.sigma = f.sigma;
        ci.c_eff = f.c_eff;
        ci.sbar0 = f.sbar0;
        ci.R_end = std::cbrt(cur.rho / cur.r);
        ci.sbar_end = funnel_sbar(cur, f);
        XiPoint xi{cur.x, cur.r, cur.phi};
        const double a_end = a_of_xi(sys, xi, tol);
        ci.a = a_end;
        ci.zetabar_end = f.sigma * (a_end - f.a0) / (ci.R_end * ci.R_end);
        // remaining physical time along the attracting ray: dt = (R^2/r) dt3
        // with R shrinking at rate sbar0/3, all in the p-scale-free convention
        ci.tail = 3.0 * ci.R_end * ci.R_end / (2.0 * f.sbar0);
        ci.t_phys = t_phys;

        SingularChartState flat = cur;
        flat.rho = 0.0;
        CotangentPoint zmid = from_chart(sys, flat, tol);
        ci.zbar = project_to_sigma0(sys, zmid, f.s_star, f.sigma, tol);
        ci.gap_frame = std::abs(wrap_angle(cur.s()));
        LiftValues lvc = lift_values(sys, ci.zbar);
        SingularControl us = singular_feedback(lvc, tol.rho);
        ci.gap_raw =
            std::abs(wrap_angle(std::atan2(us.u[1], us.u[0]) - cur.theta));
        ci.singular_admissible = us.u.norm() <= 1.0 + opts.singular_norm_tol;
        ext.events.push_back({t_phys + ci.tail, ArcEnd::ContactSigma0,
                              int(ext.arcs.size()) - 1});

        if (ci.singular_admissible && opts.singular_continuation &&
            opts.singular_time > 0) {
          RhsFn sing_rhs = [&sys, &tol](const StateVec& y, StateVec& d, double) {
            CoTangent fv = singular_flow_field(sys, unpack_raw(y), tol.rho);
            d.resize(8);
            d.segment<4>(0) = fv.dx;
            d.segment<4>(4) = fv.dp;
          };
          const double norm_cap = 1.0 + opts.singular_norm_tol;
          OdeEvent inadmissible{[&sys, &tol, norm_cap](const StateVec& y, double) {
                                  LiftValues lv = lift_values(sys, unpack_raw(y));
                                  SingularControl u = singular_feedback(lv, tol.rho);
                                  return u.u.norm() - norm_cap;
                                },
                                +1};
          const double t_c = t_phys + ci.tail;
          OdeResult sres = integrate_ode(sing_rhs, pack_raw(ci.zbar), t_c,
                                         t_c + opts.singular_time, {inadmissible},
                                         opts.ode);
          Arc sarc;
          sarc.kind = ArcKind::Singular;
          sarc.frame = TimeFrame::Physical;
          sarc.rep = StateRep::Raw8;
          append_raw_samples(sys, sarc, sres);
          sarc.end = sres.event_index == 0 ? ArcEnd::ExitNeighborhood : ArcEnd::None;
          ext.arcs.push_back(std::move(sarc));
        }
        ext.contact = ci;
        phase = Phase::Done;
      } else if (res.event_index >= 1 && res.event_index <= 3) {
        arc.end = ArcEnd::FrameSeam;
        ext.arcs.push_back(std::move(arc));
        funnel_barred = true;
        phase = resume_phase(cur);
      } else {
        arc.end = ArcEnd::None;
        ext.arcs.push_back(std::move(arc));
        phase = Phase::Done;
      }
    }
  }
  return ext;
}

ContactTimes contact_time(const Extremal& ext) {
  ContactTimes ct;
  if (ext.contact) {
    ct.t_sigma0 = ext.contact->t_phys + ext.contact->tail;
    ct.tail_bound = ext.contact->tail;
  }
  for (const auto& ev : ext.events) {
    if (ev.kind != ArcEnd::SwitchPi) continue;
    const Arc& arc = ext.arcs[ev.arc_index];
    if (arc.samples.size() >= 5) ct.t_sigma = kink_time(arc.samples);
    else ct.t_sigma = ev.t_phys;
    break;
  }
  if (!ct.t_sigma && !ct.t_sigma0)
    throw NoContact("contact_time: extremal neither crossed nor contacted the locus");
  return ct;
}

CotangentPoint state_at_sample(const AffineSystem& sys, const Arc& arc,
                               std::size_t i) {
  const ArcSample& s = arc.samples.at(i);
  switch (arc.rep) {
    case StateRep::Raw8:
      return unpack_raw(s.y);
    case StateRep::Chart9:
      return from_chart(sys, unpack_chart(s.y));
    default:
      throw std::invalid_argument("state_at_sample: model arcs carry no cotangent state");
  }
}

double physical_time_at_sample(const Arc& arc, std::size_t i) {
  const ArcSample& s = arc.samples.at(i);
  return arc.rep == StateRep::Chart9 ? s.y[8] : s.time;
}

namespace {

// Limit angle of (H1,H2) on one flank of a corner passage. At distance rho
// from the locus the measured angle carries an O(b/rho) error, b being the
// closest-approach radius; fitting theta = theta_lim + k/rho on two samples
// of the same flank removes it.
double flank_angle(const std::vector<double>& th, const std::vector<double>& rho,
                   std::size_t edge, std::size_t bottom) {
  const long dir = edge < bottom ? 1 : -1;
  long b_idx = -1;
  for (long i = long(edge) + dir; i != long(bottom); i += dir) {
    if (rho[i] <= rho[edge] / 8.0) {
      b_idx = i;
      break;
    }
  }
  if (b_idx < 0) return th[edge];
  const double ra = rho[edge], rb = rho[b_idx];
  const double k = (th[edge] - th[b_idx]) / (1.0 / ra - 1.0 / rb);
  return th[edge] - k / ra;
}

}  // namespace

ControlHistory control_history(const AffineSystem& sys, const Extremal& ext) {
  ControlHistory hist;
  for (std::size_t ai = 0; ai < ext.arcs.size(); ++ai) {
    const Arc& arc = ext.arcs[ai];
    for (std::size_t i = 0; i < arc.samples.size(); ++i) {
      const ArcSample& s = arc.samples[i];
      ControlSample cs;
      cs.t = physical_time_at_sample(arc, i);
      if (arc.rep == StateRep::Chart9) {
        cs.u = Vec2(std::cos(s.y[5]), std::sin(s.y[5]));
      } else if (arc.kind == ArcKind::Singular) {
        LiftValues lv = lift_values(sys, unpack_raw(s.y));
        cs.u = singular_feedback(lv).u;
      } else if (arc.rep == StateRep::Raw8) {
        LiftValues lv = lift_values(sys, unpack_raw(s.y));
        if (lv.rho() <= 1e-12 * std::max(1.0, lv.r())) continue;  // corner point
        cs.u = Vec2(lv.H1, lv.H2) / lv.rho();
      } else {
        continue;
      }
      hist.samples.push_back(cs);
    }
  }

  for (const auto& ev : ext.events) {
    if (ev.kind == ArcEnd::SwitchPi) {
      const Arc& arc = ext.arcs[ev.arc_index];
      const std::size_t n = arc.samples.size();
      std::vector<double> th(n), rho(n);
      std::size_t bottom = 0;
      for (std::size_t i = 0; i < n; ++i) {
        LiftValues lv = lift_values(sys, unpack_raw(arc.samples[i].y));
        const double raw = std::atan2(lv.H2, lv.H1);
        th[i] = i == 0 ? raw : th[i - 1] + wrap_angle(raw - th[i - 1]);
        rho[i] = lv.rho();
        if (rho[i] < rho[bottom]) bottom = i;
      }
      ControlJump j;
      j.t = ev.t_phys;
      if (bottom > 0 && bottom + 1 < n) {
        j.gap = std::abs(flank_angle(th, rho, n - 1, bottom) -
                         flank_angle(th, rho, 0, bottom));
      } else {
        j.gap = std::abs(wrap_angle(th.back() - th.front()));
      }
      j.gap_frame = j.gap;
      j.gap_raw = j.gap;
      j.cause = ArcEnd::SwitchPi;
      hist.jumps.push_back(j);
    } else if (ev.kind == ArcEnd::ContactSigma0 && ext.contact) {
      ControlJump j;
      j.t = ev.t_phys;
      j.gap = ext.contact->gap_frame;
      j.gap_frame = ext.contact->gap_frame;
      j.gap_raw = ext.contact->gap_raw;
      j.cause = ArcEnd::ContactSigma0;
      hist.jumps.push_back(j);
    }
  }
  return hist;
}

FunnelSeed seed_funnel(const AffineSystem& sys, const CotangentPoint& zbar,
                       double R0, double R_refine, const NearSigmaOptions& opts,
                       const Tol& tol) {
  SingularChartState base = to_chart(sys, zbar, tol);
  XiPoint xi0{base.x, base.r, base.phi};
  const double a = a_of_xi(sys, xi0, tol);
  FunnelSeed seed;
  if (std::abs(a - 1.0) <= opts.funnel_alpha) {
    seed.s_star = 0.0;
    seed.sigma = 1.0;
  } else if (std::abs(a + 1.0) <= opts.funnel_alpha) {
    seed.s_star = M_PI;
    seed.sigma = -1.0;
  } else {
    throw NotInNeighborhood("seed_funnel: base point has |H12| away from |(H01,H02)|");
  }
  const double a0 = seed.sigma;
  seed.c_eff = seed.sigma * a_slope(sys, xi0, seed.s_star, tol);
  if (!(seed.c_eff > tol.genericity))
    throw GenericityViolated("seed_funnel: transverse drift does not feed the funnel");
  seed.sbar0 = std::cbrt(9.0 * seed.c_eff / 5.0);
  seed.zetabar0 = -(5.0 / 6.0) * seed.sbar0 * seed.sbar0;
  const double zt_base = seed.sigma * (a - a0);

  auto build = [&](double e1, double e2) {
    const double delta = (seed.zetabar0 * R0 * R0 + e2 - zt_base) / seed.c_eff;
    XiRates v = xi_velocity_on_sigma(sys, xi0, seed.s_star, tol);
    SingularChartState st;
    st.x = xi0.x + delta * v.dx;
    st.r = xi0.r + delta * v.dr;
    st.phi = xi0.phi + delta * v.dphi;
    st.rho = R0 * R0 * R0 * st.r;
    st.theta = st.phi + M_PI / 2 + seed.s_star + seed.sigma * (R0 * seed.sbar0 + e1);
    return st;
  };
  // measured (sbar, zetabar) deviation from the equilibrium at radius R_meas
  auto sbar_of = [&](const SingularChartState& st) {
    return seed.sigma * wrap_angle(st.s() - seed.s_star) /
           std::cbrt(st.rho / st.r);
  };
  // fit at a tighter tolerance than the main run: integration error injected
  // near R0 reaches the matching radius multiplied by the same 7/2 power that
  // the fit is trying to cancel, and it caps the reachable residual
  OdeOptions fit_ode = opts.ode;
  fit_ode.abs_tol = std::min(fit_ode.abs_tol, 1e-13);
  fit_ode.rel_tol = std::min(fit_ode.rel_tol, 1e-13);
  auto measure = [&](double e1, double e2, double R_meas) {
    SingularChartState st = build(e1, e2);
    OdeEvent hit{[&](const StateVec& y, double) {
                   return std::cbrt(y[4] / y[6]) - R_meas;
                 },
                 -1};
    // a badly aimed trial ejects along the unstable pair; stop it while the
    // dynamics is still tame instead of letting rho crash through zero
    OdeEvent lost{[&](const StateVec& y, double) {
                    return std::abs(sbar_of(unpack_chart(y)) - seed.sbar0) - 1.0;
                  },
                  +1};
    const double horizon = 6.0 * std::log(R0 / R_meas) / seed.sbar0 + 10.0;
    ++seed.newton_evals;
    OdeResult res;
    try {
      res = integrate_ode(make_chart_rhs(sys, TimeFrame::T3, tol),
                          pack_chart(st, 0.0), 0.0, horizon, {hit, lost},
                          fit_ode);
    } catch (const Error&) {
      return Vec2(1e3, 1e3);
    }
    if (res.event_index != 0) return Vec2(1e3, 1e3);
    SingularChartState end = unpack_chart(res.y_end);
    const double R = std::cbrt(end.rho / end.r);
    const double sb = seed.sigma * wrap_angle(end.s() - seed.s_star) / R;
    XiPoint xe{end.x, end.r, end.phi};
    const double zb =
        seed.sigma * (a_of_xi(sys, xe, tol) - a0) / (R * R);
    return Vec2(sb - seed.sbar0, zb - seed.zetabar0);
  };

  // The transverse error grows like (R0/R)^{7/2}, so the matching radius must
  // descend gently: halve it per stage and re-aim before moving deeper.
  double e1 = 0.0, e2 = 0.0;
  double R_meas = R0;
  while (R_meas > R_refine * 1.0000001) {
    R_meas = std::max(R_meas / 2.0, R_refine);
    const double amp = std::pow(R0 / R_meas, 3.5);
    Vec2 F = measure(e1, e2, R_meas);
    for (int iter = 0; iter < 8 && F.cwiseAbs().maxCoeff() > 1e-10; ++iter) {
      const double h1 =
          std::max(1e-15, (1e-3 + 0.3 * std::abs(F[0])) * R0 / amp);
      const double h2 =
          std::max(1e-15, (1e-3 + 0.3 * std::abs(F[1])) * R0 * R0 / amp);
      Vec2 F1 = measure(e1 + h1, e2, R_meas);
      Vec2 F2 = measure(e1, e2 + h2, R_meas);
      Eigen::Matrix2d J;
      J.col(0) = (F1 - F) / h1;
      J.col(1) = (F2 - F) / h2;
      Vec2 step = J.fullPivLu().solve(F);
      if (!step.allFinite()) break;
      double scale = 1.0;
      bool improved = false;
      Vec2 Fn;
      for (int half = 0; half < 5; ++half) {
        Fn = measure(e1 - scale * step[0], e2 - scale * step[1], R_meas);
        if (Fn.norm() < F.norm()) {
          improved = true;
          break;
        }
        scale *= 0.5;
      }
      if (!improved) break;  // amplified-roundoff floor for this depth
      e1 -= scale * step[0];
      e2 -= scale * step[1];
      F = Fn;
    }
    seed.dev = F.cwiseAbs().maxCoeff();
    if (seed.dev > 0.3) break;  // ejected; deeper stages cannot recover
  }
  seed.st0 = build(e1, e2);
  seed.z0 = from_chart(sys, seed.st0, tol);
  return seed;
}

double max_junction_mismatch(const AffineSystem& sys, const Extremal& ext) {
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < ext.arcs.size(); ++i) {
    const Arc& a = ext.arcs[i];
    const Arc& b = ext.arcs[i + 1];
    if (a.samples.empty() || b.samples.empty()) continue;
    if (a.rep == StateRep::Model3 || b.rep == StateRep::Model3) continue;
    CotangentPoint za = state_at_sample(sys, a, a.samples.size() - 1);
    CotangentPoint zb = state_at_sample(sys, b, 0);
    const double dx = (za.x - zb.x).cwiseAbs().maxCoeff();
    const double dp = (za.p - zb.p).cwiseAbs().maxCoeff();
    worst = std::max(worst, std::max(dx, dp));
  }
  return worst;
}

}  // namespace sigmaflow
