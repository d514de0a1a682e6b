#include "sigmaflow/chart.hpp"

#include <Eigen/LU>
#include <cmath>

namespace sigmaflow {

Mat4 adjoint_frame(const AffineSystem& sys, const Vec4& x) {
  Mat4 m;
  m.row(0) = sys.F1.eval(x).transpose();
  m.row(1) = sys.F2.eval(x).transpose();
  m.row(2) = sys.F01.eval(x).transpose();
  m.row(3) = sys.F02.eval(x).transpose();
  return m;
}

SingularChartState to_chart(const AffineSystem& sys, const CotangentPoint& z,
                            const Tol& tol) {
  if (z.p.norm() <= tol.adjoint) {
    throw AdjointVanishes("to_chart: adjoint vector is numerically zero");
  }
  FrameRank fr = check_frame_rank(sys, z.x, tol.frame_det);
  if (!fr.holds) {
    throw FrameRankDeficient("to_chart: frame determinant " + std::to_string(fr.det));
  }
  LiftValues lv = lift_values(sys, z);
  const double r = lv.r();
  if (r <= tol.rho) {
    throw NotInNeighborhood("to_chart: |(H01,H02)| vanishes, polar pair undefined");
  }
  SingularChartState st;
  st.x = z.x;
  st.rho = lv.rho();
  st.theta = std::atan2(lv.H2, lv.H1);
  st.r = r;
  st.phi = std::atan2(lv.H02, lv.H01);
  return st;
}

CotangentPoint from_chart(const AffineSystem& sys, const SingularChartState& st,
                          const Tol& tol) {
  Mat4 m = adjoint_frame(sys, st.x);
  Eigen::FullPivLU<Mat4> lu(m);
  if (!lu.isInvertible() || std::abs(lu.determinant()) <= tol.frame_det) {
    throw FrameRankDeficient("from_chart: frame determinant " +
                             std::to_string(lu.determinant()));
  }
  Vec4 h(st.rho * std::cos(st.theta), st.rho * std::sin(st.theta),
         st.r * std::cos(st.phi), st.r * std::sin(st.phi));
  return {st.x, lu.solve(h)};
}

SigmaClass classify(const LiftValues& lv, double tau_sigma, double tau_rho_rel) {
  const double r = lv.r();
  if (lv.rho() > tau_rho_rel * r) return SigmaClass::NotOnSigma;
  const double gap = lv.H12 * lv.H12 - r * r;
  if (std::abs(gap) <= tau_sigma * r * r) return SigmaClass::SigmaZero;
  return gap < 0 ? SigmaClass::SigmaMinus : SigmaClass::SigmaPlus;
}

namespace {

// Physical-time rates of the chart coordinates with the control u = (cos th, sin th).
// The rho and theta rates use the polar identities; no difference of large lifts and
// no division by rho appears except in dtheta itself.
struct RawRates {
  Vec4 dx;
  double drho_t;        // r cos(theta - phi)
  double dtheta_num;    // H12 - r sin(theta - phi); dtheta = dtheta_num / rho
  double dr_t, dphi_t;  // dphi = dphi_num / r built in
};

RawRates physical_rates(const AffineSystem& sys, const SingularChartState& st,
                        const CotangentPoint& z) {
  const double c1 = std::cos(st.theta), s1 = std::sin(st.theta);
  const double c2 = std::cos(st.phi), s2 = std::sin(st.phi);
  RawRates out;
  out.dx = sys.F0.eval(z.x) + c1 * sys.F1.eval(z.x) + s1 * sys.F2.eval(z.x);

  const double h12 = lift(sys.F12, z);
  out.drho_t = st.r * std::cos(st.theta - st.phi);
  out.dtheta_num = h12 - st.r * std::sin(st.theta - st.phi);

  auto controlled = [&](const std::array<FieldData, 3>& d) {
    return lift(d[0], z) + c1 * lift(d[1], z) + s1 * lift(d[2], z);
  };
  const double dh01 = controlled(sys.dF01);
  const double dh02 = controlled(sys.dF02);
  out.dr_t = c2 * dh01 + s2 * dh02;
  out.dphi_t = (c2 * dh02 - s2 * dh01) / st.r;
  return out;
}

}  // namespace

ChartRates chart_flow_rates(const AffineSystem& sys, const SingularChartState& st,
                            TimeFrame frame, const Tol& tol) {
  CotangentPoint z = from_chart(sys, st, tol);
  RawRates raw = physical_rates(sys, st, z);

  ChartRates out;
  switch (frame) {
    case TimeFrame::Physical: {
      out.dx = raw.dx;
      out.drho = raw.drho_t;
      out.dtheta = raw.dtheta_num / st.rho;
      out.dr = raw.dr_t;
      out.dphi = raw.dphi_t;
      out.dt_phys = 1.0;
      break;
    }
    case TimeFrame::T1: {
      out.dx = raw.dx / st.r;
      out.drho = raw.drho_t / st.r;
      out.dtheta = raw.dtheta_num / (st.rho * st.r);
      out.dr = raw.dr_t / st.r;
      out.dphi = raw.dphi_t / st.r;
      out.dt_phys = 1.0 / st.r;
      break;
    }
    case TimeFrame::T2: {
      // multiply the physical rates by rho/r; the 1/rho in dtheta cancels exactly
      const double f = st.rho / st.r;
      out.dx = f * raw.dx;
      out.drho = f * raw.drho_t;
      out.dtheta = raw.dtheta_num / st.r;
      out.dr = f * raw.dr_t;
      out.dphi = f * raw.dphi_t;
      out.dt_phys = f;
      break;
    }
    case TimeFrame::T3: {
      if (!(st.rho > 0)) {
        throw NotInNeighborhood("chart_flow_rates: T3 frame requires rho > 0");
      }
      const double R = std::cbrt(st.rho);
      const double f = st.rho / (st.r * R);
      out.dx = f * raw.dx;
      out.drho = f * raw.drho_t;
      out.dtheta = raw.dtheta_num / (st.r * R);
      out.dr = f * raw.dr_t;
      out.dphi = f * raw.dphi_t;
      out.dt_phys = f;
      break;
    }
  }
  return out;
}

double a_of_xi(const AffineSystem& sys, const XiPoint& xi, const Tol& tol) {
  SingularChartState st;
  st.x = xi.x;
  st.rho = 0.0;
  st.theta = 0.0;
  st.r = xi.r;
  st.phi = xi.phi;
  CotangentPoint z = from_chart(sys, st, tol);
  return lift(sys.F12, z) / xi.r;
}

XiRates xi_velocity_on_sigma(const AffineSystem& sys, const XiPoint& xi, double s,
                             const Tol& tol) {
  SingularChartState st;
  st.x = xi.x;
  st.rho = 0.0;
  st.theta = xi.phi + M_PI / 2 + s;
  st.r = xi.r;
  st.phi = xi.phi;
  CotangentPoint z = from_chart(sys, st, tol);
  RawRates raw = physical_rates(sys, st, z);
  return {raw.dx / xi.r, raw.dr_t / xi.r, raw.dphi_t / xi.r};
}

NormalFormParams normal_form_params(const AffineSystem& sys, const CotangentPoint& zbar,
                                    bool require_generic, const Tol& tol) {
  LiftValues lv = lift_values(sys, zbar);
  const double r = lv.r();
  if (r <= tol.rho || lv.rho() > 1e-8 * r) {
    throw NotInNeighborhood("normal_form_params: base point is not on the switching locus");
  }
  XiPoint xi{zbar.x, r, std::atan2(lv.H02, lv.H01)};
  XiRates vel = xi_velocity_on_sigma(sys, xi, 0.0, tol);

  auto a_along = [&](double h) {
    XiPoint w{xi.x + h * vel.dx, xi.r + h * vel.dr, xi.phi + h * vel.dphi};
    return a_of_xi(sys, w, tol);
  };
  auto slope = [&](double h) { return (a_along(h) - a_along(-h)) / (2.0 * h); };
  const double h = 1e-5;
  const double d1 = slope(h), d2 = slope(h / 2);
  const double c = (4.0 * d2 - d1) / 3.0;

  NormalFormParams out{lv.H12 / r, lv.H12 / r - 1.0, c};
  if (require_generic && std::abs(out.c) <= tol.genericity) {
    throw GenericityViolated("normal_form_params: |c| = " + std::to_string(out.c));
  }
  return out;
}

RescaledRates rescaled_field(const AffineSystem& sys, const SingularChartState& st,
                             const Tol& tol) {
  ChartRates t1 = chart_flow_rates(sys, st, TimeFrame::T1, tol);
  return {t1.drho, t1.dtheta - t1.dphi, t1.dx, t1.dr, t1.dphi};
}

Vec3 model_field(const Vec3& state, double c, const ModelPerturbation& pert) {
  const double rho = state[0], s = state[1], zeta = state[2];
  Vec3 out(-rho * s, zeta + 0.5 * s * s, c * rho);
  if (pert) out += pert(state);
  return out;
}

}  // namespace sigmaflow
