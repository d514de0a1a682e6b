#include "sigmaflow/pmp.hpp"

namespace sigmaflow {

double lift(const FieldData& fd, const CotangentPoint& z) { return z.p.dot(fd.eval(z.x)); }

Vec4 lift_grad_x(const FieldData& fd, const CotangentPoint& z) {
  return fd.eval_jac(z.x).transpose() * z.p;
}

LiftValues lift_values(const AffineSystem& sys, const CotangentPoint& z) {
  LiftValues lv;
  lv.H0 = lift(sys.F0, z);
  lv.H1 = lift(sys.F1, z);
  lv.H2 = lift(sys.F2, z);
  lv.H01 = lift(sys.F01, z);
  lv.H02 = lift(sys.F02, z);
  lv.H12 = lift(sys.F12, z);
  return lv;
}

Vec2 bang_feedback(const LiftValues& lv, double tau_rho) {
  const double rho = lv.rho();
  if (rho <= tau_rho) {
    throw OnSwitchingLocus("bang feedback undefined: |(H1,H2)| = " + std::to_string(rho));
  }
  return Vec2(lv.H1 / rho, lv.H2 / rho);
}

SingularControl singular_feedback(const LiftValues& lv, double tau) {
  if (std::abs(lv.H12) <= tau) {
    throw SingularControlUndefined("singular feedback undefined: |H12| = " +
                                   std::to_string(std::abs(lv.H12)));
  }
  Vec2 u(-lv.H02 / lv.H12, lv.H01 / lv.H12);
  return {u, u.norm() <= 1.0 + 1e-12};
}

CoTangent fixed_control_field(const AffineSystem& sys, const CotangentPoint& z,
                              const Vec2& u) {
  CoTangent t;
  t.dx = sys.F0.eval(z.x) + u[0] * sys.F1.eval(z.x) + u[1] * sys.F2.eval(z.x);
  t.dp = -(lift_grad_x(sys.F0, z) + u[0] * lift_grad_x(sys.F1, z) +
           u[1] * lift_grad_x(sys.F2, z));
  return t;
}

double hmax(const AffineSystem& sys, const CotangentPoint& z) {
  LiftValues lv = lift_values(sys, z);
  return lv.H0 + lv.rho();
}

CoTangent hmax_flow_field(const AffineSystem& sys, const CotangentPoint& z,
                          double tau_rho) {
  LiftValues lv = lift_values(sys, z);
  Vec2 u = bang_feedback(lv, tau_rho);
  // d(rho)/dz = sum_i u_i dH_i/dz exactly, so the symplectic gradient of
  // H0 + rho is the fixed-control field evaluated at the feedback.
  return fixed_control_field(sys, z, u);
}

double singular_hamiltonian(const AffineSystem& sys, const CotangentPoint& z, double tau) {
  LiftValues lv = lift_values(sys, z);
  if (std::abs(lv.H12) <= tau) {
    throw SingularControlUndefined("singular Hamiltonian undefined: |H12| small");
  }
  return lv.H0 - (lv.H02 / lv.H12) * lv.H1 + (lv.H01 / lv.H12) * lv.H2;
}

CoTangent singular_flow_field(const AffineSystem& sys, const CotangentPoint& z,
                              double tau) {
  LiftValues lv = lift_values(sys, z);
  SingularControl sc = singular_feedback(lv, tau);
  const double q1 = sc.u[0];  // -H02/H12
  const double q2 = sc.u[1];  //  H01/H12
  const double h12sq = lv.H12 * lv.H12;

  // gradients of the lifts in x and p
  Vec4 gx_H0 = lift_grad_x(sys.F0, z), gp_H0 = sys.F0.eval(z.x);
  Vec4 gx_H1 = lift_grad_x(sys.F1, z), gp_H1 = sys.F1.eval(z.x);
  Vec4 gx_H2 = lift_grad_x(sys.F2, z), gp_H2 = sys.F2.eval(z.x);
  Vec4 gx_H01 = lift_grad_x(sys.F01, z), gp_H01 = sys.F01.eval(z.x);
  Vec4 gx_H02 = lift_grad_x(sys.F02, z), gp_H02 = sys.F02.eval(z.x);
  Vec4 gx_H12 = lift_grad_x(sys.F12, z), gp_H12 = sys.F12.eval(z.x);

  // q1 = -H02/H12, q2 = H01/H12, quotient rule
  Vec4 gx_q1 = -(gx_H02 * lv.H12 - lv.H02 * gx_H12) / h12sq;
  Vec4 gp_q1 = -(gp_H02 * lv.H12 - lv.H02 * gp_H12) / h12sq;
  Vec4 gx_q2 = (gx_H01 * lv.H12 - lv.H01 * gx_H12) / h12sq;
  Vec4 gp_q2 = (gp_H01 * lv.H12 - lv.H01 * gp_H12) / h12sq;

  // Htilde = H0 + q1 H1 + q2 H2
  Vec4 gx = gx_H0 + q1 * gx_H1 + q2 * gx_H2 + lv.H1 * gx_q1 + lv.H2 * gx_q2;
  Vec4 gp = gp_H0 + q1 * gp_H1 + q2 * gp_H2 + lv.H1 * gp_q1 + lv.H2 * gp_q2;

  return {gp, -gx};
}

SingleInputSystem SingleInputSystem::make(const PolyVectorField& f0,
                                          const PolyVectorField& f1) {
  SingleInputSystem s;
  s.F0 = make_field_data(f0);
  s.F1 = make_field_data(f1);
  PolyVectorField b01 = lie_bracket(f0, f1);
  s.F01 = make_field_data(b01);
  s.F001 = make_field_data(lie_bracket(f0, b01));
  s.F101 = make_field_data(lie_bracket(f1, b01));
  return s;
}

double single_input_singular_control(const SingleInputSystem& sys, const CotangentPoint& z,
                                     double tau) {
  double h001 = lift(sys.F001, z);
  double h101 = lift(sys.F101, z);
  if (std::abs(h101) <= tau) {
    throw SingularControlUndefined("single-input singular control undefined: |H101| small");
  }
  return -h001 / h101;
}

CoTangent single_input_singular_field(const SingleInputSystem& sys, const CotangentPoint& z,
                                      double tau) {
  double h001 = lift(sys.F001, z);
  double h101 = lift(sys.F101, z);
  if (std::abs(h101) <= tau) {
    throw SingularControlUndefined("single-input singular field undefined: |H101| small");
  }
  double h1 = lift(sys.F1, z);
  const double q = -h001 / h101;

  Vec4 gx_H0 = lift_grad_x(sys.F0, z), gp_H0 = sys.F0.eval(z.x);
  Vec4 gx_H1 = lift_grad_x(sys.F1, z), gp_H1 = sys.F1.eval(z.x);
  Vec4 gx_a = lift_grad_x(sys.F001, z), gp_a = sys.F001.eval(z.x);
  Vec4 gx_b = lift_grad_x(sys.F101, z), gp_b = sys.F101.eval(z.x);

  Vec4 gx_q = -(gx_a * h101 - h001 * gx_b) / (h101 * h101);
  Vec4 gp_q = -(gp_a * h101 - h001 * gp_b) / (h101 * h101);

  Vec4 gx = gx_H0 + q * gx_H1 + h1 * gx_q;
  Vec4 gp = gp_H0 + q * gp_H1 + h1 * gp_q;
  return {gp, -gx};
}

}  // namespace sigmaflow
