#pragma once

#include "sigmaflow/common.hpp"
#include "sigmaflow/errors.hpp"
#include "sigmaflow/polyfield.hpp"

namespace sigmaflow {

// Point of the cotangent bundle T*R^4.
struct CotangentPoint {
  Vec4 x;
  Vec4 p;
};

// Values of the Hamiltonian lifts H_i = <p, F_i(x)> and H_ij = <p, [F_i,F_j](x)>.
struct LiftValues {
  double H0, H1, H2, H01, H02, H12;
  double rho() const { return std::hypot(H1, H2); }
  double r() const { return std::hypot(H01, H02); }
};

LiftValues lift_values(const AffineSystem& sys, const CotangentPoint& z);

// <p, f(x)> and its exact gradients: d/dx = p^T Jf(x), d/dp = f(x).
double lift(const FieldData& fd, const CotangentPoint& z);
Vec4 lift_grad_x(const FieldData& fd, const CotangentPoint& z);

// Tangent vector on T*M.
struct CoTangent {
  Vec4 dx;
  Vec4 dp;
};

// u = (H1,H2)/|(H1,H2)|. Throws OnSwitchingLocus when |(H1,H2)| <= tau_rho.
Vec2 bang_feedback(const LiftValues& lv, double tau_rho = default_tol().rho);

struct SingularControl {
  Vec2 u;
  bool admissible;  // |u| <= 1
};

// u_s = (-H02, H01)/H12. Throws SingularControlUndefined when |H12| <= tau.
SingularControl singular_feedback(const LiftValues& lv, double tau = default_tol().rho);

// Extremal field with the control frozen at u: the symplectic gradient of
// H0 + u1 H1 + u2 H2 for constant u.
CoTangent fixed_control_field(const AffineSystem& sys, const CotangentPoint& z,
                              const Vec2& u);

double hmax(const AffineSystem& sys, const CotangentPoint& z);

// Symplectic gradient of H0 + |(H1,H2)|; equals the fixed-control field at the
// bang feedback because the feedback maximizes the Hamiltonian.
CoTangent hmax_flow_field(const AffineSystem& sys, const CotangentPoint& z,
                          double tau_rho = default_tol().rho);

double singular_hamiltonian(const AffineSystem& sys, const CotangentPoint& z,
                            double tau = default_tol().rho);

// Exact symplectic gradient of H0 - (H02/H12) H1 + (H01/H12) H2, quotient rule
// included. On {H1 = H2 = 0} the x-component reduces to F0 + u_s1 F1 + u_s2 F2.
CoTangent singular_flow_field(const AffineSystem& sys, const CotangentPoint& z,
                              double tau = default_tol().rho);

// Single-input variant: xdot = F0 + u F1, scalar u.
struct SingleInputSystem {
  FieldData F0, F1;
  FieldData F01;   // [F0,F1]
  FieldData F001;  // [F0,[F0,F1]]
  FieldData F101;  // [F1,[F0,F1]]

  static SingleInputSystem make(const PolyVectorField& f0, const PolyVectorField& f1);
};

// u = -H001/H101, the value balancing d/dt H01 = H001 + u H101 = 0 along the flow.
double single_input_singular_control(const SingleInputSystem& sys,
                                     const CotangentPoint& z,
                                     double tau = default_tol().rho);

// Symplectic gradient of H0 - (H001/H101) H1, exact quotient rule.
CoTangent single_input_singular_field(const SingleInputSystem& sys,
                                      const CotangentPoint& z,
                                      double tau = default_tol().rho);

}  // namespace sigmaflow
