#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace sigmaflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Default thresholds. All of them are configurable at the call sites that use them.
struct Tol {
  double frame_det = 1e-9;   // |det(F1,F2,F01,F02)| floor for the rank condition
  double rho = 1e-10;        // switching-locus threshold on |(H1,H2)|
  double adjoint = 1e-12;    // floor on |p| for extremal initial conditions
  double sigma_band = 1e-8;  // relative equality band for H12^2 vs H01^2+H02^2
  double genericity = 1e-6;  // floor on |c| when the contact analysis is requested
};

inline const Tol& default_tol() {
  static const Tol t{};
  return t;
}

// Wrap to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

}  // namespace sigmaflow
