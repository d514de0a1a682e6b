#include "sigmaflow/blowup.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace sigmaflow {

namespace {

std::array<std::complex<double>, 3> sorted_eigs(const Mat3& j) {
  Eigen::EigenSolver<Mat3> es(j);
  std::array<std::complex<double>, 3> out{es.eigenvalues()[0], es.eigenvalues()[1],
                                          es.eigenvalues()[2]};
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return out;
}

EquilibriumReport make_report(EquilibriumReport::Chart chart, const Vec3& loc,
                              const Mat3& j) {
  EquilibriumReport rep;
  rep.chart = chart;
  rep.location = loc;
  rep.jacobian = j;
  rep.eigenvalues = sorted_eigs(j);
  double scale = 0;
  for (const auto& ev : rep.eigenvalues) scale = std::max(scale, std::abs(ev));
  const double band = 1e-12 * std::max(1.0, scale);
  for (const auto& ev : rep.eigenvalues) {
    if (ev.real() < -band) ++rep.stable_dim;
    if (ev.real() > band) ++rep.unstable_dim;
  }
  return rep;
}

}  // namespace

Vec3 dir_chart_field(const DirChartState& st, double c) {
  return Vec3(-st.R * st.sbar / 3.0, (5.0 / 6.0) * st.sbar * st.sbar + st.zetabar,
              (2.0 / 3.0) * st.sbar * st.zetabar + c);
}

EquilibriumReport interior_equilibrium(double c) {
  if (c == 0.0) {
    throw DegenerateParameter("interior_equilibrium: c = 0 has no isolated equilibrium");
  }
  const double s0 = std::copysign(std::cbrt(9.0 * std::abs(c) / 5.0), c);
  // the sbar equation forces zetabar = -(5/6) sbar^2 regardless of the sign of c
  const double z0 = -(5.0 / 6.0) * s0 * s0;
  Mat3 j;
  j << -s0 / 3.0, 0, 0,
       0, (5.0 / 3.0) * s0, 1,
       0, (2.0 / 3.0) * z0, (2.0 / 3.0) * s0;
  return make_report(EquilibriumReport::Chart::Dir, Vec3(0.0, s0, z0), j);
}

namespace {

// shared pieces of the polar-chart right-hand side
struct PolarTerms {
  double sw, cw;
  double A, B;
};

PolarTerms polar_terms(const PolarChartState& st, double c) {
  PolarTerms t;
  t.sw = std::sin(st.omega);
  t.cw = std::cos(st.omega);
  t.A = t.sw * (t.cw + 0.5 * t.sw * t.sw) + c * st.rhobar * t.cw;
  t.B = t.cw * (2.0 * t.cw + t.sw * t.sw) - c * st.rhobar * t.sw;
  return t;
}

}  // namespace

Vec3 polar_chart_field(const PolarChartState& st, double c) {
  PolarTerms t = polar_terms(st, c);
  const double C =
      t.sw * (1.0 + t.cw * t.cw + t.cw + 0.5 * t.sw * t.sw) + c * st.rhobar * t.cw;
  return Vec3(st.R * t.A, t.B, -st.rhobar * C);
}

Vec3 polar_chart_true_field(const PolarChartState& st, double c) {
  PolarTerms t = polar_terms(st, c);
  const double C = t.sw * (1.0 + t.cw * t.cw) + 3.0 * t.A;
  return Vec3(st.R * t.A, t.B, -st.rhobar * C);
}

std::vector<EquilibriumReport> boundary_equilibria(double c) {
  const double w0 = std::acos(1.0 - std::sqrt(2.0));
  std::vector<EquilibriumReport> out;
  for (double w : {M_PI / 2, -M_PI / 2, w0, -w0}) {
    const double sw = std::sin(w), cw = std::cos(w);
    const double A = sw * (cw + 0.5 * sw * sw);
    const double C = sw * (1.0 + cw * cw + cw + 0.5 * sw * sw);
    // d(omega')/d(omega) at rhobar = 0
    const double Bw = -sw * (2.0 * cw + sw * sw) + cw * (2.0 * sw * (cw - 1.0));
    Mat3 j;
    j << A, 0, 0,
         0, Bw, -c * sw,
         0, 0, -C;
    out.push_back(make_report(EquilibriumReport::Chart::Polar, Vec3(0.0, w, 0.0), j));
  }
  return out;
}

Vec3 blow_down(const DirChartState& st) {
  return Vec3(st.R * st.R * st.R, st.R * st.sbar, st.R * st.R * st.zetabar);
}

Vec3 blow_down(const PolarChartState& st) {
  const double R2 = st.R * st.R;
  return Vec3(R2 * st.R * st.rhobar, st.R * std::sin(st.omega), R2 * std::cos(st.omega));
}

DirChartState blow_up_dir(const Vec3& rsz) {
  if (!(rsz[0] > 0)) {
    throw NotInNeighborhood("blow_up_dir: requires rho > 0");
  }
  DirChartState st;
  st.R = std::cbrt(rsz[0]);
  st.sbar = rsz[1] / st.R;
  st.zetabar = rsz[2] / (st.R * st.R);
  return st;
}

PolarChartState blow_up_polar(const Vec3& rsz) {
  const double s = rsz[1], zeta = rsz[2];
  if (s == 0.0 && zeta == 0.0) {
    throw NotInNeighborhood("blow_up_polar: requires (s, zeta) != 0");
  }
  // R^4 = s^2 R^2 + zeta^2, the positive root
  const double R2 = 0.5 * (s * s + std::hypot(s * s, 2.0 * zeta));
  PolarChartState st;
  st.R = std::sqrt(R2);
  st.omega = std::atan2(s / st.R, zeta / R2);
  st.rhobar = rsz[0] / (R2 * st.R);
  return st;
}

}  // namespace sigmaflow
