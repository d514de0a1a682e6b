#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "sigmaflow/blowup.hpp"
#include "sigmaflow/chart.hpp"
#include "sigmaflow/ode.hpp"
#include "test_util.hpp"

using namespace sigmaflow;
using namespace sigmaflow::testutil;

namespace {

// Exact chain-rule pushforward of the t2-time local model into the directional
// chart, already rescaled to t3 time.
Vec3 push_dir(const Vec3& st, double c, const ModelPerturbation& pert) {
  const double R = st[0];
  Vec3 rsz(R * R * R, R * st[1], R * R * st[2]);
  Vec3 m = model_field(rsz, c, pert);
  const double dR = m[0] / (3.0 * R * R);
  const double dsb = m[1] / R - rsz[1] * dR / (R * R);
  const double dzb = m[2] / (R * R) - 2.0 * rsz[2] * dR / (R * R * R);
  return Vec3(dR, dsb, dzb) / R;
}

// Same for the polar chart; returns t3-time rates of (R, omega, rhobar).
Vec3 push_polar(const PolarChartState& st, double c) {
  Vec3 rsz = blow_down(st);
  Vec3 m = model_field(rsz, c, nullptr);
  const double R = st.R, s = rsz[1], zeta = rsz[2];
  const double dR = (s * m[1] * R + zeta * m[2] / R) / (2.0 * R * R - s * s);
  const double u = zeta / (R * R), v = s / R;  // (cos w, sin w)
  const double dv = m[1] / R - s * dR / (R * R);
  const double du = m[2] / (R * R) - 2.0 * zeta * dR / (R * R * R);
  const double dw = dv * u - du * v;
  const double drb = m[0] / (R * R * R) - 3.0 * rsz[0] * dR / (R * R * R * R);
  return Vec3(dR, dw, drb) / R;
}

double char_poly_residual(const Mat3& j, const std::complex<double>& lambda) {
  Eigen::Matrix3cd m = j.cast<std::complex<double>>();
  for (int i = 0; i < 3; ++i) m(i, i) -= lambda;
  return std::abs(m.determinant());
}

const ModelPerturbation kTestPert = [](const Vec3& u) {
  return Vec3(0.3 * u[0] * u[1] * u[1], -0.2 * u[0], 0.15 * u[0] * u[1]);
};

}  // namespace

TEST_CASE("directional chart field values") {
  DirChartState st;
  st.sbar = 1.0;
  Vec3 f = dir_chart_field(st, 0.0);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(f[2] == 0.0);

  // {R = 0} is invariant
  auto rng = make_rng();
  for (int k = 0; k < 10; ++k) {
    DirChartState w;
    w.R = 0.0;
    w.sbar = uniform(rng, -2, 2);
    w.zetabar = uniform(rng, -2, 2);
    CHECK(dir_chart_field(w, uniform(rng, -2, 2))[0] == 0.0);
  }
}

TEST_CASE("interior equilibrium closed form and residual") {
  for (double c : {0.25, 1.0, 4.0, -1.0, -0.3}) {
    EquilibriumReport rep = interior_equilibrium(c);
    const double s0 = std::copysign(std::cbrt(9.0 * std::abs(c) / 5.0), c);
    CHECK(rep.location[0] == 0.0);
    CHECK(rep.location[1] == doctest::Approx(s0).epsilon(1e-12));
    CHECK(rep.location[2] == doctest::Approx(-(5.0 / 6.0) * s0 * s0).epsilon(1e-12));
    CHECK(rep.location[2] < 0.0);  // below the axis for either sign of c

    DirChartState st;
    st.R = rep.location[0];
    st.sbar = rep.location[1];
    st.zetabar = rep.location[2];
    CHECK(dir_chart_field(st, c).norm() <= 1e-12);
  }
  CHECK_THROWS_AS(interior_equilibrium(0.0), DegenerateParameter);

  EquilibriumReport one = interior_equilibrium(1.0);
  CHECK(one.location[1] == doctest::Approx(1.21644039911468).epsilon(1e-13));
  CHECK(one.location[2] == doctest::Approx(-1.233106037165235).epsilon(1e-13));
}

TEST_CASE("interior equilibrium agrees with root finding from random starts") {
  const double c = 1.7;
  EquilibriumReport rep = interior_equilibrium(c);
  auto rng = make_rng();
  int converged = 0;
  for (int k = 0; k < 20; ++k) {
    double sb = uniform(rng, -3, 3), zb = uniform(rng, -3, 3);
    bool ok = false;
    for (int it = 0; it < 60; ++it) {
      Eigen::Vector2d g((5.0 / 6.0) * sb * sb + zb, (2.0 / 3.0) * sb * zb + c);
      if (g.norm() <= 1e-13) {
        ok = true;
        break;
      }
      Eigen::Matrix2d j;
      j << (5.0 / 3.0) * sb, 1.0, (2.0 / 3.0) * zb, (2.0 / 3.0) * sb;
      if (std::abs(j.determinant()) < 1e-12) break;
      Eigen::Vector2d step = j.partialPivLu().solve(g);
      sb -= step[0];
      zb -= step[1];
      if (!std::isfinite(sb) || !std::isfinite(zb)) break;
    }
    if (!ok) continue;
    ++converged;
    CHECK(std::abs(sb - rep.location[1]) <= 1e-10);
    CHECK(std::abs(zb - rep.location[2]) <= 1e-10);
  }
  CHECK(converged >= 10);
}

TEST_CASE("interior spectrum matches the closed form across c") {
  for (int k = 0; k < 20; ++k) {
    const double c = 0.1 * std::pow(100.0, k / 19.0);  // log-spaced in [0.1, 10]
    EquilibriumReport rep = interior_equilibrium(c);
    const double s0 = rep.location[1];
    // sorted by real part: the real eigenvalue -s0/3 comes first for c > 0
    CHECK(std::abs(rep.eigenvalues[0] - std::complex<double>(-s0 / 3.0, 0)) <= 1e-9);
    const std::complex<double> pair(7.0 / 6.0 * s0, std::sqrt(11.0) / 6.0 * s0);
    CHECK(std::abs(rep.eigenvalues[1] - std::conj(pair)) <= 1e-9);
    CHECK(std::abs(rep.eigenvalues[2] - pair) <= 1e-9);
    CHECK(rep.stable_dim == 1);
    CHECK(rep.unstable_dim == 2);
    for (const auto& ev : rep.eigenvalues) {
      CHECK(char_poly_residual(rep.jacobian, ev) <= 1e-10 * (1.0 + std::norm(ev)));
    }
  }
  EquilibriumReport neg = interior_equilibrium(-2.0);
  CHECK(neg.stable_dim == 2);
  CHECK(neg.unstable_dim == 1);

  // c=1 numeric values
  EquilibriumReport one = interior_equilibrium(1.0);
  CHECK(std::abs(one.eigenvalues[0].real() + 0.40548013303822666) <= 1e-12);
  CHECK(std::abs(one.eigenvalues[2].real() - 1.4191804656337934) <= 1e-11);
  CHECK(std::abs(one.eigenvalues[2].imag() - 0.672412730615594) <= 1e-11);
}

TEST_CASE("sign flip of c mirrors the directional field") {
  auto rng = make_rng();
  for (int k = 0; k < 20; ++k) {
    DirChartState st;
    st.R = uniform(rng, 0, 1);
    st.sbar = uniform(rng, -2, 2);
    st.zetabar = uniform(rng, -2, 2);
    const double c = uniform(rng, -3, 3);
    DirChartState mirrored = st;
    mirrored.sbar = -st.sbar;
    Vec3 f = dir_chart_field(st, c);
    Vec3 g = dir_chart_field(mirrored, -c);
    CHECK(std::abs(g[0] + f[0]) <= 1e-15);
    CHECK(std::abs(g[1] - f[1]) <= 1e-15);
    CHECK(std::abs(g[2] + f[2]) <= 1e-15);
  }
  // hence m0(-c) is the mirror image of m0(c)
  EquilibriumReport plus = interior_equilibrium(0.8);
  EquilibriumReport minus = interior_equilibrium(-0.8);
  CHECK(minus.location[1] == doctest::Approx(-plus.location[1]).epsilon(1e-14));
  CHECK(minus.location[2] == doctest::Approx(plus.location[2]).epsilon(1e-14));
}

TEST_CASE("polar chart field at the axis points") {
  auto at = [](double w, double rhobar = 0.0, double R = 0.0) {
    PolarChartState st;
    st.R = R;
    st.omega = w;
    st.rhobar = rhobar;
    return st;
  };
  const double w0 = std::acos(1.0 - std::sqrt(2.0));
  CHECK(std::abs(polar_chart_field(at(M_PI / 2), 1.3)[1]) <= 1e-14);
  CHECK(std::abs(polar_chart_field(at(w0), 1.3)[1]) <= 1e-14);
  CHECK(polar_chart_field(at(0.0), 1.3)[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(w0 == doctest::Approx(1.9978749131873728).epsilon(1e-12));

  // invariant planes {R = 0} and {rhobar = 0}
  auto rng = make_rng();
  for (int k = 0; k < 10; ++k) {
    double w = uniform(rng, -M_PI, M_PI), c = uniform(rng, -2, 2);
    CHECK(polar_chart_field(at(w, uniform(rng, 0, 1), 0.0), c)[0] == 0.0);
    CHECK(polar_chart_field(at(w, 0.0, uniform(rng, 0, 1)), c)[2] == 0.0);
    CHECK(polar_chart_true_field(at(w, 0.0, uniform(rng, 0, 1)), c)[2] == 0.0);
  }
}

TEST_CASE("boundary equilibria spectra and sign pattern") {
  const double c = 1.0;
  auto reports = boundary_equilibria(c);
  REQUIRE(reports.size() == 4);

  for (const auto& rep : reports) {
    PolarChartState st;
    st.R = rep.location[0];
    st.omega = rep.location[1];
    st.rhobar = rep.location[2];
    CHECK(polar_chart_field(st, c).norm() <= 1e-12);
    for (const auto& ev : rep.eigenvalues) {
      CHECK(char_poly_residual(rep.jacobian, ev) <= 1e-10 * (1.0 + std::norm(ev)));
    }
  }

  // omega = pi/2: eigenvalues {1/2, -1, -3/2} (hyperbolic saddle)
  CHECK(std::abs(reports[0].eigenvalues[0] - std::complex<double>(-1.5, 0)) <= 1e-12);
  CHECK(std::abs(reports[0].eigenvalues[1] - std::complex<double>(-1.0, 0)) <= 1e-12);
  CHECK(std::abs(reports[0].eigenvalues[2] - std::complex<double>(0.5, 0)) <= 1e-12);
  // omega = -pi/2: the mirror {-1/2, 1, 3/2}
  CHECK(std::abs(reports[1].eigenvalues[0] - std::complex<double>(-0.5, 0)) <= 1e-12);
  CHECK(std::abs(reports[1].eigenvalues[1] - std::complex<double>(1.0, 0)) <= 1e-12);
  CHECK(std::abs(reports[1].eigenvalues[2] - std::complex<double>(1.5, 0)) <= 1e-12);
  for (int i : {0, 1}) {
    for (const auto& ev : reports[i].eigenvalues) CHECK(std::abs(ev.real()) >= 0.4);
  }

  // omega = +-w0: radial eigenvalue degenerates to zero exactly,
  // the other two are a +-lambda pair
  const double lam = 1.066341872875488;
  for (int i : {2, 3}) {
    double min_abs = 1e30;
    for (const auto& ev : reports[i].eigenvalues) {
      min_abs = std::min(min_abs, std::abs(ev));
    }
    CHECK(min_abs <= 1e-14);
  }
  // rhobar eigenvalue (third diagonal entry of the stored Jacobian): attracting at
  // +w0, repelling at -w0
  CHECK(reports[2].jacobian(2, 2) == doctest::Approx(-lam).epsilon(1e-12));
  CHECK(reports[3].jacobian(2, 2) == doctest::Approx(lam).epsilon(1e-12));
  CHECK(reports[2].jacobian(1, 1) == doctest::Approx(lam).epsilon(1e-12));
  CHECK(reports[3].jacobian(1, 1) == doctest::Approx(-lam).epsilon(1e-12));
}

TEST_CASE("blow down and blow up round trip") {
  DirChartState st;
  st.R = 0.1;
  st.sbar = 1.0;
  st.zetabar = -1.0;
  Vec3 rsz = blow_down(st);
  CHECK(rsz[0] == doctest::Approx(1e-3).epsilon(1e-14));
  CHECK(rsz[1] == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(rsz[2] == doctest::Approx(-0.01).epsilon(1e-14));

  DirChartState zero;
  CHECK(blow_down(zero).norm() == 0.0);

  auto rng = make_rng();
  for (int k = 0; k < 100; ++k) {
    DirChartState a;
    a.R = uniform(rng, 0.01, 1.0);
    a.sbar = uniform(rng, -2, 2);
    a.zetabar = uniform(rng, -2, 2);
    DirChartState b = blow_up_dir(blow_down(a));
    CHECK(b.R == doctest::Approx(a.R).epsilon(1e-12));
    CHECK(b.sbar == doctest::Approx(a.sbar).epsilon(1e-11));
    CHECK(b.zetabar == doctest::Approx(a.zetabar).epsilon(1e-11));

    PolarChartState p;
    p.R = uniform(rng, 0.01, 1.0);
    p.omega = uniform(rng, -M_PI, M_PI);
    p.rhobar = uniform(rng, 0.01, 1.0);
    PolarChartState q = blow_up_polar(blow_down(p));
    CHECK(q.R == doctest::Approx(p.R).epsilon(1e-11));
    CHECK(std::abs(wrap_angle(q.omega - p.omega)) <= 1e-11);
    CHECK(q.rhobar == doctest::Approx(p.rhobar).epsilon(1e-10));

    // overlap identity between the two charts at interior points
    Vec3 point = blow_down(p);
    if (point[0] <= 0) continue;
    DirChartState d = blow_up_dir(point);
    CHECK(std::abs(d.sbar - std::sin(q.omega) / std::cbrt(q.rhobar)) <=
          1e-10 * (1.0 + std::abs(d.sbar)));
    CHECK(std::abs(d.zetabar - std::cos(q.omega) / std::pow(q.rhobar, 2.0 / 3.0)) <=
          1e-10 * (1.0 + std::abs(d.zetabar)));
  }
  CHECK_THROWS_AS(blow_up_dir(Vec3(0, 1, 1)), NotInNeighborhood);
  CHECK_THROWS_AS(blow_up_polar(Vec3(0.5, 0, 0)), NotInNeighborhood);
}

TEST_CASE("directional field is the exact pushforward of the truncated model") {
  // with no perturbation the chain rule reproduces the truncation identically
  auto rng = make_rng();
  for (int k = 0; k < 30; ++k) {
    DirChartState st;
    st.R = uniform(rng, 1e-3, 0.5);
    st.sbar = uniform(rng, -2, 2);
    st.zetabar = uniform(rng, -2, 2);
    const double c = uniform(rng, -2, 2);
    Vec3 gap = push_dir(Vec3(st.R, st.sbar, st.zetabar), c, nullptr) -
               dir_chart_field(st, c);
    CHECK(gap.norm() <= 1e-12 * (1.0 + dir_chart_field(st, c).norm()));
  }

  // higher-order terms create an O(R) mismatch: slope 1 on a log-log fit
  const double c = 1.0;
  auto gap_at = [&](double R) {
    DirChartState st;
    st.R = R;
    st.sbar = 0.7;
    st.zetabar = -0.4;
    return (push_dir(Vec3(R, 0.7, -0.4), c, kTestPert) - dir_chart_field(st, c)).norm();
  };
  const double g2 = gap_at(1e-2), g3 = gap_at(1e-3);
  const double slope = std::log10(g2 / g3);
  CHECK(slope > 0.9);
  CHECK(slope < 1.1);
}

TEST_CASE("polar true field matches the pushforward; contracted field differs only in rhobar") {
  auto rng = make_rng();
  for (int k = 0; k < 30; ++k) {
    PolarChartState st;
    st.R = uniform(rng, 1e-3, 0.3);
    st.omega = uniform(rng, -M_PI, M_PI);
    st.rhobar = uniform(rng, 0.05, 1.5);
    const double c = uniform(rng, -2, 2);

    const double g = 1.0 + std::cos(st.omega) * std::cos(st.omega);
    Vec3 push = push_polar(st, c);
    Vec3 truef = polar_chart_true_field(st, c);
    CHECK((g * push - truef).norm() <= 1e-9 * (1.0 + truef.norm()));

    Vec3 spec = polar_chart_field(st, c);
    CHECK(std::abs(spec[0] - truef[0]) <= 1e-14 * (1.0 + std::abs(spec[0])));
    CHECK(std::abs(spec[1] - truef[1]) <= 1e-14 * (1.0 + std::abs(spec[1])));
    // the rhobar lines differ by exactly -rhobar * 2A
    const double sw = std::sin(st.omega), cw = std::cos(st.omega);
    const double A = sw * (cw + 0.5 * sw * sw) + c * st.rhobar * cw;
    CHECK(std::abs((truef[2] - spec[2]) + st.rhobar * 2.0 * A) <=
          1e-12 * (1.0 + std::abs(truef[2])));
  }
}

TEST_CASE("model trajectories are conjugate to directional-chart trajectories") {
  const double c = 1.0;
  const double T2 = 2.0;
  StateVec y0(3);
  y0 << 1e-3, 0.3, -0.01;

  RhsFn model_rhs = [&](const StateVec& y, StateVec& d, double) {
    Vec3 f = model_field(Vec3(y[0], y[1], y[2]), c, nullptr);
    d[0] = f[0];
    d[1] = f[1];
    d[2] = f[2];
  };
  OdeResult direct = integrate_ode(model_rhs, y0, 0.0, T2);

  // same journey in the chart, with the t2 clock integrated alongside
  DirChartState start = blow_up_dir(Vec3(y0[0], y0[1], y0[2]));
  StateVec w0(4);
  w0 << start.R, start.sbar, start.zetabar, 0.0;
  RhsFn chart_rhs = [&](const StateVec& y, StateVec& d, double) {
    DirChartState st;
    st.R = y[0];
    st.sbar = y[1];
    st.zetabar = y[2];
    Vec3 f = dir_chart_field(st, c);
    d[0] = f[0];
    d[1] = f[1];
    d[2] = f[2];
    d[3] = 1.0 / y[0];  // dt3 = R dt2, so the t2 clock runs at 1/R
  };
  OdeEvent clock{[&](const StateVec& y, double) { return y[3] - T2; }, +1};
  OdeResult via_chart =
      integrate_ode(chart_rhs, w0, 0.0, 1e4, {clock});
  REQUIRE(via_chart.event_index == 0);

  DirChartState end;
  end.R = via_chart.y_end[0];
  end.sbar = via_chart.y_end[1];
  end.zetabar = via_chart.y_end[2];
  Vec3 down = blow_down(end);
  CHECK((down - Vec3(direct.y_end[0], direct.y_end[1], direct.y_end[2])).norm() <= 1e-6);
}
