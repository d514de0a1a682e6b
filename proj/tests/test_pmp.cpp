#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sigmaflow/pmp.hpp"
#include "test_util.hpp"

using namespace sigmaflow;
using namespace sigmaflow::testutil;

namespace {

Eigen::VectorXd pack(const CotangentPoint& z) {
  Eigen::VectorXd v(8);
  v << z.x, z.p;
  return v;
}

CotangentPoint unpack(const Eigen::VectorXd& v) {
  return {v.head<4>(), v.tail<4>()};
}

// Wraps a cotangent field into an 8-vector field for the RK4 helper.
template <typename Field>
std::function<Eigen::VectorXd(const Eigen::VectorXd&)> as_vec8(Field field) {
  return [field](const Eigen::VectorXd& v) {
    CoTangent t = field(unpack(v));
    Eigen::VectorXd out(8);
    out << t.dx, t.dp;
    return out;
  };
}

}  // namespace

TEST_CASE("lift values agree with direct dot products") {
  AffineSystem sys = demo_system();
  auto rng = make_rng();
  for (int k = 0; k < 20; ++k) {
    CotangentPoint z{random_vec4(rng, 2.0), random_vec4(rng, 2.0)};
    LiftValues lv = lift_values(sys, z);
    CHECK(lv.H0 == doctest::Approx(z.p.dot(sys.F0.eval(z.x))).epsilon(1e-14));
    CHECK(lv.H1 == doctest::Approx(z.p.dot(sys.F1.eval(z.x))).epsilon(1e-14));
    CHECK(lv.H2 == doctest::Approx(z.p.dot(sys.F2.eval(z.x))).epsilon(1e-14));
    CHECK(lv.H01 == doctest::Approx(z.p.dot(sys.F01.eval(z.x))).epsilon(1e-14));
    CHECK(lv.H02 == doctest::Approx(z.p.dot(sys.F02.eval(z.x))).epsilon(1e-14));
    CHECK(lv.H12 == doctest::Approx(z.p.dot(sys.F12.eval(z.x))).epsilon(1e-14));
    // closed forms for this system
    CHECK(lv.H1 == doctest::Approx(z.p[0] * z.x[1] + z.p[2]).epsilon(1e-14));
    CHECK(lv.H2 == z.p[1]);
    CHECK(lv.H12 == -z.p[0]);
    CHECK(lv.H01 == doctest::Approx(-z.p[2] * z.x[1]).epsilon(1e-14));
    CHECK(lv.H02 == -z.p[3]);
  }
}

TEST_CASE("lift values scale exactly with the adjoint") {
  AffineSystem sys = demo_system();
  CotangentPoint z{Vec4(0.3, 0.7, -0.2, 0.5), Vec4(1.1, -0.4, 0.6, 0.9)};
  LiftValues a = lift_values(sys, z);
  LiftValues b = lift_values(sys, {z.x, 2.0 * z.p});
  CHECK(b.H0 == 2.0 * a.H0);
  CHECK(b.H1 == 2.0 * a.H1);
  CHECK(b.H2 == 2.0 * a.H2);
  CHECK(b.H01 == 2.0 * a.H01);
  CHECK(b.H02 == 2.0 * a.H02);
  CHECK(b.H12 == 2.0 * a.H12);

  // p = (0,0,-a,-c) pairs with F1 = x2 d1 + d3 to give H1 = -a.
  CotangentPoint w{Vec4(0.4, 1.3, 0.0, 0.0), Vec4(0.0, 0.0, -2.5, -0.7)};
  CHECK(lift_values(sys, w).H1 == -2.5);
}

TEST_CASE("bang feedback normalizes the switching pair") {
  auto lv = [](double h1, double h2) {
    LiftValues v{};
    v.H1 = h1;
    v.H2 = h2;
    return v;
  };
  Vec2 u = bang_feedback(lv(3.0, 4.0));
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-15));
  Vec2 v = bang_feedback(lv(0.0, -2.0));
  CHECK(v[0] == 0.0);
  CHECK(v[1] == -1.0);
  CHECK_THROWS_AS(bang_feedback(lv(0.0, 0.0)), OnSwitchingLocus);
  CHECK_THROWS_AS(bang_feedback(lv(1e-12, 0.0), 1e-10), OnSwitchingLocus);

  // the feedback maximizes u1 H1 + u2 H2 over the closed unit disc
  auto rng = make_rng();
  LiftValues w = lv(0.83, -1.91);
  Vec2 best = bang_feedback(w);
  double top = best[0] * w.H1 + best[1] * w.H2;
  for (int k = 0; k < 100; ++k) {
    double ang = uniform(rng, -M_PI, M_PI);
    double rad = std::sqrt(uniform(rng, 0.0, 1.0));
    double val = rad * std::cos(ang) * w.H1 + rad * std::sin(ang) * w.H2;
    CHECK(val <= top + 1e-12);
  }
}

TEST_CASE("singular feedback solves the switching balance") {
  LiftValues lv{};
  lv.H01 = 0.3;
  lv.H02 = -0.1;
  lv.H12 = 1.0;
  SingularControl sc = singular_feedback(lv);
  CHECK(sc.u[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(sc.u[1] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(sc.admissible);

  lv.H12 = 0.5;
  lv.H01 = 1.0;
  lv.H02 = 0.0;
  SingularControl out = singular_feedback(lv);
  CHECK(out.u[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_FALSE(out.admissible);

  lv.H12 = 1e-12;
  CHECK_THROWS_AS(singular_feedback(lv), SingularControlUndefined);
}

TEST_CASE("hmax field is the symplectic gradient of H0 + |(H1,H2)|") {
  AffineSystem sys = demo_system();
  auto rng = make_rng();
  const double h = 1e-6;
  int tested = 0;
  while (tested < 50) {
    CotangentPoint z{random_vec4(rng, 1.5), random_vec4(rng, 1.5)};
    LiftValues lv = lift_values(sys, z);
    if (lv.rho() < 0.05) continue;
    ++tested;
    CoTangent t = hmax_flow_field(sys, z);
    for (int i = 0; i < 4; ++i) {
      double dHdx = central_diff(
          [&](double s) {
            CotangentPoint w = z;
            w.x[i] += s;
            return hmax(sys, w);
          },
          h);
      double dHdp = central_diff(
          [&](double s) {
            CotangentPoint w = z;
            w.p[i] += s;
            return hmax(sys, w);
          },
          h);
      CHECK(std::abs(t.dx[i] - dHdp) <= 1e-6 * std::max(1.0, std::abs(dHdp)));
      CHECK(std::abs(t.dp[i] + dHdx) <= 1e-6 * std::max(1.0, std::abs(dHdx)));
    }
  }
}

TEST_CASE("hmax field drives x with the normalized feedback") {
  AffineSystem sys = demo_system();
  CotangentPoint z{Vec4(0.1, 0.2, -0.3, 0.4), Vec4(0.05, 1.2, 0.3, -0.2)};
  LiftValues lv = lift_values(sys, z);
  Vec2 u = bang_feedback(lv);
  CoTangent t = hmax_flow_field(sys, z);
  Vec4 expect = sys.F0.eval(z.x) + u[0] * sys.F1.eval(z.x) + u[1] * sys.F2.eval(z.x);
  CHECK((t.dx - expect).norm() <= 1e-14);
  // for this system x2dot = H2/|(H1,H2)| = p2 / hypot(p1 x2 + p3, p2)
  double denom = std::hypot(z.p[0] * z.x[1] + z.p[2], z.p[1]);
  CHECK(t.dx[1] == doctest::Approx(z.p[1] / denom).epsilon(1e-14));
}

TEST_CASE("hmax is conserved along the bang flow") {
  AffineSystem sys = demo_system();
  CotangentPoint z{Vec4(0.1, 0.2, -0.3, 0.4), Vec4(0.05, 1.2, 0.3, -0.2)};
  double h0 = hmax(sys, z);
  Eigen::VectorXd v = pack(z);
  auto f = as_vec8([&](const CotangentPoint& w) { return hmax_flow_field(sys, w); });
  double min_rho = 1e30;
  const int steps = 4000;
  for (int k = 0; k < steps; ++k) {
    v = rk4_flow_n(f, v, 1.0 / steps, 1);
    LiftValues lv = lift_values(sys, unpack(v));
    min_rho = std::min(min_rho, lv.rho());
    CHECK(std::abs(hmax(sys, unpack(v)) - h0) <= 1e-8);
  }
  CHECK(min_rho > 0.05);  // the flight never grazes the switching locus
}

TEST_CASE("singular field reduces to F0 + u_s F on the switching locus") {
  AffineSystem sys = demo_system();
  // H1 = p1 x2 + p3 = 0 and H2 = p2 = 0 by construction
  CotangentPoint z;
  z.x = Vec4(0.4, 0.9, -0.1, 0.2);
  z.p = Vec4(0.8, 0.0, -0.8 * 0.9, 0.3);
  LiftValues lv = lift_values(sys, z);
  REQUIRE(lv.rho() <= 1e-15);
  SingularControl sc = singular_feedback(lv);
  REQUIRE(sc.admissible);

  CoTangent t = singular_flow_field(sys, z);
  Vec4 expect = sys.F0.eval(z.x) + sc.u[0] * sys.F1.eval(z.x) + sc.u[1] * sys.F2.eval(z.x);
  CHECK((t.dx - expect).norm() <= 1e-10);

  // the feedback is built so that H1 and H2 have zero derivative along the flow
  double dH1 = lift_grad_x(sys.F1, z).dot(t.dx) + sys.F1.eval(z.x).dot(t.dp);
  double dH2 = lift_grad_x(sys.F2, z).dot(t.dx) + sys.F2.eval(z.x).dot(t.dp);
  CHECK(std::abs(dH1) <= 1e-10);
  CHECK(std::abs(dH2) <= 1e-10);
}

TEST_CASE("singular field is the symplectic gradient of the singular Hamiltonian") {
  AffineSystem sys = demo_system();
  auto rng = make_rng();
  const double h = 1e-6;
  int tested = 0;
  while (tested < 40) {
    CotangentPoint z{random_vec4(rng, 1.5), random_vec4(rng, 1.5)};
    if (std::abs(lift_values(sys, z).H12) < 0.3) continue;
    ++tested;
    CoTangent t = singular_flow_field(sys, z);
    for (int i = 0; i < 4; ++i) {
      double dHdx = central_diff(
          [&](double s) {
            CotangentPoint w = z;
            w.x[i] += s;
            return singular_hamiltonian(sys, w);
          },
          h);
      double dHdp = central_diff(
          [&](double s) {
            CotangentPoint w = z;
            w.p[i] += s;
            return singular_hamiltonian(sys, w);
          },
          h);
      CHECK(std::abs(t.dx[i] - dHdp) <= 1e-6 * std::max(1.0, std::abs(dHdp)));
      CHECK(std::abs(t.dp[i] + dHdx) <= 1e-6 * std::max(1.0, std::abs(dHdx)));
    }
  }
}

TEST_CASE("singular flow stays on the switching locus") {
  AffineSystem sys = demo_system();
  CotangentPoint z;
  z.x = Vec4(0.4, 0.9, -0.1, 0.2);
  z.p = Vec4(0.8, 0.0, -0.72, 0.3);
  double hs0 = singular_hamiltonian(sys, z);

  Eigen::VectorXd v = pack(z);
  auto f = as_vec8([&](const CotangentPoint& w) { return singular_flow_field(sys, w); });
  const int steps = 4000;
  double min_h12 = 1e30;
  for (int k = 0; k < steps; ++k) {
    v = rk4_flow_n(f, v, 1.0 / steps, 1);
    LiftValues lv = lift_values(sys, unpack(v));
    min_h12 = std::min(min_h12, std::abs(lv.H12));
    CHECK(std::abs(lv.H1) <= 1e-8);
    CHECK(std::abs(lv.H2) <= 1e-8);
    CHECK(std::abs(singular_hamiltonian(sys, unpack(v)) - hs0) <= 1e-8);
  }
  CHECK(min_h12 > 0.1);
}

// Single-input test system: F0 = (x2 + x2^2/2) d1 + x1 d2, F1 = d2.
// Then [F0,F1] = -(1+x2) d1, [F0,[F0,F1]] = -x1 d1 + (1+x2) d2,
// [F1,[F0,F1]] = -d1, and on {H1 = H01 = 0} the balancing control is -x1.
namespace {

SingleInputSystem single_input_demo() {
  PolyVectorField f0;
  f0.comp[0] = MultiPoly::variable(1) + MultiPoly::monomial(Rational(1, 2), {0, 2, 0, 0});
  f0.comp[1] = MultiPoly::variable(0);
  PolyVectorField f1;
  f1.comp[1] = MultiPoly::constant(1);
  return SingleInputSystem::make(f0, f1);
}

}  // namespace

TEST_CASE("single-input brackets match hand expansion") {
  SingleInputSystem sys = single_input_demo();
  Vec4 x(0.6, -0.3, 0.0, 0.0);
  CHECK((sys.F01.eval(x) - Vec4(-(1.0 + x[1]), 0, 0, 0)).norm() <= 1e-15);
  CHECK((sys.F001.eval(x) - Vec4(-x[0], 1.0 + x[1], 0, 0)).norm() <= 1e-15);
  CHECK((sys.F101.eval(x) - Vec4(-1, 0, 0, 0)).norm() <= 1e-15);
}

TEST_CASE("single-input control balances the bracket identity") {
  SingleInputSystem sys = single_input_demo();
  auto rng = make_rng();
  int tested = 0;
  while (tested < 30) {
    CotangentPoint z{random_vec4(rng, 1.5), random_vec4(rng, 1.5)};
    if (std::abs(lift(sys.F101, z)) < 0.1) continue;
    ++tested;
    double u = single_input_singular_control(sys, z);
    double balance = lift(sys.F001, z) + u * lift(sys.F101, z);
    CHECK(std::abs(balance) <= 1e-12 * std::max(1.0, std::abs(lift(sys.F001, z))));
  }
  // on the singular locus {p2 = 0, x2 = -1} the control is -x1
  CotangentPoint z{Vec4(0.6, -1.0, 0.0, 0.0), Vec4(1.2, 0.0, 0.4, -0.7)};
  CHECK(single_input_singular_control(sys, z) == doctest::Approx(-0.6).epsilon(1e-14));
  CotangentPoint bad{Vec4(0.6, -1.0, 0.0, 0.0), Vec4(0.0, 0.0, 0.4, -0.7)};
  CHECK_THROWS_AS(single_input_singular_control(sys, bad), SingularControlUndefined);
}

TEST_CASE("triple brackets are flow derivatives of the switching lift") {
  SingleInputSystem sys = single_input_demo();
  auto rng = make_rng();
  const double h = 1e-4;

  auto drift_field = as_vec8([&](const CotangentPoint& w) {
    return CoTangent{sys.F0.eval(w.x), -lift_grad_x(sys.F0, w)};
  });
  auto control_field = as_vec8([&](const CotangentPoint& w) {
    return CoTangent{sys.F1.eval(w.x), -lift_grad_x(sys.F1, w)};
  });

  for (int k = 0; k < 10; ++k) {
    CotangentPoint z{random_vec4(rng, 1.0), random_vec4(rng, 1.0)};
    Eigen::VectorXd v = pack(z);
    auto h01_after = [&](const auto& field, double dt) {
      Eigen::VectorXd w = rk4_flow_n(field, v, dt, 20);
      return lift(sys.F01, unpack(w));
    };
    double d_drift = (h01_after(drift_field, h) - h01_after(drift_field, -h)) / (2 * h);
    double d_ctrl = (h01_after(control_field, h) - h01_after(control_field, -h)) / (2 * h);
    CHECK(std::abs(d_drift - lift(sys.F001, z)) <= 1e-6 * std::max(1.0, std::abs(d_drift)));
    CHECK(std::abs(d_ctrl - lift(sys.F101, z)) <= 1e-6 * std::max(1.0, std::abs(d_ctrl)));
  }
}

TEST_CASE("single-input singular flow preserves the switching lift") {
  SingleInputSystem sys = single_input_demo();
  // H1 = p2 = 0 and H01 = -p1 (1 + x2) = 0 at x2 = -1
  CotangentPoint z{Vec4(0.6, -1.0, 0.0, 0.0), Vec4(1.2, 0.0, 0.4, -0.7)};
  Eigen::VectorXd v = pack(z);
  auto f = as_vec8(
      [&](const CotangentPoint& w) { return single_input_singular_field(sys, w); });
  const int steps = 2000;
  for (int k = 0; k < steps; ++k) {
    v = rk4_flow_n(f, v, 1.0 / steps, 1);
    CotangentPoint w = unpack(v);
    CHECK(std::abs(lift(sys.F1, w)) <= 1e-8);
    CHECK(std::abs(lift(sys.F01, w)) <= 1e-8);
    CHECK(std::abs(single_input_singular_control(sys, w)) <= 1.0);
  }
  // the x2 component is frozen on the singular arc
  CHECK(std::abs(v[1] + 1.0) <= 1e-8);
}
