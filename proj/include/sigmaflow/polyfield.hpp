#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "sigmaflow/common.hpp"
#include "sigmaflow/errors.hpp"

namespace sigmaflow {

using Rational = boost::multiprecision::cpp_rational;

// Exponent multi-index for a monomial in x1..x4.
using Exponents = std::array<int, 4>;

constexpr int kMaxPolyDegree = 16;

// Sparse multivariate polynomial in 4 variables with exact rational coefficients.
// Immutable once constructed; arithmetic returns new values. Stored terms never
// have a zero coefficient, and every total degree is capped at kMaxPolyDegree.
class MultiPoly {
 public:
  MultiPoly() = default;

  static MultiPoly constant(const Rational& c);
  static MultiPoly variable(int i);  // x_{i+1}, i in 0..3
  static MultiPoly monomial(const Rational& c, const Exponents& e);

  const std::map<Exponents, Rational>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int degree() const;  // -1 for the zero polynomial

  double eval(const Vec4& x) const;

  MultiPoly partial(int i) const;  // d/dx_{i+1}

  MultiPoly operator-() const;
  MultiPoly operator+(const MultiPoly& o) const;
  MultiPoly operator-(const MultiPoly& o) const;
  MultiPoly operator*(const MultiPoly& o) const;
  MultiPoly operator*(const Rational& c) const;

  bool operator==(const MultiPoly& o) const { return terms_ == o.terms_; }
  bool operator!=(const MultiPoly& o) const { return !(*this == o); }

  std::string to_string() const;

 private:
  explicit MultiPoly(std::map<Exponents, Rational> t);
  void finalize();  // drop zeros, enforce degree cap, build eval cache

  std::map<Exponents, Rational> terms_;

  struct EvalTerm {
    double c;
    Exponents e;
  };
  std::vector<EvalTerm> eval_cache_;
};

// Polynomial vector field on R^4.
struct PolyVectorField {
  std::array<MultiPoly, 4> comp;

  Vec4 eval(const Vec4& x) const;
  bool is_zero() const;
  bool operator==(const PolyVectorField& o) const { return comp == o.comp; }

  PolyVectorField operator+(const PolyVectorField& o) const;
  PolyVectorField operator-(const PolyVectorField& o) const;
  PolyVectorField operator*(const Rational& c) const;
};

// [F,G]_i = sum_j (F_j dG_i/dx_j - G_j dF_i/dx_j), computed exactly.
PolyVectorField lie_bracket(const PolyVectorField& F, const PolyVectorField& G);

// A field together with its exact Jacobian polynomials, so that Hamiltonian
// lifts <p, f(x)> get exact x-gradients p^T Jf(x).
struct FieldData {
  PolyVectorField f;
  std::array<std::array<MultiPoly, 4>, 4> jac;  // jac[i][j] = d f_i / d x_j

  Vec4 eval(const Vec4& x) const { return f.eval(x); }
  Mat4 eval_jac(const Vec4& x) const;
};

FieldData make_field_data(const PolyVectorField& f);

// Control-affine system xdot = F0 + u1 F1 + u2 F2 on R^4 with the bracket
// fields cached up to the second order needed by the chart flow rates.
struct AffineSystem {
  FieldData F0, F1, F2;
  FieldData F01, F02, F12;                    // [F0,F1], [F0,F2], [F1,F2]
  std::array<FieldData, 3> dF01, dF02;        // dF01[k] = [Fk, F01], dF02[k] = [Fk, F02]

  static AffineSystem make(const PolyVectorField& f0, const PolyVectorField& f1,
                           const PolyVectorField& f2);
};

struct FrameRank {
  bool holds;
  double det;
};

// det(F1(x), F2(x), F01(x), F02(x)) via cofactor expansion, and whether its
// magnitude clears tau. This is the computable form of the rank condition that
// the near-Sigma analysis requires.
FrameRank check_frame_rank(const AffineSystem& sys, const Vec4& x,
                           double tau = default_tol().frame_det);

double det4_cofactor(const Mat4& m);

}  // namespace sigmaflow
