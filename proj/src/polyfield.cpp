#include "sigmaflow/polyfield.hpp"

#include <sstream>

namespace sigmaflow {

namespace {

int total_degree(const Exponents& e) { return e[0] + e[1] + e[2] + e[3]; }

double ipow(double x, int n) {
  double r = 1.0;
  while (n-- > 0) r *= x;
  return r;
}

}  // namespace

MultiPoly::MultiPoly(std::map<Exponents, Rational> t) : terms_(std::move(t)) { finalize(); }

void MultiPoly::finalize() {
  for (auto it = terms_.begin(); it != terms_.end();) {
    if (it->second == 0) {
      it = terms_.erase(it);
      continue;
    }
    if (total_degree(it->first) > kMaxPolyDegree) {
      throw DegreeCapExceeded("polynomial degree exceeds cap " +
                              std::to_string(kMaxPolyDegree));
    }
    ++it;
  }
  eval_cache_.clear();
  eval_cache_.reserve(terms_.size());
  for (const auto& [e, c] : terms_) {
    eval_cache_.push_back({c.convert_to<double>(), e});
  }
}

MultiPoly MultiPoly::constant(const Rational& c) {
  std::map<Exponents, Rational> t;
  if (c != 0) t[{0, 0, 0, 0}] = c;
  return MultiPoly(std::move(t));
}

MultiPoly MultiPoly::variable(int i) {
  Exponents e{0, 0, 0, 0};
  e[i] = 1;
  std::map<Exponents, Rational> t;
  t[e] = 1;
  return MultiPoly(std::move(t));
}

MultiPoly MultiPoly::monomial(const Rational& c, const Exponents& e) {
  std::map<Exponents, Rational> t;
  if (c != 0) t[e] = c;
  return MultiPoly(std::move(t));
}

int MultiPoly::degree() const {
  int d = -1;
  for (const auto& [e, c] : terms_) d = std::max(d, total_degree(e));
  return d;
}

double MultiPoly::eval(const Vec4& x) const {
  double acc = 0.0;
  for (const auto& t : eval_cache_) {
    acc += t.c * ipow(x[0], t.e[0]) * ipow(x[1], t.e[1]) * ipow(x[2], t.e[2]) *
           ipow(x[3], t.e[3]);
  }
  return acc;
}

MultiPoly MultiPoly::partial(int i) const {
  std::map<Exponents, Rational> t;
  for (const auto& [e, c] : terms_) {
    if (e[i] == 0) continue;
    Exponents d = e;
    d[i] -= 1;
    t[d] += c * e[i];
  }
  return MultiPoly(std::move(t));
}

MultiPoly MultiPoly::operator-() const {
  std::map<Exponents, Rational> t = terms_;
  for (auto& [e, c] : t) c = -c;
  return MultiPoly(std::move(t));
}

MultiPoly MultiPoly::operator+(const MultiPoly& o) const {
  std::map<Exponents, Rational> t = terms_;
  for (const auto& [e, c] : o.terms_) t[e] += c;
  return MultiPoly(std::move(t));
}

MultiPoly MultiPoly::operator-(const MultiPoly& o) const {
  std::map<Exponents, Rational> t = terms_;
  for (const auto& [e, c] : o.terms_) t[e] -= c;
  return MultiPoly(std::move(t));
}

MultiPoly MultiPoly::operator*(const MultiPoly& o) const {
  std::map<Exponents, Rational> t;
  for (const auto& [ea, ca] : terms_) {
    for (const auto& [eb, cb] : o.terms_) {
      Exponents e{ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2], ea[3] + eb[3]};
      t[e] += ca * cb;
    }
  }
  return MultiPoly(std::move(t));
}

MultiPoly MultiPoly::operator*(const Rational& c) const {
  std::map<Exponents, Rational> t = terms_;
  for (auto& [e, v] : t) v *= c;
  return MultiPoly(std::move(t));
}

std::string MultiPoly::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [e, c] : terms_) {
    if (!first) os << " + ";
    first = false;
    os << c.str();
    for (int i = 0; i < 4; ++i) {
      if (e[i] == 0) continue;
      os << "*x" << (i + 1);
      if (e[i] > 1) os << "^" << e[i];
    }
  }
  return os.str();
}

Vec4 PolyVectorField::eval(const Vec4& x) const {
  return Vec4(comp[0].eval(x), comp[1].eval(x), comp[2].eval(x), comp[3].eval(x));
}

bool PolyVectorField::is_zero() const {
  for (const auto& c : comp) {
    if (!c.is_zero()) return false;
  }
  return true;
}

PolyVectorField PolyVectorField::operator+(const PolyVectorField& o) const {
  PolyVectorField r;
  for (int i = 0; i < 4; ++i) r.comp[i] = comp[i] + o.comp[i];
  return r;
}

PolyVectorField PolyVectorField::operator-(const PolyVectorField& o) const {
  PolyVectorField r;
  for (int i = 0; i < 4; ++i) r.comp[i] = comp[i] - o.comp[i];
  return r;
}

PolyVectorField PolyVectorField::operator*(const Rational& c) const {
  PolyVectorField r;
  for (int i = 0; i < 4; ++i) r.comp[i] = comp[i] * c;
  return r;
}

PolyVectorField lie_bracket(const PolyVectorField& F, const PolyVectorField& G) {
  PolyVectorField out;
  for (int i = 0; i < 4; ++i) {
    MultiPoly acc;
    for (int j = 0; j < 4; ++j) {
      acc = acc + F.comp[j] * G.comp[i].partial(j) - G.comp[j] * F.comp[i].partial(j);
    }
    out.comp[i] = acc;
  }
  return out;
}

Mat4 FieldData::eval_jac(const Vec4& x) const {
  Mat4 m;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) m(i, j) = jac[i][j].eval(x);
  }
  return m;
}

FieldData make_field_data(const PolyVectorField& f) {
  FieldData fd;
  fd.f = f;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) fd.jac[i][j] = f.comp[i].partial(j);
  }
  return fd;
}

AffineSystem AffineSystem::make(const PolyVectorField& f0, const PolyVectorField& f1,
                                const PolyVectorField& f2) {
  AffineSystem s;
  s.F0 = make_field_data(f0);
  s.F1 = make_field_data(f1);
  s.F2 = make_field_data(f2);
  PolyVectorField b01 = lie_bracket(f0, f1);
  PolyVectorField b02 = lie_bracket(f0, f2);
  s.F01 = make_field_data(b01);
  s.F02 = make_field_data(b02);
  s.F12 = make_field_data(lie_bracket(f1, f2));
  const PolyVectorField* base[3] = {&f0, &f1, &f2};
  for (int k = 0; k < 3; ++k) {
    s.dF01[k] = make_field_data(lie_bracket(*base[k], b01));
    s.dF02[k] = make_field_data(lie_bracket(*base[k], b02));
  }
  return s;
}

double det4_cofactor(const Mat4& m) {
  // Laplace expansion along the first row, with 3x3 minors by the rule of Sarrus.
  auto det3 = [&](int r0, int r1, int r2, int c0, int c1, int c2) {
    return m(r0, c0) * (m(r1, c1) * m(r2, c2) - m(r1, c2) * m(r2, c1)) -
           m(r0, c1) * (m(r1, c0) * m(r2, c2) - m(r1, c2) * m(r2, c0)) +
           m(r0, c2) * (m(r1, c0) * m(r2, c1) - m(r1, c1) * m(r2, c0));
  };
  return m(0, 0) * det3(1, 2, 3, 1, 2, 3) - m(0, 1) * det3(1, 2, 3, 0, 2, 3) +
         m(0, 2) * det3(1, 2, 3, 0, 1, 3) - m(0, 3) * det3(1, 2, 3, 0, 1, 2);
}

FrameRank check_frame_rank(const AffineSystem& sys, const Vec4& x, double tau) {
  Mat4 m;
  m.col(0) = sys.F1.eval(x);
  m.col(1) = sys.F2.eval(x);
  m.col(2) = sys.F01.eval(x);
  m.col(3) = sys.F02.eval(x);
  double d = det4_cofactor(m);
  return {std::abs(d) > tau, d};
}

}  // namespace sigmaflow
