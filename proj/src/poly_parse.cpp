#include "sigmaflow/poly_parse.hpp"

namespace sigmaflow {

namespace {

Rational coeff_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_number_integer()) return Rational(j.get<long long>());
  if (j.is_number_float()) return Rational(j.get<double>());
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    try {
      return Rational(s);
    } catch (const std::exception&) {
      throw ConfigError(where + ": cannot parse rational coefficient '" + s + "'");
    }
  }
  throw ConfigError(where + ": coefficient must be a number or a 'p/q' string");
}

Exponents exps_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) {
    throw ConfigError(where + ": exponent list must have exactly 4 entries");
  }
  Exponents e{};
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_number_integer() || j[i].get<long long>() < 0) {
      throw ConfigError(where + ": exponents must be nonnegative integers");
    }
    e[i] = j[i].get<int>();
  }
  return e;
}

}  // namespace

MultiPoly poly_from_json(const nlohmann::json& component, const std::string& where) {
  if (!component.is_array()) {
    throw ConfigError(where + ": component must be a list of monomials");
  }
  MultiPoly p;
  int k = 0;
  for (const auto& mono : component) {
    const std::string mw = where + "[" + std::to_string(k++) + "]";
    Rational c;
    Exponents e{};
    if (mono.is_array() && mono.size() == 2) {
      c = coeff_from_json(mono[0], mw);
      e = exps_from_json(mono[1], mw);
    } else if (mono.is_object()) {
      if (!mono.contains("coeff") || !mono.contains("exp")) {
        throw ConfigError(mw + ": monomial object needs 'coeff' and 'exp'");
      }
      for (const auto& [key, val] : mono.items()) {
        (void)val;
        if (key != "coeff" && key != "exp") {
          throw ConfigError(mw + ": unknown key '" + key + "'");
        }
      }
      c = coeff_from_json(mono["coeff"], mw);
      e = exps_from_json(mono["exp"], mw);
    } else {
      throw ConfigError(mw + ": monomial must be [coeff,[e1,e2,e3,e4]] or an object");
    }
    p = p + MultiPoly::monomial(c, e);
  }
  return p;
}

PolyVectorField field_from_json(const nlohmann::json& field, const std::string& where) {
  if (!field.is_array() || field.size() != 4) {
    throw ConfigError(where + ": vector field must list exactly 4 components");
  }
  PolyVectorField f;
  for (int i = 0; i < 4; ++i) {
    f.comp[i] = poly_from_json(field[i], where + ".component" + std::to_string(i + 1));
  }
  return f;
}

nlohmann::json poly_to_json(const MultiPoly& p) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [e, c] : p.terms()) {
    nlohmann::json mono = nlohmann::json::array();
    mono.push_back(c.str());
    mono.push_back({e[0], e[1], e[2], e[3]});
    out.push_back(mono);
  }
  return out;
}

nlohmann::json field_to_json(const PolyVectorField& f) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < 4; ++i) out.push_back(poly_to_json(f.comp[i]));
  return out;
}

}  // namespace sigmaflow
