#pragma once

#include <string>

#include <json.hpp>

#include "sigmaflow/polyfield.hpp"

namespace sigmaflow {

// Config syntax for one polynomial component: a list of monomials, each either
//   [coeff, [e1,e2,e3,e4]]   or   {"coeff": ..., "exp": [e1,e2,e3,e4]}
// where coeff is an integer, a float, or a string rational like "3/4".
// Floats are converted exactly (their binary value), so round trips are stable.
MultiPoly poly_from_json(const nlohmann::json& component, const std::string& where);

// A vector field is a list of exactly 4 components.
PolyVectorField field_from_json(const nlohmann::json& field, const std::string& where);

nlohmann::json poly_to_json(const MultiPoly& p);
nlohmann::json field_to_json(const PolyVectorField& f);

}  // namespace sigmaflow
