#pragma once

#include <string>

#include "fbsde/model.hpp"

namespace fbsde {

/// Everything a model file defines.
struct ModelFile {
    ModelCoefficients coeffs;
    CostSpec cost;
    ControlSet uset;
    MultiplierPair mult;
};

/// Strict parser for the JSON model document (sections: coefficients, cost,
/// control_set, multipliers). Unknown fields are rejected; errors name the
/// offending field. See README for the schema.
ModelFile parse_model_json(const std::string& text);
ModelFile parse_model_file(const std::string& path);

/// Canonical serialization; parse(serialize(m)) is semantically identical.
std::string serialize_model(const ModelFile& m);

bool semantically_equal(const ModelFile& a, const ModelFile& b);

}  // namespace fbsde
