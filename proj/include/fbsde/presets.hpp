#pragma once

#include "fbsde/model_io.hpp"

namespace fbsde {

/// Built-in worked models. "example1": pure control diffusion with
/// c = 1+sqrt(2), quadratic terminal cost, multipliers (sqrt2/2, sqrt2/2).
/// "example2": same dynamics with c = 2 and unit-weight multipliers.
ModelFile preset(const std::string& name);

/// JSON text of a preset, byte-identical to its models/ file.
std::string preset_json(const std::string& name);

}  // namespace fbsde
