#pragma once

#include <json.hpp>

#include "fbsde/certify.hpp"

namespace fbsde {

using Json = nlohmann::ordered_json;

Json to_json(const CostEstimate& e);
Json to_json(const ValidationReport& r);
Json to_json(const StabilityReport& r);
Json to_json(const DualityReport& r);
Json to_json(const Certificate& c);
Json to_json(const OrderFit& f);
Json to_json(const OptimalValue& v);

/// FNV-1a hex digest of a canonical string; used for report provenance.
std::string fnv1a_hex(const std::string& text);

}  // namespace fbsde
