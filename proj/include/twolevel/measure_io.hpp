#pragma once

#include <json.hpp>

#include "twolevel/measures.hpp"

namespace twolevel {

// JSON form: {"kind": "grid" | "atomic" | "density" | "beta" | "mixture", ...}.
// Doubles are written with round-trip precision.

nlohmann::json to_json(const GridMeasure& mu);
nlohmann::json to_json(const LimitMeasure& mu);
nlohmann::json to_json(const TailDescriptor& tail);

GridMeasure grid_measure_from_json(const nlohmann::json& j);
/// Accepts every kind; "grid" is converted to its atomic equivalent.
LimitMeasure limit_measure_from_json(const nlohmann::json& j);
TailDescriptor tail_from_json(const nlohmann::json& j);

}  // namespace twolevel
