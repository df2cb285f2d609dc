#include "twolevel/measure_io.hpp"

#include <string>
#include <vector>

#include "twolevel/errors.hpp"

namespace twolevel {
namespace {

using nlohmann::json;

json to_array(const Eigen::VectorXd& v) { return json(std::vector<double>(v.begin(), v.end())); }

Eigen::VectorXd from_array(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) throw ValidationError(std::string("measure JSON lacks array '") + key + "'");
  const auto v = j.at(key).get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string kind_of(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ValidationError("measure JSON lacks 'kind'");
  return j.at("kind").get<std::string>();
}

}  // namespace

json to_json(const TailDescriptor& tail) {
  json j{{"kind", std::string(to_string(tail.kind))}};
  if (tail.kind == TailDescriptor::Kind::PowerTail) {
    j["alpha"] = tail.alpha;
    j["C"] = tail.constant;
  }
  return j;
}

TailDescriptor tail_from_json(const json& j) {
  const auto kind = tail_kind_from_string(j.at("kind").get<std::string>());
  if (kind == TailDescriptor::Kind::PowerTail) return TailDescriptor::power(j.at("alpha").get<double>(), j.at("C").get<double>());
  return {kind, 0.0, 0.0};
}

json to_json(const GridMeasure& mu) { return {{"kind", "grid"}, {"n", mu.n()}, {"weights", to_array(mu.weights())}}; }

json to_json(const LimitMeasure& mu) {
  if (const auto* a = mu.atomic())
    return {{"kind", "atomic"}, {"positions", to_array(a->positions())}, {"weights", to_array(a->weights())}};
  if (const auto* d = mu.density()) {
    json j{{"kind", "density"},
           {"rule", std::string(to_string(d->grid().kind()))},
           {"breakpoints", to_array(d->grid().breakpoints())},
           {"per_panel", d->grid().per_panel()},
           {"values", to_array(d->values())}};
    if (d->tail()) j["tail"] = to_json(*d->tail());
    return j;
  }
  if (const auto* b = mu.beta()) return {{"kind", "beta"}, {"lambda", b->lambda()}, {"alpha", b->alpha()}};
  json comps = json::array();
  for (const auto& c : *mu.components()) comps.push_back({{"weight", c.weight}, {"measure", to_json(*c.measure)}});
  return {{"kind", "mixture"}, {"components", comps}};
}

GridMeasure grid_measure_from_json(const json& j) {
  if (kind_of(j) != "grid") throw ValidationError("expected a grid measure");
  return GridMeasure(j.at("n").get<int>(), from_array(j, "weights"));
}

LimitMeasure limit_measure_from_json(const json& j) {
  const auto kind = kind_of(j);
  if (kind == "grid") return LimitMeasure(to_atomic(grid_measure_from_json(j)));
  if (kind == "atomic") return LimitMeasure(AtomicMeasure(from_array(j, "positions"), from_array(j, "weights")));
  if (kind == "beta") return LimitMeasure(BetaSpec(j.at("lambda").get<double>(), j.at("alpha").get<double>()));
  if (kind == "density") {
    const auto rule = quadrature_kind_from_string(j.at("rule").get<std::string>());
    Eigen::VectorXd breaks = from_array(j, "breakpoints");
    QuadratureGrid grid = rule == QuadratureKind::Trapezoid
                              ? QuadratureGrid::trapezoid(breaks(0), breaks(breaks.size() - 1), static_cast<int>(breaks.size()))
                              : QuadratureGrid::from_breakpoints(breaks, j.at("per_panel").get<int>());
    std::optional<TailDescriptor> tail;
    if (j.contains("tail")) tail = tail_from_json(j.at("tail"));
    return LimitMeasure(GridDensity::from_values(std::move(grid), from_array(j, "values"), tail));
  }
  if (kind == "mixture") {
    std::vector<std::pair<double, LimitMeasure>> comps;
    for (const auto& c : j.at("components")) comps.emplace_back(c.at("weight").get<double>(), limit_measure_from_json(c.at("measure")));
    return LimitMeasure::mixture(std::move(comps));
  }
  throw ValidationError("unknown measure kind '" + kind + "'");
}

}  // namespace twolevel
