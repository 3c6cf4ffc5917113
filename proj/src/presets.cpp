#include "fbsde/presets.hpp"

#include <cmath>

namespace fbsde {

ModelFile preset(const std::string& name) {
    const double r2h = std::sqrt(2.0) / 2.0;
    if (name == "example1") {
        ModelFile m;
        m.coeffs.D = PiecewiseConstant::constant(1.0);
        m.coeffs.c = PiecewiseConstant::constant(1.0 + std::sqrt(2.0));
        m.coeffs.M = 1.0;
        m.coeffs.x0 = 0.0;
        PolynomialCost poly;
        poly.running = {{1.0, 0, 0, 1}};                 // l = u
        poly.terminal = {{r2h, 2}, {1.0, 1}};            // phi = (sqrt2/2) x^2 + x
        poly.initial = {{-1.0, 1}};                      // gamma = -y
        m.cost = CostSpec::from_polynomials(std::move(poly));
        m.uset = ControlSet(0.0, 1.0, true);
        m.mult = MultiplierPair(r2h, r2h, 0.0);
        return m;
    }
    if (name == "example2") {
        ModelFile m;
        m.coeffs.D = PiecewiseConstant::constant(1.0);
        m.coeffs.c = PiecewiseConstant::constant(2.0);
        m.coeffs.M = 1.0;
        m.coeffs.x0 = 0.0;
        PolynomialCost poly;
        poly.running = {{1.0, 0, 0, 1}};                 // l = u
        poly.terminal = {{0.5, 2}, {1.0, 1}};            // phi = x^2/2 + x
        poly.initial = {{-1.0, 1}};                      // gamma = -y
        m.cost = CostSpec::from_polynomials(std::move(poly));
        m.uset = ControlSet(0.0, 1.0, true);
        m.mult = MultiplierPair(1.0, 0.0, 0.0);
        return m;
    }
    throw std::invalid_argument("unknown preset '" + name + "' (try example1 or example2)");
}

std::string preset_json(const std::string& name) { return serialize_model(preset(name)); }

}  // namespace fbsde
