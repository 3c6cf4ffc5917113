#include "fbsde/model_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fbsde {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ParseError("model file: field '" + where + "': " + what);
}

void require_keys(const Json& obj, const std::string& where,
                  const std::set<std::string>& required, const std::set<std::string>& optional) {
    if (!obj.is_object()) fail(where, "expected an object");
    for (const auto& item : obj.items()) {
        if (!required.count(item.key()) && !optional.count(item.key()))
            fail(where + "." + item.key(), "unknown field");
    }
    for (const auto& key : required)
        if (!obj.contains(key)) fail(where + "." + key, "missing required field");
}

double number_at(const Json& obj, const std::string& where) {
    if (!obj.is_number()) fail(where, "expected a number");
    return obj.get<double>();
}

int int_at(const Json& obj, const std::string& where) {
    if (!obj.is_number_integer()) fail(where, "expected an integer");
    const int v = obj.get<int>();
    if (v < 0) fail(where, "expected a nonnegative integer");
    return v;
}

PiecewiseConstant coefficient_at(const Json& obj, const std::string& where) {
    if (obj.is_number()) return PiecewiseConstant::constant(obj.get<double>());
    require_keys(obj, where, {"breakpoints", "values"}, {});
    const auto& bk = obj["breakpoints"];
    const auto& vl = obj["values"];
    if (!bk.is_array() || !vl.is_array()) fail(where, "breakpoints/values must be arrays");
    std::vector<double> breaks, values;
    for (std::size_t i = 0; i < bk.size(); ++i)
        breaks.push_back(number_at(bk[i], where + ".breakpoints"));
    for (std::size_t i = 0; i < vl.size(); ++i)
        values.push_back(number_at(vl[i], where + ".values"));
    try {
        return PiecewiseConstant(std::move(breaks), std::move(values));
    } catch (const std::invalid_argument& e) {
        fail(where, e.what());
    }
}

Json coefficient_json(const PiecewiseConstant& f) {
    if (f.is_constant()) return Json(f.values()[0]);
    Json j;
    j["breakpoints"] = f.breakpoints();
    j["values"] = f.values();
    return j;
}

}  // namespace

ModelFile parse_model_json(const std::string& text) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ParseError("model file: empty document");
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model file: ") + e.what());
    }

    require_keys(doc, "(root)", {"coefficients", "cost", "control_set"},
                 {"schema_version", "multipliers"});
    if (doc.contains("schema_version")) {
        const int v = int_at(doc["schema_version"], "schema_version");
        if (v != 1) fail("schema_version", "unsupported version");
    }

    ModelFile m;

    const auto& co = doc["coefficients"];
    require_keys(co, "coefficients", {"A", "B", "C", "D", "a", "b", "c", "M", "x0"}, {});
    m.coeffs.A = coefficient_at(co["A"], "coefficients.A");
    m.coeffs.B = coefficient_at(co["B"], "coefficients.B");
    m.coeffs.C = coefficient_at(co["C"], "coefficients.C");
    m.coeffs.D = coefficient_at(co["D"], "coefficients.D");
    m.coeffs.a = coefficient_at(co["a"], "coefficients.a");
    m.coeffs.b = coefficient_at(co["b"], "coefficients.b");
    m.coeffs.c = coefficient_at(co["c"], "coefficients.c");
    m.coeffs.M = number_at(co["M"], "coefficients.M");
    m.coeffs.x0 = number_at(co["x0"], "coefficients.x0");

    const auto& cs = doc["cost"];
    require_keys(cs, "cost", {"running", "terminal", "initial"}, {});
    PolynomialCost poly;
    if (!cs["running"].is_array()) fail("cost.running", "expected an array");
    for (std::size_t i = 0; i < cs["running"].size(); ++i) {
        const auto& term = cs["running"][i];
        const std::string where = "cost.running[" + std::to_string(i) + "]";
        require_keys(term, where, {"coef"}, {"x", "y", "u"});
        PolynomialCost::RunningTerm t;
        t.coef = number_at(term["coef"], where + ".coef");
        if (term.contains("x")) t.px = int_at(term["x"], where + ".x");
        if (term.contains("y")) t.py = int_at(term["y"], where + ".y");
        if (term.contains("u")) t.pu = int_at(term["u"], where + ".u");
        poly.running.push_back(t);
    }
    auto read_boundary = [&](const char* key, std::vector<PolynomialCost::BoundaryTerm>& out) {
        if (!cs[key].is_array()) fail(std::string("cost.") + key, "expected an array");
        for (std::size_t i = 0; i < cs[key].size(); ++i) {
            const auto& term = cs[key][i];
            const std::string where = "cost." + std::string(key) + "[" + std::to_string(i) + "]";
            require_keys(term, where, {"coef", "power"}, {});
            out.push_back({number_at(term["coef"], where + ".coef"),
                           int_at(term["power"], where + ".power")});
        }
    };
    read_boundary("terminal", poly.terminal);
    read_boundary("initial", poly.initial);
    m.cost = CostSpec::from_polynomials(std::move(poly));

    const auto& us = doc["control_set"];
    require_keys(us, "control_set", {"lower", "upper"}, {"convex"});
    const double lo = number_at(us["lower"], "control_set.lower");
    const double hi = number_at(us["upper"], "control_set.upper");
    bool convex = true;
    if (us.contains("convex")) {
        if (!us["convex"].is_boolean()) fail("control_set.convex", "expected a boolean");
        convex = us["convex"].get<bool>();
    }
    try {
        m.uset = ControlSet(lo, hi, convex);
    } catch (const std::invalid_argument& e) {
        fail("control_set", e.what());
    }

    if (doc.contains("multipliers")) {
        const auto& mu = doc["multipliers"];
        require_keys(mu, "multipliers", {"theta0"}, {"theta1_const", "theta1_x1"});
        const double t0 = number_at(mu["theta0"], "multipliers.theta0");
        double c0 = 0.0, c1 = 0.0;
        if (mu.contains("theta1_const"))
            c0 = number_at(mu["theta1_const"], "multipliers.theta1_const");
        if (mu.contains("theta1_x1")) c1 = number_at(mu["theta1_x1"], "multipliers.theta1_x1");
        try {
            m.mult = MultiplierPair(t0, c0, c1);
        } catch (const std::invalid_argument& e) {
            fail("multipliers", e.what());
        }
    } else {
        m.mult = MultiplierPair(1.0, 0.0, 0.0);
    }
    return m;
}

ModelFile parse_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("model file: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_model_json(buf.str());
}

std::string serialize_model(const ModelFile& m) {
    Json doc;
    doc["schema_version"] = 1;
    Json co;
    co["A"] = coefficient_json(m.coeffs.A);
    co["B"] = coefficient_json(m.coeffs.B);
    co["C"] = coefficient_json(m.coeffs.C);
    co["D"] = coefficient_json(m.coeffs.D);
    co["a"] = coefficient_json(m.coeffs.a);
    co["b"] = coefficient_json(m.coeffs.b);
    co["c"] = coefficient_json(m.coeffs.c);
    co["M"] = m.coeffs.M;
    co["x0"] = m.coeffs.x0;
    doc["coefficients"] = co;

    if (!m.cost.poly)
        throw Error("serialize_model: only polynomial costs are serializable");
    Json cs;
    cs["running"] = Json::array();
    for (const auto& t : m.cost.poly->running) {
        Json term;
        term["coef"] = t.coef;
        if (t.px) term["x"] = t.px;
        if (t.py) term["y"] = t.py;
        if (t.pu) term["u"] = t.pu;
        cs["running"].push_back(term);
    }
    auto write_boundary = [&](const std::vector<PolynomialCost::BoundaryTerm>& v) {
        Json arr = Json::array();
        for (const auto& t : v) {
            Json term;
            term["coef"] = t.coef;
            term["power"] = t.power;
            arr.push_back(term);
        }
        return arr;
    };
    cs["terminal"] = write_boundary(m.cost.poly->terminal);
    cs["initial"] = write_boundary(m.cost.poly->initial);
    doc["cost"] = cs;

    Json us;
    us["lower"] = m.uset.lower;
    us["upper"] = m.uset.upper;
    us["convex"] = m.uset.convex;
    doc["control_set"] = us;

    Json mu;
    mu["theta0"] = m.mult.theta0;
    mu["theta1_const"] = m.mult.theta1_const;
    mu["theta1_x1"] = m.mult.theta1_x1;
    doc["multipliers"] = mu;

    return doc.dump(2) + "\n";
}

bool semantically_equal(const ModelFile& a, const ModelFile& b) {
    return a.coeffs == b.coeffs && a.uset == b.uset && a.mult == b.mult &&
           a.cost.poly.has_value() == b.cost.poly.has_value() &&
           (!a.cost.poly || *a.cost.poly == *b.cost.poly);
}

}  // namespace fbsde
