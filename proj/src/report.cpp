#include "fbsde/report.hpp"

#include <cmath>

namespace fbsde {

Json to_json(const CostEstimate& e) {
    return Json{{"mean", e.mean}, {"std_error", e.std_error}, {"n_paths", e.n_paths}};
}

Json to_json(const ValidationReport& r) {
    Json checks = Json::array();
    for (const auto& c : r.checks) {
        Json j{{"name", c.name},
               {"pass", c.pass},
               {"fitted_constant", c.fitted_constant},
               {"witness", {{"t", c.witness[0]}, {"x", c.witness[1]}, {"y", c.witness[2]},
                            {"u", c.witness[3]}}}};
        if (!c.detail.empty()) j["detail"] = c.detail;
        checks.push_back(j);
    }
    return Json{{"all_pass", r.all_pass}, {"checks", checks}};
}

Json to_json(const StabilityReport& r) {
    return Json{{"pair", {{"lhs", r.lhs_pair}, {"rhs", r.rhs_pair}, {"ratio", r.ratio_pair}}},
                {"single", {{"lhs", r.lhs_single}, {"rhs", r.rhs_single}, {"ratio", r.ratio_single}}},
                {"sup4_x", r.sup4_x},
                {"sup4_y", r.sup4_y}};
}

Json to_json(const DualityReport& r) {
    return Json{{"state_pairing",
                 {{"lhs", r.lhs_state}, {"rhs", r.rhs_state}, {"gap", r.gap_state},
                  {"std_error", r.se_state}}},
                {"value_pairing",
                 {{"lhs", r.lhs_value}, {"rhs", r.rhs_value}, {"gap", r.gap_value},
                  {"std_error", r.se_value}}}};
}

Json to_json(const Certificate& c) {
    Json j{{"kind", c.kind == CertificateKind::Necessary ? "necessary" : "sufficient"},
           {"epsilon", c.epsilon},
           {"residual", c.residual},
           {"residual_std_error", c.residual_se},
           {"fitted_constant", c.fitted_constant},
           {"ceiling", c.ceiling},
           {"verdict", c.verdict ? "pass" : "fail"}};
    if (c.kind == CertificateKind::Necessary) {
        j["beta"] = c.beta;
    } else {
        j["implied_bound_sqrt_epsilon"] = c.implied_bound;
        j["corollary_threshold"] = c.corollary_threshold;
        j["corollary_verdict"] = c.corollary_verdict ? "pass" : "fail";
    }
    if (!c.warning.empty()) j["warning"] = c.warning;
    j["profile"] = c.profile;
    return j;
}

Json to_json(const OrderFit& f) {
    Json j{{"epsilons", f.epsilons},
           {"gaps", f.gaps},
           {"gap_std_errors", f.gap_ses},
           {"included", f.included},
           {"C", f.C},
           {"r2", f.r2},
           {"degenerate", f.degenerate}};
    if (std::isinf(f.delta))
        j["delta"] = "inf";
    else
        j["delta"] = f.delta;
    if (!f.note.empty()) j["note"] = f.note;
    return j;
}

Json to_json(const OptimalValue& v) {
    Json j{{"j_star", to_json(v.j_star)},
           {"exact_pointwise", v.exact_pointwise},
           {"caveat", v.caveat}};
    if (v.j_star_reduced) j["j_star_reduced"] = *v.j_star_reduced;
    if (v.u_star.kind() == ControlProcess::Kind::DeterministicGrid)
        j["u_star"] = v.u_star.grid_values();
    return j;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace fbsde
