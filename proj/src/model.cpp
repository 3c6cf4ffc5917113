#include "fbsde/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>

namespace fbsde {

CoefficientValues eval_coefficients(const ModelCoefficients& coeffs, double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::domain_error("eval_coefficients: t outside [0,1]");
    return coeffs.at(t);
}

namespace {

double ipow(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

// coefficient of d^n/dx^n x^p evaluated at x: p (p-1) ... (p-n+1) x^{p-n}
double dpow(double x, int p, int n) {
    if (n > p) return 0.0;
    double c = 1.0;
    for (int i = 0; i < n; ++i) c *= static_cast<double>(p - i);
    return c * ipow(x, p - n);
}

}  // namespace

double PolynomialCost::l(double x, double y, double u) const {
    double s = 0.0;
    for (const auto& t : running) s += t.coef * ipow(x, t.px) * ipow(y, t.py) * ipow(u, t.pu);
    return s;
}

double PolynomialCost::l_dx(double x, double y, double u, int nx, int ny, int nu) const {
    double s = 0.0;
    for (const auto& t : running)
        s += t.coef * dpow(x, t.px, nx) * dpow(y, t.py, ny) * dpow(u, t.pu, nu);
    return s;
}

double PolynomialCost::phi(double x) const {
    double s = 0.0;
    for (const auto& t : terminal) s += t.coef * ipow(x, t.power);
    return s;
}

double PolynomialCost::phi_d(double x, int n) const {
    double s = 0.0;
    for (const auto& t : terminal) s += t.coef * dpow(x, t.power, n);
    return s;
}

double PolynomialCost::gamma(double y) const {
    double s = 0.0;
    for (const auto& t : initial) s += t.coef * ipow(y, t.power);
    return s;
}

double PolynomialCost::gamma_d(double y, int n) const {
    double s = 0.0;
    for (const auto& t : initial) s += t.coef * dpow(y, t.power, n);
    return s;
}

int PolynomialCost::max_deg_x() const {
    int d = 0;
    for (const auto& t : running) d = std::max(d, t.px);
    return d;
}
int PolynomialCost::max_deg_y() const {
    int d = 0;
    for (const auto& t : running) d = std::max(d, t.py);
    return d;
}
int PolynomialCost::max_deg_u() const {
    int d = 0;
    for (const auto& t : running) d = std::max(d, t.pu);
    return d;
}
int PolynomialCost::max_deg_phi() const {
    int d = 0;
    for (const auto& t : terminal) d = std::max(d, t.power);
    return d;
}
int PolynomialCost::max_deg_gamma() const {
    int d = 0;
    for (const auto& t : initial) d = std::max(d, t.power);
    return d;
}

CostSpec CostSpec::from_polynomials(PolynomialCost p) {
    CostSpec c;
    auto poly = std::make_shared<PolynomialCost>(std::move(p));
    c.l = [poly](double, double x, double y, double u) { return poly->l(x, y, u); };
    c.l_x = [poly](double, double x, double y, double u) { return poly->l_dx(x, y, u, 1, 0, 0); };
    c.l_y = [poly](double, double x, double y, double u) { return poly->l_dx(x, y, u, 0, 1, 0); };
    c.l_u = [poly](double, double x, double y, double u) { return poly->l_dx(x, y, u, 0, 0, 1); };
    c.l_xx = [poly](double, double x, double y, double u) { return poly->l_dx(x, y, u, 2, 0, 0); };
    c.l_xy = [poly](double, double x, double y, double u) { return poly->l_dx(x, y, u, 1, 1, 0); };
    c.l_yy = [poly](double, double x, double y, double u) { return poly->l_dx(x, y, u, 0, 2, 0); };
    c.phi = [poly](double x) { return poly->phi(x); };
    c.phi_x = [poly](double x) { return poly->phi_d(x, 1); };
    c.phi_xx = [poly](double x) { return poly->phi_d(x, 2); };
    c.gamma = [poly](double y) { return poly->gamma(y); };
    c.gamma_y = [poly](double y) { return poly->gamma_d(y, 1); };
    c.gamma_yy = [poly](double y) { return poly->gamma_d(y, 2); };
    c.poly = *poly;
    return c;
}

// ---------------------------------------------------------------------------
// ControlProcess

ControlProcess ControlProcess::constant(double v) {
    ControlProcess u;
    u.kind_ = Kind::DeterministicGrid;
    u.grid_values_ = {v};
    return u;
}

ControlProcess ControlProcess::grid(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("control grid: empty values");
    ControlProcess u;
    u.kind_ = Kind::DeterministicGrid;
    u.grid_values_ = std::move(values);
    return u;
}

ControlProcess ControlProcess::feedback(FeedbackFn f) {
    ControlProcess u;
    u.kind_ = Kind::Feedback;
    u.feedback_ = std::move(f);
    return u;
}

ControlProcess ControlProcess::path_indexed(PathMatrix values) {
    ControlProcess u;
    u.kind_ = Kind::PathIndexed;
    u.path_values_ = std::move(values);
    return u;
}

ControlProcess ControlProcess::clamped(const ControlSet& uset) const {
    ControlProcess u = *this;
    u.clamp_ = uset;
    if (u.kind_ == Kind::DeterministicGrid) {
        for (double& v : u.grid_values_) v = uset.clamp(v);
    } else if (u.kind_ == Kind::PathIndexed) {
        for (double& v : u.path_values_.flat()) v = uset.clamp(v);
    }
    return u;
}

ControlProcess ControlProcess::tagged_from_feedback() const {
    ControlProcess u = *this;
    u.from_feedback_ = true;
    return u;
}

double ControlProcess::eval_feedback(double t, double x, double y) const {
    if (kind_ != Kind::Feedback)
        throw UnsupportedControlError("eval_feedback on a non-feedback control");
    double v = feedback_(t, x, y);
    return clamp_ ? clamp_->clamp(v) : v;
}

double ControlProcess::value(std::size_t path, std::size_t cell) const {
    switch (kind_) {
        case Kind::DeterministicGrid:
            return grid_values_.size() == 1 ? grid_values_[0] : grid_values_.at(cell);
        case Kind::PathIndexed:
            return path_values_(path, cell);
        case Kind::Feedback:
            throw UnsupportedControlError(
                "feedback control has no stored values; realize it with solve_forward");
    }
    return 0.0;
}

std::size_t ControlProcess::n_cells() const {
    switch (kind_) {
        case Kind::DeterministicGrid: return grid_values_.size();
        case Kind::PathIndexed: return path_values_.cols();
        case Kind::Feedback: return 0;
    }
    return 0;
}

std::size_t ControlProcess::n_paths() const {
    return kind_ == Kind::PathIndexed ? path_values_.rows() : 1;
}

// ---------------------------------------------------------------------------
// MultiplierPair

double MultiplierPair::normalization(std::span<const double> x1_samples) const {
    double acc = 0.0;
    for (double x1 : x1_samples) {
        const double t1 = theta1(x1);
        acc += t1 * t1;
    }
    const double e2 = x1_samples.empty() ? theta1_const * theta1_const
                                         : acc / static_cast<double>(x1_samples.size());
    return theta0 * theta0 + e2;
}

// ---------------------------------------------------------------------------
// validate_model

namespace {

struct ProbePoint {
    double t, x, y, u;
};

// Growth test: a sampled sup passes when it does not keep growing from the
// inner half-box to the full box. Constants stay flat; polynomial growth of
// degree >= 1 at least doubles.
constexpr double kGrowthFactor = 1.5;

struct SupTracker {
    double sup_inner = 0.0;
    double sup_full = 0.0;
    ProbePoint witness{};
    void update(double v, bool inner, const ProbePoint& pt) {
        v = std::abs(v);
        if (inner) sup_inner = std::max(sup_inner, v);
        if (v > sup_full) {
            sup_full = v;
            witness = pt;
        }
    }
    bool bounded() const { return sup_full <= kGrowthFactor * sup_inner + 1e-9; }
};

ValidationCheck make_check(const std::string& name, const SupTracker& s, bool pass_override,
                           bool use_override = false) {
    ValidationCheck c;
    c.name = name;
    c.fitted_constant = s.sup_full;
    c.witness = {s.witness.t, s.witness.x, s.witness.y, s.witness.u};
    c.pass = use_override ? pass_override : s.bounded();
    if (!c.pass && !use_override)
        c.detail = "sampled bound grows from the inner half-box to the full box";
    return c;
}

}  // namespace

const ValidationCheck* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

ValidationReport validate_model(const ModelCoefficients& coeffs, const CostSpec& cost,
                                const ControlSet& uset, std::size_t grid_density,
                                double probe_box) {
    if (grid_density < 16)
        throw std::invalid_argument("validate_model: grid_density must be >= 16");

    ValidationReport report;

    // Coefficient finiteness over the evaluation grid. Non-finite values are
    // a hard error naming the coefficient and time.
    const char* names[7] = {"A", "B", "C", "D", "a", "b", "c"};
    const PiecewiseConstant* fns[7] = {&coeffs.A, &coeffs.B, &coeffs.C, &coeffs.D,
                                       &coeffs.a, &coeffs.b, &coeffs.c};
    for (int f = 0; f < 7; ++f) {
        double sup = 0.0;
        double at = 0.0;
        for (std::size_t i = 0; i <= grid_density; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(grid_density);
            const double v = (*fns[f])(t);
            if (!std::isfinite(v)) {
                std::ostringstream os;
                os << "coefficient " << names[f] << " is non-finite at t=" << t;
                throw InvalidModelError(os.str());
            }
            if (std::abs(v) > sup) {
                sup = std::abs(v);
                at = t;
            }
        }
        ValidationCheck c;
        c.name = std::string("bounded-coefficient-") + names[f];
        c.pass = true;
        c.fitted_constant = sup;
        c.witness = {at, 0, 0, 0};
        report.checks.push_back(c);
    }
    if (!std::isfinite(coeffs.M) || !std::isfinite(coeffs.x0))
        throw InvalidModelError("M or x0 is non-finite");

    // Probe points: deterministic pseudo-random sample of the box.
    std::mt19937_64 rng(0x5eedULL + grid_density);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n_probe = std::max<std::size_t>(100, grid_density * grid_density / 4);
    std::vector<ProbePoint> pts(n_probe);
    for (auto& p : pts) {
        p.t = unit(rng);
        p.x = (2.0 * unit(rng) - 1.0) * probe_box;
        p.y = (2.0 * unit(rng) - 1.0) * probe_box;
        p.u = uset.lower + unit(rng) * uset.width();
    }
    auto inner = [&](const ProbePoint& p) {
        return std::abs(p.x) <= 0.5 * probe_box && std::abs(p.y) <= 0.5 * probe_box;
    };

    // Derivative consistency against centered finite differences of l, phi,
    // gamma: |supplied - fd| / (1 + |supplied|) <= 1e-5.
    {
        const double tol = 1e-5;
        struct DerivCheck {
            std::string name;
            std::function<double(const ProbePoint&)> supplied, fd;
        };
        auto L = [&](double t, double x, double y, double u) { return cost.l(t, x, y, u); };
        std::vector<DerivCheck> derivs;
        auto h1 = [](double s) { return 6e-6 * (1.0 + std::abs(s)); };
        auto h2 = [](double s) { return 2e-4 * (1.0 + std::abs(s)); };
        derivs.push_back({"deriv-l_x",
                          [&](const ProbePoint& p) { return cost.l_x(p.t, p.x, p.y, p.u); },
                          [&, L](const ProbePoint& p) {
                              const double h = h1(p.x);
                              return (L(p.t, p.x + h, p.y, p.u) - L(p.t, p.x - h, p.y, p.u)) / (2 * h);
                          }});
        derivs.push_back({"deriv-l_y",
                          [&](const ProbePoint& p) { return cost.l_y(p.t, p.x, p.y, p.u); },
                          [&, L](const ProbePoint& p) {
                              const double h = h1(p.y);
                              return (L(p.t, p.x, p.y + h, p.u) - L(p.t, p.x, p.y - h, p.u)) / (2 * h);
                          }});
        derivs.push_back({"deriv-l_u",
                          [&](const ProbePoint& p) { return cost.l_u(p.t, p.x, p.y, p.u); },
                          [&, L](const ProbePoint& p) {
                              const double h = h1(p.u);
                              return (L(p.t, p.x, p.y, p.u + h) - L(p.t, p.x, p.y, p.u - h)) / (2 * h);
                          }});
        derivs.push_back({"deriv-l_xx",
                          [&](const ProbePoint& p) { return cost.l_xx(p.t, p.x, p.y, p.u); },
                          [&, L](const ProbePoint& p) {
                              const double h = h2(p.x);
                              return (L(p.t, p.x + h, p.y, p.u) - 2 * L(p.t, p.x, p.y, p.u) +
                                      L(p.t, p.x - h, p.y, p.u)) / (h * h);
                          }});
        derivs.push_back({"deriv-l_yy",
                          [&](const ProbePoint& p) { return cost.l_yy(p.t, p.x, p.y, p.u); },
                          [&, L](const ProbePoint& p) {
                              const double h = h2(p.y);
                              return (L(p.t, p.x, p.y + h, p.u) - 2 * L(p.t, p.x, p.y, p.u) +
                                      L(p.t, p.x, p.y - h, p.u)) / (h * h);
                          }});
        derivs.push_back({"deriv-l_xy",
                          [&](const ProbePoint& p) { return cost.l_xy(p.t, p.x, p.y, p.u); },
                          [&, L](const ProbePoint& p) {
                              const double hx = h2(p.x), hy = h2(p.y);
                              return (L(p.t, p.x + hx, p.y + hy, p.u) - L(p.t, p.x + hx, p.y - hy, p.u) -
                                      L(p.t, p.x - hx, p.y + hy, p.u) + L(p.t, p.x - hx, p.y - hy, p.u)) /
                                     (4 * hx * hy);
                          }});
        derivs.push_back({"deriv-phi_x",
                          [&](const ProbePoint& p) { return cost.phi_x(p.x); },
                          [&](const ProbePoint& p) {
                              const double h = h1(p.x);
                              return (cost.phi(p.x + h) - cost.phi(p.x - h)) / (2 * h);
                          }});
        derivs.push_back({"deriv-phi_xx",
                          [&](const ProbePoint& p) { return cost.phi_xx(p.x); },
                          [&](const ProbePoint& p) {
                              const double h = h2(p.x);
                              return (cost.phi(p.x + h) - 2 * cost.phi(p.x) + cost.phi(p.x - h)) / (h * h);
                          }});
        derivs.push_back({"deriv-gamma_y",
                          [&](const ProbePoint& p) { return cost.gamma_y(p.y); },
                          [&](const ProbePoint& p) {
                              const double h = h1(p.y);
                              return (cost.gamma(p.y + h) - cost.gamma(p.y - h)) / (2 * h);
                          }});
        derivs.push_back({"deriv-gamma_yy",
                          [&](const ProbePoint& p) { return cost.gamma_yy(p.y); },
                          [&](const ProbePoint& p) {
                              const double h = h2(p.y);
                              return (cost.gamma(p.y + h) - 2 * cost.gamma(p.y) + cost.gamma(p.y - h)) /
                                     (h * h);
                          }});
        for (const auto& d : derivs) {
            ValidationCheck c;
            c.name = d.name;
            c.pass = true;
            std::size_t used = 0;
            for (const auto& p : pts) {
                if (used >= 100) break;
                ++used;
                const double sup = d.supplied(p);
                const double fd = d.fd(p);
                if (!std::isfinite(sup) || !std::isfinite(fd)) {
                    c.pass = false;
                    c.detail = "non-finite derivative evaluation";
                    c.witness = {p.t, p.x, p.y, p.u};
                    break;
                }
                const double rel = std::abs(sup - fd) / (1.0 + std::abs(sup));
                if (rel > c.fitted_constant) {
                    c.fitted_constant = rel;
                    c.witness = {p.t, p.x, p.y, p.u};
                }
                if (rel > tol) {
                    c.pass = false;
                    c.detail = "supplied derivative disagrees with centered finite difference";
                }
            }
            report.checks.push_back(c);
        }
    }

    // (H1): bounded second derivatives on the box.
    {
        struct Field {
            std::string name;
            std::function<double(const ProbePoint&)> f;
        };
        const std::vector<Field> second = {
            {"h1-bounded-l_xx", [&](const ProbePoint& p) { return cost.l_xx(p.t, p.x, p.y, p.u); }},
            {"h1-bounded-l_yy", [&](const ProbePoint& p) { return cost.l_yy(p.t, p.x, p.y, p.u); }},
            {"h1-bounded-l_xy", [&](const ProbePoint& p) { return cost.l_xy(p.t, p.x, p.y, p.u); }},
            {"h1-bounded-phi_xx", [&](const ProbePoint& p) { return cost.phi_xx(p.x); }},
            {"h1-bounded-gamma_yy", [&](const ProbePoint& p) { return cost.gamma_yy(p.y); }},
        };
        for (const auto& fld : second) {
            SupTracker s;
            for (const auto& p : pts) s.update(fld.f(p), inner(p), p);
            report.checks.push_back(make_check(fld.name, s, false));
        }

        // (H1): linear growth of the first derivatives, ratio |d| / (1+|x|+|y|+|u|).
        const std::vector<Field> first = {
            {"h1-growth-l_x", [&](const ProbePoint& p) { return cost.l_x(p.t, p.x, p.y, p.u); }},
            {"h1-growth-l_y", [&](const ProbePoint& p) { return cost.l_y(p.t, p.x, p.y, p.u); }},
            {"h1-growth-phi_x", [&](const ProbePoint& p) { return cost.phi_x(p.x); }},
            {"h1-growth-gamma_y", [&](const ProbePoint& p) { return cost.gamma_y(p.y); }},
        };
        for (const auto& fld : first) {
            SupTracker s;
            for (const auto& p : pts) {
                const double denom = 1.0 + std::abs(p.x) + std::abs(p.y) + std::abs(p.u);
                s.update(fld.f(p) / denom, inner(p), p);
            }
            report.checks.push_back(make_check(fld.name, s, false));
        }
    }

    // (H2): sampled Lipschitz ratios of phi_x, gamma_y, l_x, l_y in (x,y).
    {
        struct Pairwise {
            std::string name;
            std::function<double(const ProbePoint&, const ProbePoint&)> ratio;
        };
        auto dist_xy = [](const ProbePoint& p, const ProbePoint& q) {
            return std::abs(p.x - q.x) + std::abs(p.y - q.y);
        };
        const std::vector<Pairwise> lips = {
            {"h2-lipschitz-phi_x",
             [&](const ProbePoint& p, const ProbePoint& q) {
                 const double d = std::abs(p.x - q.x);
                 return d > 1e-12 ? std::abs(cost.phi_x(p.x) - cost.phi_x(q.x)) / d : 0.0;
             }},
            {"h2-lipschitz-gamma_y",
             [&](const ProbePoint& p, const ProbePoint& q) {
                 const double d = std::abs(p.y - q.y);
                 return d > 1e-12 ? std::abs(cost.gamma_y(p.y) - cost.gamma_y(q.y)) / d : 0.0;
             }},
            {"h2-lipschitz-l_x",
             [&](const ProbePoint& p, const ProbePoint& q) {
                 const double d = dist_xy(p, q);
                 return d > 1e-12 ? std::abs(cost.l_x(p.t, p.x, p.y, p.u) -
                                             cost.l_x(p.t, q.x, q.y, p.u)) / d
                                  : 0.0;
             }},
            {"h2-lipschitz-l_y",
             [&](const ProbePoint& p, const ProbePoint& q) {
                 const double d = dist_xy(p, q);
                 return d > 1e-12 ? std::abs(cost.l_y(p.t, p.x, p.y, p.u) -
                                             cost.l_y(p.t, q.x, q.y, p.u)) / d
                                  : 0.0;
             }},
        };
        for (const auto& lc : lips) {
            SupTracker s;
            for (std::size_t i = 0; i + 1 < pts.size(); i += 2) {
                const auto& p = pts[i];
                const auto& q = pts[i + 1];
                s.update(lc.ratio(p, q), inner(p) && inner(q), p);
            }
            report.checks.push_back(make_check(lc.name, s, false));
        }
    }

    report.all_pass = std::all_of(report.checks.begin(), report.checks.end(),
                                  [](const ValidationCheck& c) { return c.pass; });
    return report;
}

}  // namespace fbsde
