#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fbsde/common.hpp"
#include "fbsde/matrix.hpp"
#include "fbsde/piecewise.hpp"

namespace fbsde {

/// Compact control set U = [lower, upper].
struct ControlSet {
    double lower = 0.0;
    double upper = 1.0;
    bool convex = true;

    ControlSet() = default;
    ControlSet(double lo, double hi, bool cvx = true) : lower(lo), upper(hi), convex(cvx) {
        if (!(lo <= hi)) throw std::invalid_argument("control set: lower > upper");
    }

    bool contains(double u, double tol = 0.0) const {
        return u >= lower - tol && u <= upper + tol;
    }
    double clamp(double u) const { return std::min(upper, std::max(lower, u)); }
    double width() const { return upper - lower; }

    friend bool operator==(const ControlSet&, const ControlSet&) = default;
};

struct CoefficientValues {
    double A = 0, B = 0, C = 0, D = 0, a = 0, b = 0, c = 0;
};

/// Coefficients of the linear system
///   dx = (A x + B u) dt + (C x + D u) dW,      x(0) = x0,
///   dy = -(a x + b y + c u) dt + z dW,         y(1) = M x(1),
/// on the fixed horizon [0,1].
struct ModelCoefficients {
    PiecewiseConstant A, B, C, D, a, b, c;
    double M = 0.0;
    double x0 = 0.0;

    CoefficientValues at(double t) const {
        return {A(t), B(t), C(t), D(t), a(t), b(t), c(t)};
    }

    friend bool operator==(const ModelCoefficients&, const ModelCoefficients&) = default;
};

/// Pure lookup of the 7 coefficient functions at t in [0,1].
CoefficientValues eval_coefficients(const ModelCoefficients& coeffs, double t);

/// Polynomial cost family: the only form the model file accepts. Derivatives
/// are exact by term manipulation.
struct PolynomialCost {
    struct RunningTerm {
        double coef = 0.0;
        int px = 0, py = 0, pu = 0;
        friend bool operator==(const RunningTerm&, const RunningTerm&) = default;
    };
    struct BoundaryTerm {
        double coef = 0.0;
        int power = 0;
        friend bool operator==(const BoundaryTerm&, const BoundaryTerm&) = default;
    };

    std::vector<RunningTerm> running;    // l(t,x,y,u), time-independent terms
    std::vector<BoundaryTerm> terminal;  // phi(x)
    std::vector<BoundaryTerm> initial;   // gamma(y)

    double l(double x, double y, double u) const;
    double l_dx(double x, double y, double u, int nx, int ny, int nu) const;
    double phi(double x) const;
    double phi_d(double x, int n) const;
    double gamma(double y) const;
    double gamma_d(double y, int n) const;

    int max_deg_x() const;
    int max_deg_y() const;
    int max_deg_u() const;
    int max_deg_phi() const;
    int max_deg_gamma() const;

    friend bool operator==(const PolynomialCost&, const PolynomialCost&) = default;
};

/// Running cost l(t,x,y,u), boundary costs phi(x(1)) and gamma(y(0)), and
/// their partial derivatives. Built either from the polynomial family (exact
/// derivatives, serializable) or from user-supplied function tables.
struct CostSpec {
    std::function<double(double, double, double, double)> l, l_x, l_y, l_u, l_xx, l_xy, l_yy;
    std::function<double(double)> phi, phi_x, phi_xx;
    std::function<double(double)> gamma, gamma_y, gamma_yy;
    std::optional<PolynomialCost> poly;

    static CostSpec from_polynomials(PolynomialCost p);
};

/// Admissible control. Three representations:
///   - deterministic-grid: one value per time cell (or a single broadcast value);
///   - feedback: u = f(t, x, y), materialized during the forward solve
///     (y is passed as 0 there: the backward component exists only afterwards);
///   - path-indexed: explicit per-path, per-cell values.
/// With clamp bounds set, every evaluated value is projected into U.
class ControlProcess {
public:
    enum class Kind { DeterministicGrid, Feedback, PathIndexed };
    using FeedbackFn = std::function<double(double t, double x, double y)>;

    static ControlProcess constant(double v);
    static ControlProcess grid(std::vector<double> values);
    static ControlProcess feedback(FeedbackFn f);
    static ControlProcess path_indexed(PathMatrix values);

    ControlProcess clamped(const ControlSet& uset) const;

    Kind kind() const { return kind_; }
    bool realized_from_feedback() const { return from_feedback_; }
    const std::optional<ControlSet>& clamp_set() const { return clamp_; }

    /// Scalar evaluation for feedback controls (applies clamping).
    double eval_feedback(double t, double x, double y) const;

    /// Grid/path-indexed value at (path, cell). Broadcast-aware.
    double value(std::size_t path, std::size_t cell) const;

    /// Number of cells the control is defined on; 1 means "broadcast".
    std::size_t n_cells() const;
    std::size_t n_paths() const;  // 1 unless path-indexed

    const std::vector<double>& grid_values() const { return grid_values_; }
    const PathMatrix& path_values() const { return path_values_; }

    /// Mark a path-indexed control as having come from a feedback rule
    /// (affects the default comparison tolerance of the control metric).
    ControlProcess tagged_from_feedback() const;

private:
    Kind kind_ = Kind::DeterministicGrid;
    std::vector<double> grid_values_{0.0};
    FeedbackFn feedback_;
    PathMatrix path_values_;
    std::optional<ControlSet> clamp_;
    bool from_feedback_ = false;
};

/// Multiplier pair (theta0, theta1) weighting cost vs terminal-constraint
/// sensitivity; theta1 is affine in the terminal state: theta1(x1) = c0 + c1*x1.
struct MultiplierPair {
    double theta0 = 1.0;
    double theta1_const = 0.0;
    double theta1_x1 = 0.0;

    MultiplierPair() = default;
    MultiplierPair(double t0, double c0, double c1 = 0.0)
        : theta0(t0), theta1_const(c0), theta1_x1(c1) {
        if (theta0 < 0.0) throw std::invalid_argument("multipliers: theta0 must be >= 0");
    }

    double theta1(double x1) const { return theta1_const + theta1_x1 * x1; }

    /// Reported (not enforced): |theta0|^2 + E|theta1|^2 over terminal samples.
    double normalization(std::span<const double> x1_samples) const;

    friend bool operator==(const MultiplierPair&, const MultiplierPair&) = default;
};

struct ValidationCheck {
    std::string name;
    bool pass = true;
    double fitted_constant = 0.0;        // max observed ratio / bound on sample
    std::array<double, 4> witness{};     // (t,x,y,u) of the extremal probe
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    bool all_pass = true;
    const ValidationCheck* find(const std::string& name) const;
};

/// Samples the standing smoothness/growth assumptions on a probe box.
/// These are falsification probes, not proofs: a probe passes when the
/// fitted constant does not grow from the inner half-box to the full box.
/// Throws InvalidModelError if a coefficient evaluates non-finite.
ValidationReport validate_model(const ModelCoefficients& coeffs, const CostSpec& cost,
                                const ControlSet& uset, std::size_t grid_density,
                                double probe_box = 10.0);

}  // namespace fbsde
