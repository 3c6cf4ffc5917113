#pragma once

#include "fbsde/paths.hpp"

namespace fbsde {

enum class SolverTag { ClosedForm, Lsmc };

/// Realized (x, y, z) paths under a control, with the control values the
/// solvers actually consumed. x, y live on nodes [n x N+1]; z and u on cells
/// [n x N] (left endpoints).
struct FbsdeSolution {
    PathMatrix x;
    PathMatrix y;
    PathMatrix z;
    ControlProcess u;       // deterministic-grid or path-indexed realization
    SolverTag tag = SolverTag::ClosedForm;
    TimeGrid grid{1};
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;

    double u_at(std::size_t path, std::size_t cell) const { return u.value(path, cell); }
    /// Node-indexed control value; the final node reuses the last cell.
    double u_node(std::size_t path, std::size_t node) const {
        const std::size_t last = grid.n_steps - 1;
        return u.value(path, node > last ? last : node);
    }
};

struct CostEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
};

struct ForwardPaths {
    PathMatrix x;       // [n x N+1]
    ControlProcess u;   // realized control
};

/// Euler–Maruyama iteration of the forward equation; feedback controls are
/// materialized on the fly. Throws DivergenceError on non-finite states.
ForwardPaths solve_forward(const ModelCoefficients& coeffs, const ControlProcess& u,
                           const PathEnsemble& ensemble);

struct ClosedFormBackward {
    PathMatrix y;               // [n x N+1]
    PathMatrix z;               // [n x N]
    std::vector<double> alpha;  // node values of the ansatz slope
    std::vector<double> beta;   // node values of the ansatz offset
};

/// Backward component via the affine ansatz y(t) = alpha(t) x(t) + beta(t).
///
/// Matching the ansatz Ito differential
///   dy = [alpha' x + alpha (A x + B u) + beta'] dt + alpha (C x + D u) dW
/// against dy = -(a x + b y + c u) dt + z dW and y = alpha x + beta gives
///   alpha' = -(A + b) alpha - a,          alpha(1) = M,
///   beta'  = -b beta - (c + alpha B) u,   beta(1)  = 0,
///   z      = alpha (C x + D u);
/// the system is linear, so no quadratic term appears in the alpha equation.
/// Valid for deterministic (open-loop) controls only.
ClosedFormBackward solve_backward_closed_form(const ModelCoefficients& coeffs,
                                              const ControlProcess& u, const PathMatrix& x,
                                              const PathEnsemble& ensemble);

struct LsmcBackward {
    PathMatrix y;  // [n x N+1]
    PathMatrix z;  // [n x N]
};

/// Backward component by least-squares Monte Carlo: backward induction from
/// y_N = M x_N; z from the martingale-increment regression of
/// (y_{i+1} - E[y_{i+1}|F_i]) dW_i / dt, y from regression of
/// y_{i+1} + (a x_i + b y_{i+1} + c u_i) dt, both on monomials in (x_i, W_i).
LsmcBackward solve_backward_lsmc(const ModelCoefficients& coeffs, const ControlProcess& u,
                                 const PathMatrix& x, const PathEnsemble& ensemble,
                                 int basis_degree = 3);

/// Full pipeline: forward solve, then the requested backward solver
/// (closed form when the control is deterministic, else LSMC).
FbsdeSolution solve_fbsde(const ModelCoefficients& coeffs, const ControlProcess& u,
                          const PathEnsemble& ensemble,
                          std::optional<SolverTag> method = std::nullopt,
                          int basis_degree = 3);

/// Monte Carlo cost: left-endpoint rule for the running integral plus
/// phi(x(1)) + gamma(y(0)).
CostEstimate evaluate_cost(const CostSpec& cost, const FbsdeSolution& sol,
                           const PathEnsemble& ensemble);

/// Exact cost of a deterministic control via the moment reduction: x(t) is
/// Gaussian with mean/variance from the linear ODEs, y = alpha x + beta, and
/// polynomial expectations follow from Gaussian moments. Available when the
/// cost carries its polynomial form; the independent cross-check for the
/// Monte Carlo estimator.
std::optional<double> deterministic_cost(const ModelCoefficients& coeffs, const CostSpec& cost,
                                         const TimeGrid& grid, const ControlProcess& u);

struct StabilityReport {
    // two-control estimate: E[sup|dx|^2 + sup|dy|^2 + int dz^2] vs its bracket
    double lhs_pair = 0.0;
    double rhs_pair = 0.0;
    double ratio_pair = 0.0;
    // single-control estimate for u: E[sup x^2 + sup y^2 + int z^2] vs bracket
    double lhs_single = 0.0;
    double rhs_single = 0.0;
    double ratio_single = 0.0;
    // moment diagnostics under u
    double sup4_x = 0.0;  // E[sup_t |x|^4]
    double sup4_y = 0.0;  // E[sup_t |y|^4]
};

/// Measures the a-priori stability estimates as ratios LHS/RHS with the
/// unknown constant stripped from the right-hand side.
StabilityReport stability_probe(const ModelCoefficients& coeffs, const ControlProcess& u,
                                const ControlProcess& u_tilde, const PathEnsemble& ensemble,
                                std::optional<SolverTag> method = std::nullopt);

/// CSV export, one row per (path, node): path,t,x,y,z,u with z,u repeating
/// the last cell on the final node.
std::string solution_to_csv(const FbsdeSolution& sol);

}  // namespace fbsde
