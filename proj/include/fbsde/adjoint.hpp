#pragma once

#include "fbsde/solver.hpp"

namespace fbsde {

/// Which statement the adjoint system serves. The necessary variant weights
/// the cost derivatives by theta0 and closes the terminal condition with the
/// multiplier pair; the sufficient variant uses unit weight and couples
/// p(1) to the forward-solved q(1).
enum class AdjointVariant { Necessary, Sufficient };

/// First-order adjoints: backward pair (p, k) and pathwise forward ODE q.
///   -dp = [A p - a q + C k + theta l_x] dt - k dW,
///    dq = [-b q - theta l_y] dt,
/// with, per variant,
///   necessary:  p(1) = theta0 phi_x(x(1)) - M theta1,  q(0) = -theta0 gamma_y(y(0)),
///   sufficient: p(1) = phi_x(x(1)) - M q(1),           q(0) = -gamma_y(y(0)).
struct FirstOrderAdjoint {
    PathMatrix p;  // [n x N+1]
    PathMatrix q;  // [n x N+1]
    PathMatrix k;  // [n x N]
    AdjointVariant variant = AdjointVariant::Necessary;
    SolverTag method = SolverTag::ClosedForm;
};

/// Second-order adjoints from the scalar decomposition, solved in dependency
/// order P3 -> P2 -> P1:
///   -dP3 = [-2b P3 - theta l_yy] dt - Q3 dW,                        P3(1) = 0,
///   -dP2 = [A P2 + C Q2 - a P3 - b P2 - theta l_xy] dt - Q2 dW,     P2(1) = 0,
///   -dP1 = [2A P1 + C^2 P1 + 2C Q1 - 2a P2 - theta l_xx] dt - Q1 dW,
///          P1(1) = theta phi_xx(x(1)),
/// with theta = theta0 in the necessary variant and 1 in the sufficient one.
/// With deterministic second derivatives these are plain ODEs and Q = 0.
struct SecondOrderAdjoint {
    StepValues P1, P2, P3;  // nodes
    StepValues Q1, Q2, Q3;  // cells
    bool deterministic = true;
    AdjointVariant variant = AdjointVariant::Necessary;
};

struct AdjointBundle {
    FirstOrderAdjoint first;
    SecondOrderAdjoint second;
    MultiplierPair mult;
    AdjointVariant variant = AdjointVariant::Necessary;
};

PathMatrix solve_q_forward(const ModelCoefficients& coeffs, const CostSpec& cost,
                           const FbsdeSolution& sol, const MultiplierPair& mult,
                           AdjointVariant variant);

FirstOrderAdjoint solve_pk_backward(const ModelCoefficients& coeffs, const CostSpec& cost,
                                    const FbsdeSolution& sol, const MultiplierPair& mult,
                                    const PathMatrix& q, AdjointVariant variant,
                                    std::optional<SolverTag> method = std::nullopt,
                                    const PathEnsemble* ensemble = nullptr,
                                    int basis_degree = 3);

SecondOrderAdjoint solve_second_order(const ModelCoefficients& coeffs, const CostSpec& cost,
                                      const FbsdeSolution& sol, const MultiplierPair& mult,
                                      AdjointVariant variant,
                                      std::optional<SolverTag> method = std::nullopt,
                                      const PathEnsemble* ensemble = nullptr,
                                      int basis_degree = 3);

/// q, then (p,k), then the second-order triple.
AdjointBundle solve_adjoints(const ModelCoefficients& coeffs, const CostSpec& cost,
                             const FbsdeSolution& sol, const MultiplierPair& mult,
                             AdjointVariant variant,
                             std::optional<SolverTag> method = std::nullopt,
                             const PathEnsemble* ensemble = nullptr,
                             int basis_degree = 3);

/// Monte Carlo check of the two Ito-pairing identities for p (x' - x) and
/// q (y' - y). Diffusion products pair against k (the Ito computation
/// produces k, and only that pairing closes the identity); the y-pairing
/// carries the -2 b q (y' - y) drift term for the same reason.
struct DualityReport {
    double lhs_state = 0.0, rhs_state = 0.0, gap_state = 0.0, se_state = 0.0;
    double lhs_value = 0.0, rhs_value = 0.0, gap_value = 0.0, se_value = 0.0;
};

DualityReport duality_check(const ModelCoefficients& coeffs, const CostSpec& cost,
                            const FbsdeSolution& sol_ref, const FbsdeSolution& sol_other,
                            const AdjointBundle& adjoints, const PathEnsemble& ensemble);

/// Adjoint table in the solution CSV layout:
/// path,t,p,q,k,P1,P2,P3,Q1,Q2,Q3 (cell quantities repeat on the final node).
std::string adjoints_to_csv(const AdjointBundle& bundle, const TimeGrid& grid,
                            std::size_t n_paths);

}  // namespace fbsde
