#include "fbsde/adjoint.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "fbsde/detail/rk4.hpp"
#include "fbsde/regression.hpp"

namespace fbsde {

namespace {

double variant_theta(const MultiplierPair& mult, AdjointVariant variant) {
    return variant == AdjointVariant::Necessary ? mult.theta0 : 1.0;
}

// l_x along the solution must be affine in (x, y): every term with an x
// power contributes at most one remaining state factor.
bool l_x_affine(const PolynomialCost& poly) {
    for (const auto& t : poly.running)
        if (t.px >= 1 && (t.px - 1) + t.py > 1) return false;
    return true;
}

// l_y free of state: terms with a y power must be exactly linear in y and
// x-free, so the q equation closes deterministically.
bool l_y_state_free(const PolynomialCost& poly) {
    for (const auto& t : poly.running)
        if (t.py >= 1 && (t.px != 0 || t.py != 1)) return false;
    return true;
}

// all second derivatives of l path-independent: total state degree <= 2
bool l_second_deterministic(const PolynomialCost& poly) {
    for (const auto& t : poly.running)
        if (t.px + t.py > 2) return false;
    return true;
}

bool coeff_nonzero(const PiecewiseConstant& f) {
    for (double v : f.values())
        if (v != 0.0) return true;
    return false;
}

struct AnsatzNodes {
    std::vector<double> alpha, beta;  // backward component ansatz
};

// Re-derive the (alpha, beta) nodes the closed-form backward solver uses;
// the adjoint ansatz needs them to express l_x along paths.
AnsatzNodes backward_ansatz(const ModelCoefficients& coeffs, const ControlProcess& u,
                            const TimeGrid& grid) {
    const std::size_t N = grid.n_steps;
    AnsatzNodes out;
    out.alpha.assign(N + 1, 0.0);
    out.beta.assign(N + 1, 0.0);
    out.alpha[N] = coeffs.M;
    std::array<double, 2> s{coeffs.M, 0.0};
    for (std::size_t i = N; i-- > 0;) {
        const auto cv = coeffs.at(grid.time(i));
        const double ui = u.value(0, i);
        auto rhs = [&](double, const std::array<double, 2>& v) {
            return std::array<double, 2>{-(cv.A + cv.b) * v[0] - cv.a,
                                         -cv.b * v[1] - (cv.c + v[0] * cv.B) * ui};
        };
        s = detail::rk4_step<2>(rhs, grid.time(i + 1), s, -grid.dt());
        out.alpha[i] = s[0];
        out.beta[i] = s[1];
    }
    return out;
}

}  // namespace

PathMatrix solve_q_forward(const ModelCoefficients& coeffs, const CostSpec& cost,
                           const FbsdeSolution& sol, const MultiplierPair& mult,
                           AdjointVariant variant) {
    const std::size_t N = sol.grid.n_steps;
    const std::size_t n = sol.n_paths;
    const double dt = sol.grid.dt();
    const double theta = variant_theta(mult, variant);

    PathMatrix q(n, N + 1);
    for (std::size_t p = 0; p < n; ++p) {
        double qv = -theta * cost.gamma_y(sol.y(p, 0));
        q(p, 0) = qv;
        for (std::size_t i = 0; i < N; ++i) {
            const double t0 = sol.grid.time(i);
            const double t1 = sol.grid.time(i + 1);
            const double b = coeffs.b(t0);  // frozen on the cell
            const double ly0 = cost.l_y(t0, sol.x(p, i), sol.y(p, i), sol.u_node(p, i));
            const double ly1 =
                cost.l_y(t1, sol.x(p, i + 1), sol.y(p, i + 1), sol.u_node(p, i + 1));
            // Heun step: trapezoid on the l_y path, predictor for the b q term
            const double f0 = -b * qv - theta * ly0;
            const double pred = qv + dt * f0;
            const double f1 = -b * pred - theta * ly1;
            qv += 0.5 * dt * (f0 + f1);
            q(p, i + 1) = qv;
        }
    }
    return q;
}

FirstOrderAdjoint solve_pk_backward(const ModelCoefficients& coeffs, const CostSpec& cost,
                                    const FbsdeSolution& sol, const MultiplierPair& mult,
                                    const PathMatrix& q, AdjointVariant variant,
                                    std::optional<SolverTag> method, const PathEnsemble* ensemble,
                                    int basis_degree) {
    const std::size_t N = sol.grid.n_steps;
    const std::size_t n = sol.n_paths;
    const double dt = sol.grid.dt();
    const double theta = variant_theta(mult, variant);

    const bool deterministic_u = sol.u.kind() == ControlProcess::Kind::DeterministicGrid;
    const bool closed_ok = deterministic_u && cost.poly && l_x_affine(*cost.poly) &&
                           cost.poly->max_deg_phi() <= 2 &&
                           (!coeff_nonzero(coeffs.a) || l_y_state_free(*cost.poly));
    const SolverTag tag = method.value_or(closed_ok ? SolverTag::ClosedForm : SolverTag::Lsmc);

    FirstOrderAdjoint out;
    out.variant = variant;
    out.method = tag;
    out.q = q;
    out.p = PathMatrix(n, N + 1);
    out.k = PathMatrix(n, N);

    // q(1) enters the sufficient-variant terminal condition
    std::vector<double> qn(n);
    for (std::size_t p = 0; p < n; ++p) qn[p] = q(p, N);
    const double qn_mean = mean_and_se(qn).mean;

    if (tag == SolverTag::ClosedForm) {
        if (!closed_ok)
            throw UnsupportedControlError(
                "closed-form adjoint needs a deterministic control and an affine l_x; "
                "use the lsmc method");
        const PolynomialCost& poly = *cost.poly;

        // phi_x(x) = phi0 + phi1 x (affine by the validity check)
        const double phi1 = poly.phi_d(0.0, 2);
        const double phi0 = poly.phi_d(0.0, 1);
        double g1, g0;
        if (variant == AdjointVariant::Necessary) {
            g1 = mult.theta0 * phi1 - coeffs.M * mult.theta1_x1;
            g0 = mult.theta0 * phi0 - coeffs.M * mult.theta1_const;
        } else {
            g1 = phi1;
            g0 = phi0 - coeffs.M * qn_mean;
        }

        const AnsatzNodes an = backward_ansatz(coeffs, sol.u, sol.grid);

        // Ansatz p(t) = a1(t) x(t) + a2(t), k = a1 (C x + D u). Matching the
        // Ito differential of the ansatz against the p-equation:
        //   a1' = -(2A + C^2) a1 - theta lx1,
        //   a2' = -A a2 - a1 (B + C D) u + a q - theta lx0,
        // where l_x along paths is lx0(t) + lx1(t) x after substituting
        // y = alpha x + beta.
        std::vector<double> a1(N + 1), a2(N + 1);
        a1[N] = g1;
        a2[N] = g0;
        std::array<double, 2> s{g1, g0};
        for (std::size_t i = N; i-- > 0;) {
            const auto cv = coeffs.at(sol.grid.time(i));
            const double ui = sol.u.value(0, i);
            double lam0 = 0.0, lamx = 0.0, lamy = 0.0;
            for (const auto& term : poly.running) {
                if (term.px == 0) continue;
                double up = 1.0;
                for (int j = 0; j < term.pu; ++j) up *= ui;
                if (term.px == 1 && term.py == 0) lam0 += term.coef * up;
                if (term.px == 2 && term.py == 0) lamx += 2.0 * term.coef * up;
                if (term.px == 1 && term.py == 1) lamy += term.coef * up;
            }
            const double alpha0 = an.alpha[i], alpha1 = an.alpha[i + 1];
            const double beta0 = an.beta[i], beta1 = an.beta[i + 1];
            const double q0 = q(0, i), q1v = q(0, i + 1);
            const double t1 = sol.grid.time(i + 1);
            auto rhs = [&](double t, const std::array<double, 2>& v) {
                const double w = (t1 - t) / dt;  // 1 at the left node, 0 at the right
                const double alpha = alpha1 + w * (alpha0 - alpha1);
                const double beta = beta1 + w * (beta0 - beta1);
                const double qt = q1v + w * (q0 - q1v);
                const double lx1 = lamx + lamy * alpha;
                const double lx0 = lam0 + lamy * beta;
                return std::array<double, 2>{
                    -(2 * cv.A + cv.C * cv.C) * v[0] - theta * lx1,
                    -cv.A * v[1] - v[0] * (cv.B + cv.C * cv.D) * ui + cv.a * qt - theta * lx0};
            };
            s = detail::rk4_step<2>(rhs, t1, s, -dt);
            a1[i] = s[0];
            a2[i] = s[1];
        }

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t i = 0; i <= N; ++i) out.p(p, i) = a1[i] * sol.x(p, i) + a2[i];
            for (std::size_t i = 0; i < N; ++i) {
                const auto cv = coeffs.at(sol.grid.time(i));
                out.k(p, i) = a1[i] * (cv.C * sol.x(p, i) + cv.D * sol.u.value(0, i));
            }
        }
        return out;
    }

    // LSMC route
    if (ensemble == nullptr)
        throw std::invalid_argument("lsmc adjoint solve needs the ensemble");
    const PathMatrix w = ensemble->cumulative();
    CrossSectionRegression reg(basis_degree, n);

    for (std::size_t p = 0; p < n; ++p) {
        const double x1 = sol.x(p, N);
        if (variant == AdjointVariant::Necessary)
            out.p(p, N) = mult.theta0 * cost.phi_x(x1) - coeffs.M * mult.theta1(x1);
        else
            out.p(p, N) = cost.phi_x(x1) - coeffs.M * q(p, N);
    }

    std::vector<double> xi(n), wi(n), regressand(n);
    for (std::size_t i = N; i-- > 0;) {
        const double t = sol.grid.time(i);
        const auto cv = coeffs.at(t);
        for (std::size_t p = 0; p < n; ++p) {
            xi[p] = sol.x(p, i);
            wi[p] = w(p, i);
        }
        reg.set_features(xi, wi, i);

        for (std::size_t p = 0; p < n; ++p) regressand[p] = out.p(p, i + 1);
        const std::vector<double> cont = reg.fit(regressand);
        for (std::size_t p = 0; p < n; ++p)
            regressand[p] = (out.p(p, i + 1) - cont[p]) * ensemble->dW(p, i) / dt;
        const std::vector<double> kfit = reg.fit(regressand);
        for (std::size_t p = 0; p < n; ++p) out.k(p, i) = kfit[p];

        for (std::size_t p = 0; p < n; ++p) {
            const double lx = cost.l_x(t, sol.x(p, i), sol.y(p, i), sol.u_at(p, i));
            regressand[p] = out.p(p, i + 1) +
                            (cv.A * out.p(p, i + 1) - cv.a * q(p, i) + cv.C * out.k(p, i) +
                             theta * lx) * dt;
        }
        const std::vector<double> pfit = reg.fit(regressand);
        for (std::size_t p = 0; p < n; ++p) out.p(p, i) = pfit[p];
    }
    return out;
}

SecondOrderAdjoint solve_second_order(const ModelCoefficients& coeffs, const CostSpec& cost,
                                      const FbsdeSolution& sol, const MultiplierPair& mult,
                                      AdjointVariant variant, std::optional<SolverTag> method,
                                      const PathEnsemble* ensemble, int basis_degree) {
    const std::size_t N = sol.grid.n_steps;
    const std::size_t n = sol.n_paths;
    const double dt = sol.grid.dt();
    const double theta = variant_theta(mult, variant);

    const bool deterministic_u = sol.u.kind() == ControlProcess::Kind::DeterministicGrid;
    const bool ode_ok = deterministic_u && cost.poly && l_second_deterministic(*cost.poly) &&
                        cost.poly->max_deg_phi() <= 2;
    const SolverTag tag = method.value_or(ode_ok ? SolverTag::ClosedForm : SolverTag::Lsmc);

    SecondOrderAdjoint out;
    out.variant = variant;

    if (tag == SolverTag::ClosedForm) {
        if (!ode_ok)
            throw UnsupportedControlError(
                "deterministic second-order solve needs deterministic second derivatives; "
                "use the lsmc method");
        std::vector<double> P1(N + 1), P2(N + 1), P3(N + 1);
        const double phi_xx = cost.poly->phi_d(0.0, 2);
        std::array<double, 3> s{0.0, 0.0, theta * phi_xx};  // (P3, P2, P1)
        P3[N] = s[0];
        P2[N] = s[1];
        P1[N] = s[2];
        for (std::size_t i = N; i-- > 0;) {
            const auto cv = coeffs.at(sol.grid.time(i));
            const double ui = sol.u.value(0, i);
            const double t_any = sol.grid.time(i);
            const double lyy = cost.l_yy(t_any, 0.0, 0.0, ui);
            const double lxy = cost.l_xy(t_any, 0.0, 0.0, ui);
            const double lxx = cost.l_xx(t_any, 0.0, 0.0, ui);
            auto rhs = [&](double, const std::array<double, 3>& v) {
                return std::array<double, 3>{
                    2 * cv.b * v[0] + theta * lyy,
                    -(cv.A - cv.b) * v[1] + cv.a * v[0] + theta * lxy,
                    -(2 * cv.A + cv.C * cv.C) * v[2] + 2 * cv.a * v[1] + theta * lxx};
            };
            s = detail::rk4_step<3>(rhs, sol.grid.time(i + 1), s, -dt);
            P3[i] = s[0];
            P2[i] = s[1];
            P1[i] = s[2];
        }
        out.P1 = StepValues::broadcast(std::move(P1));
        out.P2 = StepValues::broadcast(std::move(P2));
        out.P3 = StepValues::broadcast(std::move(P3));
        out.Q1 = StepValues::broadcast(std::vector<double>(N, 0.0));
        out.Q2 = StepValues::broadcast(std::vector<double>(N, 0.0));
        out.Q3 = StepValues::broadcast(std::vector<double>(N, 0.0));
        out.deterministic = true;
        return out;
    }

    if (ensemble == nullptr)
        throw std::invalid_argument("lsmc second-order solve needs the ensemble");
    out.deterministic = false;
    const PathMatrix w = ensemble->cumulative();
    CrossSectionRegression reg(basis_degree, n);

    PathMatrix P1(n, N + 1), P2(n, N + 1), P3(n, N + 1);
    PathMatrix Q1(n, N), Q2(n, N), Q3(n, N);
    for (std::size_t p = 0; p < n; ++p) P1(p, N) = theta * cost.phi_xx(sol.x(p, N));

    std::vector<double> xi(n), wi(n), regressand(n);
    auto centered_q = [&](const PathMatrix& P, std::size_t i, PathMatrix& Q) {
        for (std::size_t p = 0; p < n; ++p) regressand[p] = P(p, i + 1);
        const std::vector<double> cont = reg.fit(regressand);
        for (std::size_t p = 0; p < n; ++p)
            regressand[p] = (P(p, i + 1) - cont[p]) * ensemble->dW(p, i) / dt;
        const std::vector<double> qfit = reg.fit(regressand);
        for (std::size_t p = 0; p < n; ++p) Q(p, i) = qfit[p];
    };

    for (std::size_t i = N; i-- > 0;) {
        const double t = sol.grid.time(i);
        const auto cv = coeffs.at(t);
        for (std::size_t p = 0; p < n; ++p) {
            xi[p] = sol.x(p, i);
            wi[p] = w(p, i);
        }
        reg.set_features(xi, wi, i);

        centered_q(P3, i, Q3);
        for (std::size_t p = 0; p < n; ++p) {
            const double lyy = cost.l_yy(t, sol.x(p, i), sol.y(p, i), sol.u_at(p, i));
            regressand[p] = P3(p, i + 1) + (-2 * cv.b * P3(p, i + 1) - theta * lyy) * dt;
        }
        {
            const std::vector<double> fit = reg.fit(regressand);
            for (std::size_t p = 0; p < n; ++p) P3(p, i) = fit[p];
        }

        centered_q(P2, i, Q2);
        for (std::size_t p = 0; p < n; ++p) {
            const double lxy = cost.l_xy(t, sol.x(p, i), sol.y(p, i), sol.u_at(p, i));
            regressand[p] = P2(p, i + 1) + (cv.A * P2(p, i + 1) + cv.C * Q2(p, i) -
                                            cv.a * P3(p, i) - cv.b * P2(p, i + 1) - theta * lxy) *
                                               dt;
        }
        {
            const std::vector<double> fit = reg.fit(regressand);
            for (std::size_t p = 0; p < n; ++p) P2(p, i) = fit[p];
        }

        centered_q(P1, i, Q1);
        for (std::size_t p = 0; p < n; ++p) {
            const double lxx = cost.l_xx(t, sol.x(p, i), sol.y(p, i), sol.u_at(p, i));
            regressand[p] =
                P1(p, i + 1) + ((2 * cv.A + cv.C * cv.C) * P1(p, i + 1) + 2 * cv.C * Q1(p, i) -
                                2 * cv.a * P2(p, i) - theta * lxx) *
                                   dt;
        }
        {
            const std::vector<double> fit = reg.fit(regressand);
            for (std::size_t p = 0; p < n; ++p) P1(p, i) = fit[p];
        }
    }
    out.P1 = StepValues::per_path(std::move(P1));
    out.P2 = StepValues::per_path(std::move(P2));
    out.P3 = StepValues::per_path(std::move(P3));
    out.Q1 = StepValues::per_path(std::move(Q1));
    out.Q2 = StepValues::per_path(std::move(Q2));
    out.Q3 = StepValues::per_path(std::move(Q3));
    return out;
}

AdjointBundle solve_adjoints(const ModelCoefficients& coeffs, const CostSpec& cost,
                             const FbsdeSolution& sol, const MultiplierPair& mult,
                             AdjointVariant variant, std::optional<SolverTag> method,
                             const PathEnsemble* ensemble, int basis_degree) {
    AdjointBundle out;
    out.mult = mult;
    out.variant = variant;
    PathMatrix q = solve_q_forward(coeffs, cost, sol, mult, variant);
    out.first = solve_pk_backward(coeffs, cost, sol, mult, q, variant, method, ensemble,
                                  basis_degree);
    out.second =
        solve_second_order(coeffs, cost, sol, mult, variant, method, ensemble, basis_degree);
    return out;
}

DualityReport duality_check(const ModelCoefficients& coeffs, const CostSpec& cost,
                            const FbsdeSolution& sol_ref, const FbsdeSolution& sol_other,
                            const AdjointBundle& adjoints, const PathEnsemble& ensemble) {
    if (sol_ref.n_paths != sol_other.n_paths || !(sol_ref.grid == sol_other.grid) ||
        sol_ref.seed != sol_other.seed)
        throw IncompatibilityError("duality_check: solutions live on different ensembles");
    const std::size_t N = ensemble.grid().n_steps;
    const std::size_t n = ensemble.n_paths();
    const double dt = ensemble.grid().dt();
    const double theta = variant_theta(adjoints.mult, adjoints.variant);

    std::vector<double> lhs1(n), rhs1(n), lhs2(n), rhs2(n), d1(n), d2(n);
    for (std::size_t p = 0; p < n; ++p) {
        const auto& F = adjoints.first;
        const double dxN = sol_ref.x(p, N) - sol_other.x(p, N);
        const double mterm = adjoints.variant == AdjointVariant::Necessary
                                 ? coeffs.M * adjoints.mult.theta1(sol_ref.x(p, N))
                                 : coeffs.M * F.q(p, N);
        lhs1[p] = theta * cost.phi_x(sol_ref.x(p, N)) * dxN;
        lhs2[p] = theta * cost.gamma_y(sol_ref.y(p, 0)) * (sol_ref.y(p, 0) - sol_other.y(p, 0));

        double acc1 = 0.0, acc2 = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double t = ensemble.grid().time(i);
            const auto cv = coeffs.at(t);
            const double dx = sol_ref.x(p, i) - sol_other.x(p, i);
            const double dy = sol_ref.y(p, i) - sol_other.y(p, i);
            const double du = sol_ref.u_at(p, i) - sol_other.u_at(p, i);
            const double lx = cost.l_x(t, sol_ref.x(p, i), sol_ref.y(p, i), sol_ref.u_at(p, i));
            const double ly = cost.l_y(t, sol_ref.x(p, i), sol_ref.y(p, i), sol_ref.u_at(p, i));
            // H'_x-grouped integrand; diffusion products pair against k
            acc1 += ((-cv.A * F.p(p, i) + cv.a * F.q(p, i) - cv.C * F.k(p, i) - theta * lx) * dx +
                     F.p(p, i) * (cv.A * dx + cv.B * du) + F.k(p, i) * (cv.C * dx + cv.D * du)) *
                    dt;
            // H'_y-grouped integrand with the Ito drift correction -2 b q dy
            acc2 += ((cv.b * F.q(p, i) - theta * ly) * dy +
                     F.q(p, i) * (-cv.a * dx - cv.b * dy - cv.c * du) -
                     2.0 * cv.b * F.q(p, i) * dy) *
                    dt;
        }
        rhs1[p] = acc1 + mterm * dxN;
        rhs2[p] = acc2 + F.q(p, N) * (sol_other.y(p, N) - sol_ref.y(p, N));
        d1[p] = lhs1[p] - rhs1[p];
        d2[p] = lhs2[p] - rhs2[p];
    }
    DualityReport r;
    r.lhs_state = mean_and_se(lhs1).mean;
    r.rhs_state = mean_and_se(rhs1).mean;
    const auto m1 = mean_and_se(d1);
    r.gap_state = std::abs(m1.mean);
    r.se_state = m1.std_error;
    r.lhs_value = mean_and_se(lhs2).mean;
    r.rhs_value = mean_and_se(rhs2).mean;
    const auto m2 = mean_and_se(d2);
    r.gap_value = std::abs(m2.mean);
    r.se_value = m2.std_error;
    return r;
}

std::string adjoints_to_csv(const AdjointBundle& bundle, const TimeGrid& grid,
                            std::size_t n_paths) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "path,t,p,q,k,P1,P2,P3,Q1,Q2,Q3\n";
    const std::size_t N = grid.n_steps;
    for (std::size_t p = 0; p < n_paths; ++p) {
        for (std::size_t i = 0; i <= N; ++i) {
            const std::size_t cell = i < N ? i : N - 1;
            os << p << ',' << grid.time(i) << ',' << bundle.first.p(p, i) << ','
               << bundle.first.q(p, i) << ',' << bundle.first.k(p, cell) << ','
               << bundle.second.P1.at(p, i) << ',' << bundle.second.P2.at(p, i) << ','
               << bundle.second.P3.at(p, i) << ',' << bundle.second.Q1.at(p, cell) << ','
               << bundle.second.Q2.at(p, cell) << ',' << bundle.second.Q3.at(p, cell) << '\n';
        }
    }
    return os.str();
}

}  // namespace fbsde
