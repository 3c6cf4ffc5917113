#include "fbsde/solver.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "fbsde/regression.hpp"

namespace fbsde {

namespace {

// One classical 4th-order step of an autonomous RHS (coefficients are frozen
// per cell, consistent with the piecewise-constant tables).
template <std::size_t K, typename F>
std::array<double, K> rk4_step(const F& f, const std::array<double, K>& s, double h) {
    auto add = [](const std::array<double, K>& a, const std::array<double, K>& b, double w) {
        std::array<double, K> r;
        for (std::size_t i = 0; i < K; ++i) r[i] = a[i] + w * b[i];
        return r;
    };
    const auto k1 = f(s);
    const auto k2 = f(add(s, k1, h / 2));
    const auto k3 = f(add(s, k2, h / 2));
    const auto k4 = f(add(s, k3, h));
    std::array<double, K> out;
    for (std::size_t i = 0; i < K; ++i)
        out[i] = s[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return out;
}

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

// raw moments of N(m, V): M_n = m M_{n-1} + (n-1) V M_{n-2}
std::vector<double> gaussian_moments(double m, double V, int up_to) {
    std::vector<double> M(static_cast<std::size_t>(up_to) + 1);
    M[0] = 1.0;
    if (up_to >= 1) M[1] = m;
    for (int n = 2; n <= up_to; ++n)
        M[static_cast<std::size_t>(n)] = m * M[static_cast<std::size_t>(n - 1)] +
                                         (n - 1) * V * M[static_cast<std::size_t>(n - 2)];
    return M;
}

}  // namespace

ForwardPaths solve_forward(const ModelCoefficients& coeffs, const ControlProcess& u,
                           const PathEnsemble& ensemble) {
    const auto& grid = ensemble.grid();
    const std::size_t N = grid.n_steps;
    const std::size_t n = ensemble.n_paths();
    const double dt = grid.dt();

    ForwardPaths out;
    out.x = PathMatrix(n, N + 1);

    const bool is_feedback = u.kind() == ControlProcess::Kind::Feedback;
    PathMatrix realized;
    if (is_feedback) realized = PathMatrix(n, N);
    if (!is_feedback && u.n_cells() != 1 && u.n_cells() != N)
        throw IncompatibilityError("solve_forward: control grid does not match ensemble");
    if (u.kind() == ControlProcess::Kind::PathIndexed && u.n_paths() != n)
        throw IncompatibilityError("solve_forward: control paths do not match ensemble");

    for (std::size_t p = 0; p < n; ++p) {
        double x = coeffs.x0;
        out.x(p, 0) = x;
        for (std::size_t i = 0; i < N; ++i) {
            const double t = grid.time(i);
            const auto cv = coeffs.at(t);
            double ui;
            if (is_feedback) {
                // the backward component is not available during the forward
                // sweep; feedback rules see y = 0 here
                ui = u.eval_feedback(t, x, 0.0);
                realized(p, i) = ui;
            } else {
                ui = u.value(p, i);
            }
            x += (cv.A * x + cv.B * ui) * dt + (cv.C * x + cv.D * ui) * ensemble.dW(p, i);
            if (!std::isfinite(x)) {
                std::ostringstream os;
                os << "forward state diverged at step " << (i + 1) << " (t=" << grid.time(i + 1)
                   << ", path " << p << ")";
                throw DivergenceError(os.str(), i + 1);
            }
            out.x(p, i + 1) = x;
        }
    }

    if (is_feedback) {
        out.u = ControlProcess::path_indexed(std::move(realized)).tagged_from_feedback();
        if (u.clamp_set()) out.u = out.u.clamped(*u.clamp_set());
    } else {
        out.u = u;
    }
    return out;
}

namespace {

struct AffineAnsatz {
    std::vector<double> alpha;  // node values
    std::vector<double> beta;
};

AffineAnsatz compute_affine_ansatz(const ModelCoefficients& coeffs, const ControlProcess& u,
                                   const TimeGrid& grid) {
    const std::size_t N = grid.n_steps;
    AffineAnsatz out;
    out.alpha.assign(N + 1, 0.0);
    out.beta.assign(N + 1, 0.0);
    out.alpha[N] = coeffs.M;
    out.beta[N] = 0.0;
    std::array<double, 2> s{coeffs.M, 0.0};
    for (std::size_t i = N; i-- > 0;) {
        const auto cv = coeffs.at(grid.time(i));  // frozen on the cell
        const double ui = u.value(0, i);
        auto rhs = [&](const std::array<double, 2>& v) {
            return std::array<double, 2>{-(cv.A + cv.b) * v[0] - cv.a,
                                         -cv.b * v[1] - (cv.c + v[0] * cv.B) * ui};
        };
        s = rk4_step<2>(rhs, s, -grid.dt());
        out.alpha[i] = s[0];
        out.beta[i] = s[1];
    }
    return out;
}

}  // namespace

ClosedFormBackward solve_backward_closed_form(const ModelCoefficients& coeffs,
                                              const ControlProcess& u, const PathMatrix& x,
                                              const PathEnsemble& ensemble) {
    if (u.kind() != ControlProcess::Kind::DeterministicGrid)
        throw UnsupportedControlError(
            "closed-form backward solver needs a deterministic control; use the lsmc solver");
    const auto& grid = ensemble.grid();
    const std::size_t N = grid.n_steps;
    const std::size_t n = ensemble.n_paths();
    if (x.rows() != n || x.cols() != N + 1)
        throw IncompatibilityError("solve_backward_closed_form: x shape mismatch");

    const AffineAnsatz an = compute_affine_ansatz(coeffs, u, grid);

    ClosedFormBackward out;
    out.alpha = an.alpha;
    out.beta = an.beta;
    out.y = PathMatrix(n, N + 1);
    out.z = PathMatrix(n, N);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t i = 0; i <= N; ++i)
            out.y(p, i) = an.alpha[i] * x(p, i) + an.beta[i];
        for (std::size_t i = 0; i < N; ++i) {
            const auto cv = coeffs.at(grid.time(i));
            out.z(p, i) = an.alpha[i] * (cv.C * x(p, i) + cv.D * u.value(0, i));
        }
    }
    return out;
}

LsmcBackward solve_backward_lsmc(const ModelCoefficients& coeffs, const ControlProcess& u,
                                 const PathMatrix& x, const PathEnsemble& ensemble,
                                 int basis_degree) {
    const auto& grid = ensemble.grid();
    const std::size_t N = grid.n_steps;
    const std::size_t n = ensemble.n_paths();
    const double dt = grid.dt();
    if (x.rows() != n || x.cols() != N + 1)
        throw IncompatibilityError("solve_backward_lsmc: x shape mismatch");

    LsmcBackward out;
    out.y = PathMatrix(n, N + 1);
    out.z = PathMatrix(n, N);

    // terminal layer: y_N = M x_N per path
    for (std::size_t p = 0; p < n; ++p) out.y(p, N) = coeffs.M * x(p, N);

    CrossSectionRegression reg(basis_degree, n);
    const PathMatrix w = ensemble.cumulative();

    std::vector<double> xi(n), wi(n), regressand(n);
    for (std::size_t i = N; i-- > 0;) {
        const double t = grid.time(i);
        const auto cv = coeffs.at(t);
        for (std::size_t p = 0; p < n; ++p) {
            xi[p] = x(p, i);
            wi[p] = w(p, i);
        }
        reg.set_features(xi, wi, i);

        // continuation value, then the martingale-increment estimate of z
        for (std::size_t p = 0; p < n; ++p) regressand[p] = out.y(p, i + 1);
        const std::vector<double> cont = reg.fit(regressand);
        for (std::size_t p = 0; p < n; ++p)
            regressand[p] = (out.y(p, i + 1) - cont[p]) * ensemble.dW(p, i) / dt;
        const std::vector<double> zfit = reg.fit(regressand);
        for (std::size_t p = 0; p < n; ++p) out.z(p, i) = zfit[p];

        // y_i from the driver regression (explicit in b y_{i+1})
        for (std::size_t p = 0; p < n; ++p)
            regressand[p] = out.y(p, i + 1) +
                            (cv.a * x(p, i) + cv.b * out.y(p, i + 1) + cv.c * u.value(p, i)) * dt;
        const std::vector<double> yfit = reg.fit(regressand);
        for (std::size_t p = 0; p < n; ++p) out.y(p, i) = yfit[p];
    }
    return out;
}

FbsdeSolution solve_fbsde(const ModelCoefficients& coeffs, const ControlProcess& u,
                          const PathEnsemble& ensemble, std::optional<SolverTag> method,
                          int basis_degree) {
    ForwardPaths fwd = solve_forward(coeffs, u, ensemble);
    const SolverTag tag = method.value_or(fwd.u.kind() == ControlProcess::Kind::DeterministicGrid
                                              ? SolverTag::ClosedForm
                                              : SolverTag::Lsmc);
    FbsdeSolution sol;
    sol.grid = ensemble.grid();
    sol.n_paths = ensemble.n_paths();
    sol.seed = ensemble.seed();
    sol.tag = tag;
    if (tag == SolverTag::ClosedForm) {
        auto bwd = solve_backward_closed_form(coeffs, fwd.u, fwd.x, ensemble);
        sol.y = std::move(bwd.y);
        sol.z = std::move(bwd.z);
    } else {
        auto bwd = solve_backward_lsmc(coeffs, fwd.u, fwd.x, ensemble, basis_degree);
        sol.y = std::move(bwd.y);
        sol.z = std::move(bwd.z);
    }
    sol.x = std::move(fwd.x);
    sol.u = std::move(fwd.u);
    return sol;
}

CostEstimate evaluate_cost(const CostSpec& cost, const FbsdeSolution& sol,
                           const PathEnsemble& ensemble) {
    if (sol.n_paths != ensemble.n_paths() || !(sol.grid == ensemble.grid()))
        throw IncompatibilityError("evaluate_cost: solution and ensemble are incompatible");
    const std::size_t N = sol.grid.n_steps;
    const double dt = sol.grid.dt();
    std::vector<double> per_path(sol.n_paths);
    for (std::size_t p = 0; p < sol.n_paths; ++p) {
        double run = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            run += cost.l(sol.grid.time(i), sol.x(p, i), sol.y(p, i), sol.u_at(p, i));
        per_path[p] = run * dt + cost.phi(sol.x(p, N)) + cost.gamma(sol.y(p, 0));
    }
    const auto ms = mean_and_se(per_path);
    return {ms.mean, ms.std_error, sol.n_paths};
}

std::optional<double> deterministic_cost(const ModelCoefficients& coeffs, const CostSpec& cost,
                                         const TimeGrid& grid, const ControlProcess& u) {
    if (!cost.poly || u.kind() != ControlProcess::Kind::DeterministicGrid) return std::nullopt;
    const PolynomialCost& poly = *cost.poly;
    const std::size_t N = grid.n_steps;

    // exactness class: the Euler iterates are Gaussian when C == 0 on the
    // grid; otherwise only the first two moments close, so polynomial
    // expectations are exact only up to degree 2
    bool c_zero = true;
    for (std::size_t i = 0; i < N; ++i)
        if (coeffs.C(grid.time(i)) != 0.0) c_zero = false;
    int need = 0;
    for (const auto& t : poly.running) need = std::max(need, t.px + t.py);
    need = std::max(need, poly.max_deg_phi());
    if (!c_zero && need > 2) return std::nullopt;

    const AffineAnsatz an = compute_affine_ansatz(coeffs, u, grid);

    // exact Euler moment recursion for x
    double m = coeffs.x0, ex2 = coeffs.x0 * coeffs.x0;
    const double dt = grid.dt();
    double total = 0.0;
    const int up_to = std::max(need, 2);
    for (std::size_t i = 0; i <= N; ++i) {
        const double V = std::max(0.0, ex2 - m * m);
        const auto M = gaussian_moments(m, V, up_to);
        if (i < N) {
            const double ui = u.value(0, i);
            const double alpha = an.alpha[i], beta = an.beta[i];
            double el = 0.0;
            for (const auto& term : poly.running) {
                double upow = 1.0;
                for (int j = 0; j < term.pu; ++j) upow *= ui;
                double exy = 0.0;  // E[x^px (alpha x + beta)^py]
                for (int r = 0; r <= term.py; ++r) {
                    double apow = 1.0, bpow = 1.0;
                    for (int j = 0; j < r; ++j) apow *= alpha;
                    for (int j = 0; j < term.py - r; ++j) bpow *= beta;
                    exy += binom(term.py, r) * apow * bpow *
                           M[static_cast<std::size_t>(term.px + r)];
                }
                el += term.coef * upow * exy;
            }
            total += el * dt;

            const auto cv = coeffs.at(grid.time(i));
            const double drift = 1.0 + cv.A * dt;
            const double sig_m = cv.C * m + cv.D * ui;
            const double next_m = drift * m + cv.B * ui * dt;
            const double next_ex2 = drift * drift * ex2 + 2.0 * drift * cv.B * ui * dt * m +
                                    cv.B * cv.B * ui * ui * dt * dt +
                                    (cv.C * cv.C * (ex2 - m * m) + sig_m * sig_m) * dt;
            m = next_m;
            ex2 = next_ex2;
        } else {
            for (const auto& term : poly.terminal)
                total += term.coef * M[static_cast<std::size_t>(term.power)];
        }
    }
    total += poly.gamma(an.alpha[0] * coeffs.x0 + an.beta[0]);
    return total;
}

StabilityReport stability_probe(const ModelCoefficients& coeffs, const ControlProcess& u,
                                const ControlProcess& u_tilde, const PathEnsemble& ensemble,
                                std::optional<SolverTag> method) {
    const FbsdeSolution s1 = solve_fbsde(coeffs, u, ensemble, method);
    const FbsdeSolution s2 = solve_fbsde(coeffs, u_tilde, ensemble, method);
    const std::size_t N = ensemble.grid().n_steps;
    const std::size_t n = ensemble.n_paths();
    const double dt = ensemble.grid().dt();

    std::vector<double> lhs_pair(n), rhs_pair(n), lhs_single(n), rhs_single_rand(n), s4x(n),
        s4y(n);
    for (std::size_t p = 0; p < n; ++p) {
        double sup_dx2 = 0, sup_dy2 = 0, int_dz2 = 0;
        double sup_x2 = 0, sup_y2 = 0, int_z2 = 0;
        double i_adx = 0, i_axy = 0, q_cxd = 0;
        double i_bu = 0, q_du = 0, i_cu = 0;
        for (std::size_t i = 0; i <= N; ++i) {
            const double dx = s1.x(p, i) - s2.x(p, i);
            const double dy = s1.y(p, i) - s2.y(p, i);
            sup_dx2 = std::max(sup_dx2, dx * dx);
            sup_dy2 = std::max(sup_dy2, dy * dy);
            sup_x2 = std::max(sup_x2, s1.x(p, i) * s1.x(p, i));
            sup_y2 = std::max(sup_y2, s1.y(p, i) * s1.y(p, i));
        }
        for (std::size_t i = 0; i < N; ++i) {
            const auto cv = coeffs.at(ensemble.grid().time(i));
            const double dx = s1.x(p, i) - s2.x(p, i);
            const double dy = s1.y(p, i) - s2.y(p, i);
            const double du = s1.u_at(p, i) - s2.u_at(p, i);
            const double dz = s1.z(p, i) - s2.z(p, i);
            int_dz2 += dz * dz * dt;
            int_z2 += s1.z(p, i) * s1.z(p, i) * dt;
            i_adx += std::abs(cv.A * dx + cv.B * du) * dt;
            i_axy += std::abs(cv.a * dx + cv.b * dy + cv.c * du) * dt;
            q_cxd += (cv.C * dx + cv.D * du) * (cv.C * dx + cv.D * du) * dt;
            i_bu += std::abs(cv.B * s1.u_at(p, i)) * dt;
            q_du += cv.D * s1.u_at(p, i) * cv.D * s1.u_at(p, i) * dt;
            i_cu += std::abs(cv.c * s1.u_at(p, i)) * dt;
        }
        lhs_pair[p] = sup_dx2 + sup_dy2 + int_dz2;
        const double dx1 = s1.x(p, N) - s2.x(p, N);
        rhs_pair[p] = coeffs.M * dx1 * coeffs.M * dx1 + i_adx * i_adx + i_axy * i_axy + q_cxd;
        lhs_single[p] = sup_x2 + sup_y2 + int_z2;
        rhs_single_rand[p] = i_bu * i_bu + q_du + i_cu * i_cu;
        s4x[p] = sup_x2 * sup_x2;
        s4y[p] = sup_y2 * sup_y2;
    }
    StabilityReport r;
    r.lhs_pair = mean_and_se(lhs_pair).mean;
    r.rhs_pair = mean_and_se(rhs_pair).mean;
    r.ratio_pair = r.rhs_pair > 0 ? r.lhs_pair / r.rhs_pair : (r.lhs_pair > 0 ? HUGE_VAL : 0.0);
    r.lhs_single = mean_and_se(lhs_single).mean;
    r.rhs_single = coeffs.x0 * coeffs.x0 + coeffs.M * coeffs.M + mean_and_se(rhs_single_rand).mean;
    r.ratio_single =
        r.rhs_single > 0 ? r.lhs_single / r.rhs_single : (r.lhs_single > 0 ? HUGE_VAL : 0.0);
    r.sup4_x = mean_and_se(s4x).mean;
    r.sup4_y = mean_and_se(s4y).mean;
    return r;
}

std::string solution_to_csv(const FbsdeSolution& sol) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "path,t,x,y,z,u\n";
    const std::size_t N = sol.grid.n_steps;
    for (std::size_t p = 0; p < sol.n_paths; ++p) {
        for (std::size_t i = 0; i <= N; ++i) {
            const std::size_t cell = i < N ? i : N - 1;
            os << p << ',' << sol.grid.time(i) << ',' << sol.x(p, i) << ',' << sol.y(p, i) << ','
               << sol.z(p, cell) << ',' << sol.u_at(p, cell) << '\n';
        }
    }
    return os.str();
}

}  // namespace fbsde
