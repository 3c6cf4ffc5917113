#include "fbsde/certify.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace fbsde {

double hamiltonian(double t, double x, double y, double u, double p, double q, double k,
                   double theta, const ModelCoefficients& coeffs, const CostSpec& cost) {
    const auto cv = coeffs.at(t);
    return p * (cv.A * x + cv.B * u) - q * (cv.a * x + cv.b * y + cv.c * u) +
           k * (cv.C * x + cv.D * u) + theta * cost.l(t, x, y, u);
}

double hamiltonian_prime(double t, double x, double y, double u, double p, double q, double k,
                         const ModelCoefficients& coeffs, const CostSpec& cost) {
    const auto cv = coeffs.at(t);
    return -p * (cv.A * x + cv.B * u) + q * (cv.a * x + cv.b * y + cv.c * u) -
           k * (cv.C * x + cv.D * u) - cost.l(t, x, y, u);
}

double script_h(double t, double x_ref, double y_ref, double u_ref, double u, double p,
                double q, double k, double P1, const ModelCoefficients& coeffs,
                const CostSpec& cost) {
    const auto cv = coeffs.at(t);
    const double k_shift = k - P1 * (cv.C * x_ref + cv.D * u_ref);
    const double sig = cv.C * x_ref + cv.D * u;
    return hamiltonian_prime(t, x_ref, y_ref, u, p, q, k_shift, coeffs, cost) -
           0.5 * sig * sig * P1;
}

namespace {

std::vector<double> control_grid(const ControlSet& uset, std::size_t size) {
    if (size < 2) throw std::invalid_argument("u-grid needs at least 2 points");
    std::vector<double> g(size);
    for (std::size_t j = 0; j < size; ++j)
        g[j] = uset.lower + uset.width() * static_cast<double>(j) / static_cast<double>(size - 1);
    return g;
}

// Coarse scan plus one local refinement pass; ties break toward smaller u.
template <typename F>
double grid_extremum(const F& f, const std::vector<double>& grid, bool minimize,
                     double* arg = nullptr) {
    std::size_t best = 0;
    double fb = f(grid[0]);
    for (std::size_t j = 1; j < grid.size(); ++j) {
        const double v = f(grid[j]);
        if (minimize ? v < fb : v > fb) {
            fb = v;
            best = j;
        }
    }
    const double lo = grid[best > 0 ? best - 1 : 0];
    const double hi = grid[best + 1 < grid.size() ? best + 1 : grid.size() - 1];
    double ba = grid[best];
    if (hi > lo) {
        const std::size_t m = grid.size();
        for (std::size_t j = 0; j < m; ++j) {
            const double u = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(m - 1);
            const double v = f(u);
            if (minimize ? v < fb : v > fb) {
                fb = v;
                ba = u;
            }
        }
    }
    if (arg) *arg = ba;
    return fb;
}

}  // namespace

Certificate necessary_residual(const ModelCoefficients& coeffs, const CostSpec& cost,
                               const ControlSet& uset, const FbsdeSolution& sol,
                               const MultiplierPair& mult, const AdjointBundle& adjoints,
                               const PathEnsemble& ensemble, double epsilon, double beta,
                               std::size_t u_grid_size, double ceiling) {
    if (adjoints.variant != AdjointVariant::Necessary)
        throw std::invalid_argument("necessary_residual needs necessary-variant adjoints");
    if (!(beta >= 0.0 && beta < 1.0 / 3.0))
        throw std::invalid_argument("necessary_residual: beta must lie in [0, 1/3)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("necessary_residual: epsilon must be > 0");

    const std::size_t N = sol.grid.n_steps;
    const std::size_t n = sol.n_paths;
    const double dt = sol.grid.dt();
    const auto ug = control_grid(uset, u_grid_size);

    Certificate cert;
    cert.kind = CertificateKind::Necessary;
    cert.epsilon = epsilon;
    cert.beta = beta;
    cert.ceiling = ceiling;
    cert.profile.assign(N, 0.0);

    std::vector<double> per_path(n);
    for (std::size_t p = 0; p < n; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double t = sol.grid.time(i);
            const auto cv = coeffs.at(t);
            const double x = sol.x(p, i), y = sol.y(p, i), ue = sol.u_at(p, i);
            const double pv = adjoints.first.p(p, i);
            const double qv = adjoints.first.q(p, i);
            const double kv = adjoints.first.k(p, i);
            const double P1 = adjoints.second.P1.at(p, i);
            const double l_ref = cost.l(t, x, y, ue);
            auto integrand = [&](double u) {
                const double du = u - ue;
                return pv * cv.B * du + kv * cv.D * du - qv * cv.c * du +
                       mult.theta0 * (cost.l(t, x, y, u) - l_ref) +
                       0.5 * cv.D * cv.D * du * du * P1;
            };
            const double mn = grid_extremum(integrand, ug, /*minimize=*/true);
            acc += mn * dt;
            cert.profile[i] += mn / static_cast<double>(n);
        }
        per_path[p] = acc;
    }
    const auto ms = mean_and_se(per_path);
    cert.residual = ms.mean;
    cert.residual_se = ms.std_error;

    const double scale = std::pow(epsilon, beta);
    if (mult.theta0 > 0.0) {
        cert.fitted_constant = std::max(0.0, -cert.residual) / (mult.theta0 * scale);
    } else if (cert.residual < 0.0) {
        cert.warning = "theta0 = 0 with a negative residual: the inequality is uninformative";
    }
    cert.verdict = cert.residual >= -ceiling * mult.theta0 * scale;
    return cert;
}

namespace {

// Sampled hypothesis probes for the sufficient certificate. Each failure
// names the probe in the thrown message.
void probe_h3(const ModelCoefficients& coeffs, const CostSpec& cost, const ControlSet& uset,
              const FbsdeSolution& sol, const AdjointBundle& adjoints, double probe_box) {
    if (!uset.convex)
        throw HypothesisViolatedError("sufficient_check: control set is not convex");

    std::mt19937_64 rng(0xc0ffee);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw_u = [&] { return uset.lower + unit(rng) * uset.width(); };
    auto draw_box = [&] { return (2.0 * unit(rng) - 1.0) * probe_box; };

    // (H3)(ii): l and l_u Lipschitz in u, constant not growing with (x,y)
    double sup_inner = 0.0, sup_full = 0.0;
    for (int s = 0; s < 400; ++s) {
        const double t = unit(rng), x = draw_box(), y = draw_box();
        const double u1 = draw_u(), u2 = draw_u();
        if (std::abs(u1 - u2) < 1e-9) continue;
        const double r =
            (std::abs(cost.l(t, x, y, u1) - cost.l(t, x, y, u2)) +
             std::abs(cost.l_u(t, x, y, u1) - cost.l_u(t, x, y, u2))) / std::abs(u1 - u2);
        sup_full = std::max(sup_full, r);
        if (std::abs(x) <= probe_box / 2 && std::abs(y) <= probe_box / 2)
            sup_inner = std::max(sup_inner, r);
    }
    if (sup_full > 1.5 * sup_inner + 1e-9)
        throw HypothesisViolatedError(
            "sufficient_check: Lipschitz-in-u constant of l grows across the probe box");

    // concavity of H'(t, x, y, u) along sampled states and directions
    const std::size_t n = sol.n_paths;
    const std::size_t N = sol.grid.n_steps;
    for (int s = 0; s < 200; ++s) {
        const std::size_t p = static_cast<std::size_t>(unit(rng) * static_cast<double>(n)) % n;
        const std::size_t i = static_cast<std::size_t>(unit(rng) * static_cast<double>(N)) % N;
        const double t = sol.grid.time(i);
        const double x = sol.x(p, i), y = sol.y(p, i);
        const double u = draw_u();
        const double pv = adjoints.first.p(p, i), qv = adjoints.first.q(p, i),
                     kv = adjoints.first.k(p, i);
        double dx = 2 * unit(rng) - 1, dy = 2 * unit(rng) - 1, du = 2 * unit(rng) - 1;
        const double nrm = std::sqrt(dx * dx + dy * dy + du * du);
        dx /= nrm;
        dy /= nrm;
        du /= nrm;
        const double h = 1e-3;
        auto f = [&](double w) {
            return hamiltonian_prime(t, x + w * dx, y + w * dy, u + w * du, pv, qv, kv, coeffs,
                                     cost);
        };
        const double second = f(h) - 2.0 * f(0.0) + f(-h);
        if (second > 1e-7 * (1.0 + std::abs(f(0.0))))
            throw HypothesisViolatedError(
                "sufficient_check: H' fails the concavity probe in (x,y,u)");
    }

    // convexity of phi and gamma
    for (int s = 0; s < 200; ++s) {
        const double v = draw_box();
        const double h = 1e-3 * (1.0 + std::abs(v));
        const double d2phi = cost.phi(v + h) - 2 * cost.phi(v) + cost.phi(v - h);
        const double d2gam = cost.gamma(v + h) - 2 * cost.gamma(v) + cost.gamma(v - h);
        if (d2phi < -1e-7 * (1.0 + std::abs(cost.phi(v))))
            throw HypothesisViolatedError("sufficient_check: phi fails the convexity probe");
        if (d2gam < -1e-7 * (1.0 + std::abs(cost.gamma(v))))
            throw HypothesisViolatedError("sufficient_check: gamma fails the convexity probe");
    }
}

}  // namespace

Certificate sufficient_check(const ModelCoefficients& coeffs, const CostSpec& cost,
                             const ControlSet& uset, const FbsdeSolution& sol,
                             const AdjointBundle& adjoints, const PathEnsemble& ensemble,
                             double epsilon, std::size_t u_grid_size, double ceiling,
                             double probe_box) {
    if (adjoints.variant != AdjointVariant::Sufficient)
        throw std::invalid_argument("sufficient_check needs sufficient-variant adjoints");
    if (!(epsilon > 0.0)) throw std::invalid_argument("sufficient_check: epsilon must be > 0");

    probe_h3(coeffs, cost, uset, sol, adjoints, probe_box);

    const std::size_t N = sol.grid.n_steps;
    const std::size_t n = sol.n_paths;
    const double dt = sol.grid.dt();
    const auto ug = control_grid(uset, u_grid_size);

    Certificate cert;
    cert.kind = CertificateKind::Sufficient;
    cert.epsilon = epsilon;
    cert.ceiling = ceiling;
    cert.profile.assign(N, 0.0);

    std::vector<double> per_path(n);
    for (std::size_t p = 0; p < n; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double t = sol.grid.time(i);
            const double x = sol.x(p, i), y = sol.y(p, i), ue = sol.u_at(p, i);
            const double pv = adjoints.first.p(p, i);
            const double qv = adjoints.first.q(p, i);
            const double kv = adjoints.first.k(p, i);
            const double P1 = adjoints.second.P1.at(p, i);
            auto h = [&](double u) {
                return script_h(t, x, y, ue, u, pv, qv, kv, P1, coeffs, cost);
            };
            const double sup = grid_extremum(h, ug, /*minimize=*/false);
            const double spread = h(ue) - sup;  // <= 0
            acc += spread * dt;
            cert.profile[i] += spread / static_cast<double>(n);
        }
        per_path[p] = acc;
    }
    const auto ms = mean_and_se(per_path);
    cert.residual = ms.mean;  // the margin
    cert.residual_se = ms.std_error;
    cert.verdict = cert.residual >= -epsilon;
    cert.fitted_constant = std::max(0.0, -cert.residual) / epsilon;
    cert.implied_bound = std::sqrt(epsilon);
    cert.corollary_threshold = -(epsilon / ceiling) * (epsilon / ceiling);
    cert.corollary_verdict = cert.residual >= cert.corollary_threshold;
    return cert;
}

namespace {

struct ReducedEvaluator {
    const ModelCoefficients& coeffs;
    const CostSpec& cost;
    TimeGrid grid;

    std::optional<double> eval_const(double v) const {
        return deterministic_cost(coeffs, cost, grid, ControlProcess::constant(v));
    }
    double eval(const std::vector<double>& cells) const {
        auto r = deterministic_cost(coeffs, cost, grid, ControlProcess::grid(cells));
        return *r;
    }
};

}  // namespace

OptimalValue estimate_optimal_value(const ModelCoefficients& coeffs, const CostSpec& cost,
                                    const ControlSet& uset, const PathEnsemble& ensemble,
                                    std::size_t u_grid_size) {
    const TimeGrid grid = ensemble.grid();
    const std::size_t N = grid.n_steps;
    const auto ug = control_grid(uset, u_grid_size);

    OptimalValue out;
    out.caveat = "search restricted to deterministic piecewise-constant controls";

    const ReducedEvaluator red{coeffs, cost, grid};
    const bool reducible = red.eval_const(ug.front()).has_value();

    if (reducible) {
        // best constant control under the exact reduced cost
        double best_const = ug.front();
        grid_extremum([&](double v) { return *red.eval_const(v); }, ug, true, &best_const);

        // separability probe: per-cell perturbations must add up exactly
        std::vector<double> base(N, best_const);
        const double j0 = red.eval(base);
        bool separable = true;
        const std::size_t cells[3] = {0, N / 2, N - 1};
        const double vals[2] = {uset.lower, uset.upper};
        for (std::size_t ci = 0; ci < 3 && separable; ++ci) {
            for (std::size_t cj = ci + 1; cj < 3 && separable; ++cj) {
                if (cells[ci] == cells[cj]) continue;
                for (double vi : vals) {
                    for (double vj : vals) {
                        auto mod = base;
                        mod[cells[ci]] = vi;
                        const double ji = red.eval(mod);
                        mod = base;
                        mod[cells[cj]] = vj;
                        const double jj = red.eval(mod);
                        mod[cells[ci]] = vi;
                        const double jij = red.eval(mod);
                        if (std::abs(jij - (ji + jj - j0)) > 1e-9 * (1.0 + std::abs(j0))) {
                            separable = false;
                            break;
                        }
                    }
                    if (!separable) break;
                }
            }
        }

        std::vector<double> star = base;
        if (separable) {
            for (std::size_t i = 0; i < N; ++i) {
                auto mod = base;
                auto cell_cost = [&](double v) {
                    mod[i] = v;
                    return red.eval(mod);
                };
                double arg = best_const;
                grid_extremum(cell_cost, ug, true, &arg);
                star[i] = arg;
            }
            out.exact_pointwise = true;
        } else {
            out.caveat += "; reduced cost is not cell-separable, constant-control scan only";
        }
        out.u_star = ControlProcess::grid(star).clamped(uset);
        out.j_star_reduced = red.eval(star);
    } else {
        // Monte Carlo scan over constant controls with common random numbers
        auto mc_cost = [&](double v) {
            const auto sol = solve_fbsde(coeffs, ControlProcess::constant(v), ensemble);
            return evaluate_cost(cost, sol, ensemble).mean;
        };
        const auto coarse = control_grid(uset, std::min<std::size_t>(u_grid_size, 33));
        double best = coarse.front();
        grid_extremum(mc_cost, coarse, true, &best);
        out.u_star = ControlProcess::constant(best).clamped(uset);
        out.caveat += "; Monte Carlo constant-control scan (cost not reducible)";
    }

    const auto sol = solve_fbsde(coeffs, out.u_star, ensemble);
    out.j_star = evaluate_cost(cost, sol, ensemble);
    return out;
}

OrderFit near_optimality_order(const ModelCoefficients& coeffs, const CostSpec& cost,
                               const ControlSet& uset,
                               const std::function<ControlProcess(double)>& family,
                               const std::vector<double>& epsilons, const PathEnsemble& ensemble,
                               std::size_t u_grid_size) {
    if (epsilons.size() < 3)
        throw std::invalid_argument("near_optimality_order: need at least 3 epsilon values");
    {
        double lo = epsilons[0], hi = epsilons[0];
        for (double e : epsilons) {
            lo = std::min(lo, e);
            hi = std::max(hi, e);
        }
        if (hi < 10.0 * lo)
            throw std::invalid_argument("near_optimality_order: epsilons must span a decade");
    }

    const OptimalValue opt = estimate_optimal_value(coeffs, cost, uset, ensemble, u_grid_size);

    OrderFit fit;
    fit.epsilons = epsilons;
    for (double eps : epsilons) {
        const ControlProcess u_eps = family(eps);
        double gap, se;
        const auto reduced = deterministic_cost(coeffs, cost, ensemble.grid(), u_eps);
        if (reduced && opt.j_star_reduced) {
            gap = *reduced - *opt.j_star_reduced;
            se = 0.0;
        } else {
            const auto sol = solve_fbsde(coeffs, u_eps, ensemble);
            const auto j = evaluate_cost(cost, sol, ensemble);
            gap = j.mean - opt.j_star.mean;
            se = std::sqrt(j.std_error * j.std_error +
                           opt.j_star.std_error * opt.j_star.std_error);
        }
        fit.gaps.push_back(gap);
        fit.gap_ses.push_back(se);
        fit.included.push_back(gap > 3.0 * se && gap > 0.0);
        if (!fit.included.back())
            fit.note += "epsilon " + std::to_string(eps) + " excluded (gap within noise); ";
    }

    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < fit.gaps.size(); ++i) {
        if (!fit.included[i]) continue;
        lx.push_back(std::log(fit.epsilons[i]));
        ly.push_back(std::log(fit.gaps[i]));
    }
    if (lx.size() < 2) {
        fit.degenerate = true;
        fit.delta = std::numeric_limits<double>::infinity();
        fit.C = 0.0;
        fit.r2 = 0.0;
        fit.note += "degenerate fit: gaps vanish within noise; order +infinity by convention";
        return fit;
    }
    const double n = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
        syy += ly[i] * ly[i];
    }
    const double denom = n * sxx - sx * sx;
    fit.delta = (n * sxy - sx * sy) / denom;
    fit.C = std::exp((sy - fit.delta * sx) / n);
    const double ss_tot = syy - sy * sy / n;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double pred = fit.delta * lx[i] + (sy - fit.delta * sx) / n;
        ss_res += (ly[i] - pred) * (ly[i] - pred);
    }
    fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

}  // namespace fbsde
