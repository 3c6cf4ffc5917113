#include "fbsde/paths.hpp"

#include <cmath>
#include <random>

#include "fbsde/adjoint.hpp"

namespace fbsde {

PathEnsemble PathEnsemble::sample(const TimeGrid& grid, std::size_t n_paths,
                                  std::uint64_t seed) {
    if (n_paths == 0) throw std::invalid_argument("ensemble: need at least one path");
    PathEnsemble e;
    e.grid_ = grid;
    e.n_paths_ = n_paths;
    e.seed_ = seed;
    e.increments_ = PathMatrix(n_paths, grid.n_steps);
    const double sqrt_dt = std::sqrt(grid.dt());
    for (std::size_t p = 0; p < n_paths; ++p) {
        // substream seed from (seed, path): mix twice to decorrelate
        // neighbouring path indices.
        std::mt19937_64 eng(splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * (p + 1))));
        std::normal_distribution<double> normal(0.0, 1.0);
        auto row = e.increments_.row(p);
        for (std::size_t i = 0; i < grid.n_steps; ++i) row[i] = sqrt_dt * normal(eng);
    }
    return e;
}

PathEnsemble PathEnsemble::from_increments(const TimeGrid& grid, PathMatrix increments,
                                           std::uint64_t seed_tag) {
    if (increments.cols() != grid.n_steps)
        throw IncompatibilityError("ensemble: increment columns do not match the grid");
    PathEnsemble e;
    e.grid_ = grid;
    e.n_paths_ = increments.rows();
    e.seed_ = seed_tag;
    e.increments_ = std::move(increments);
    return e;
}

PathMatrix PathEnsemble::cumulative() const {
    PathMatrix w(n_paths_, grid_.n_steps + 1);
    for (std::size_t p = 0; p < n_paths_; ++p) {
        double acc = 0.0;
        w(p, 0) = 0.0;
        for (std::size_t i = 0; i < grid_.n_steps; ++i) {
            acc += increments_(p, i);
            w(p, i + 1) = acc;
        }
    }
    return w;
}

ControlProcess spike_variation(const ControlProcess& u, const SpikeSpec& spec,
                               const TimeGrid& grid) {
    const std::size_t n = grid.n_steps;
    auto in_patch = [&](std::size_t cell) {
        const double m = grid.midpoint(cell);
        return m >= spec.tau && m <= spec.tau + spec.alpha;
    };
    switch (u.kind()) {
        case ControlProcess::Kind::DeterministicGrid: {
            std::vector<double> vals(n);
            for (std::size_t i = 0; i < n; ++i)
                vals[i] = in_patch(i) ? spec.patch_value : u.value(0, i);
            auto out = ControlProcess::grid(std::move(vals));
            return u.clamp_set() ? out.clamped(*u.clamp_set()) : out;
        }
        case ControlProcess::Kind::PathIndexed: {
            PathMatrix vals(u.n_paths(), n);
            for (std::size_t p = 0; p < u.n_paths(); ++p)
                for (std::size_t i = 0; i < n; ++i)
                    vals(p, i) = in_patch(i) ? spec.patch_value : u.value(p, i);
            auto out = ControlProcess::path_indexed(std::move(vals));
            if (u.realized_from_feedback()) out = out.tagged_from_feedback();
            return u.clamp_set() ? out.clamped(*u.clamp_set()) : out;
        }
        case ControlProcess::Kind::Feedback:
            throw UnsupportedControlError(
                "spike variation needs stored control values; realize the feedback control first");
    }
    throw UnsupportedControlError("spike variation: unknown control kind");
}

namespace {

void check_metric_operand(const ControlProcess& u, const PathEnsemble& ensemble,
                          const char* which) {
    if (u.kind() == ControlProcess::Kind::Feedback)
        throw UnsupportedControlError(std::string(which) +
                                      ": feedback controls must be realized via solve_forward");
    const std::size_t cells = u.n_cells();
    if (cells != 1 && cells != ensemble.grid().n_steps)
        throw IncompatibilityError(std::string(which) + ": control grid does not match ensemble");
    if (u.kind() == ControlProcess::Kind::PathIndexed && u.n_paths() != ensemble.n_paths())
        throw IncompatibilityError(std::string(which) + ": control paths do not match ensemble");
}

}  // namespace

double ekeland_distance(const ControlProcess& u, const ControlProcess& v,
                        const PathEnsemble& ensemble, std::optional<double> tol) {
    check_metric_operand(u, ensemble, "ekeland_distance");
    check_metric_operand(v, ensemble, "ekeland_distance");
    const double eps = tol.value_or(
        (u.realized_from_feedback() || v.realized_from_feedback()) ? 1e-12 : 0.0);
    const std::size_t n_steps = ensemble.grid().n_steps;
    const bool pathwise = u.kind() == ControlProcess::Kind::PathIndexed ||
                          v.kind() == ControlProcess::Kind::PathIndexed;
    const std::size_t n_paths = pathwise ? ensemble.n_paths() : 1;
    std::size_t count = 0;
    for (std::size_t p = 0; p < n_paths; ++p)
        for (std::size_t i = 0; i < n_steps; ++i)
            if (std::abs(u.value(p, i) - v.value(p, i)) > eps) ++count;
    return static_cast<double>(count) /
           (static_cast<double>(n_steps) * static_cast<double>(n_paths));
}

double weighted_distance(const ControlProcess& u, const ControlProcess& v,
                         const WeightProcess& w, const PathEnsemble& ensemble) {
    check_metric_operand(u, ensemble, "weighted_distance");
    check_metric_operand(v, ensemble, "weighted_distance");
    const std::size_t n_steps = ensemble.grid().n_steps;
    const std::size_t n_paths = ensemble.n_paths();
    if (w.w.rows() != n_paths || w.w.cols() != n_steps)
        throw IncompatibilityError("weighted_distance: weight shape does not match ensemble");
    const double dt = ensemble.grid().dt();
    std::vector<double> per_path(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n_steps; ++i)
            acc += w.w(p, i) * std::abs(u.value(p, i) - v.value(p, i));
        per_path[p] = acc * dt;
    }
    return mean_and_se(per_path).mean;
}

WeightProcess build_weight(const AdjointBundle& adjoints, const FbsdeSolution& solution) {
    const std::size_t n_paths = solution.n_paths;
    const std::size_t n_steps = solution.grid.n_steps;
    WeightProcess out{PathMatrix(n_paths, n_steps)};
    const auto& p = adjoints.first.p;
    const auto& q = adjoints.first.q;
    const auto& k = adjoints.first.k;
    for (std::size_t pa = 0; pa < n_paths; ++pa) {
        for (std::size_t i = 0; i < n_steps; ++i) {
            const double P1 = adjoints.second.P1.at(pa, i);
            out.w(pa, i) = 1.0 + std::abs(p(pa, i)) + std::abs(q(pa, i)) + std::abs(k(pa, i)) +
                           std::abs(P1) + std::abs(P1) * std::abs(solution.x(pa, i));
        }
    }
    return out;
}

}  // namespace fbsde
