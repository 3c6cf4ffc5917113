#pragma once

#include <cstdint>
#include <optional>

#include "fbsde/matrix.hpp"
#include "fbsde/model.hpp"

namespace fbsde {

/// Uniform grid 0 = t_0 < ... < t_N = 1.
struct TimeGrid {
    std::size_t n_steps = 1;

    explicit TimeGrid(std::size_t n) : n_steps(n) {
        if (n == 0) throw std::invalid_argument("time grid: need at least one step");
    }
    double dt() const { return 1.0 / static_cast<double>(n_steps); }
    double time(std::size_t i) const { return static_cast<double>(i) * dt(); }
    double midpoint(std::size_t cell) const { return (static_cast<double>(cell) + 0.5) * dt(); }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Brownian increments dW ~ N(0, dt), one independent substream per path
/// derived from (seed, path index) by a counter-based mix. Regenerable from
/// the seed; never persisted.
class PathEnsemble {
public:
    static PathEnsemble sample(const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed);

    /// Wraps externally built increments (convergence studies, refinements).
    static PathEnsemble from_increments(const TimeGrid& grid, PathMatrix increments,
                                        std::uint64_t seed_tag);

    const TimeGrid& grid() const { return grid_; }
    std::size_t n_paths() const { return n_paths_; }
    std::uint64_t seed() const { return seed_; }
    const PathMatrix& increments() const { return increments_; }
    double dW(std::size_t path, std::size_t cell) const { return increments_(path, cell); }

    /// Brownian path W at the grid nodes, [n_paths x (N+1)], W(0) = 0.
    PathMatrix cumulative() const;

    bool compatible(const PathEnsemble& o) const {
        return grid_ == o.grid_ && n_paths_ == o.n_paths_ && seed_ == o.seed_;
    }

private:
    TimeGrid grid_{1};
    std::size_t n_paths_ = 0;
    std::uint64_t seed_ = 0;
    PathMatrix increments_;
};

/// Spike patch: replace the control by patch_value on [tau, tau+alpha].
struct SpikeSpec {
    double tau = 0.0;
    double alpha = 0.0;
    double patch_value = 0.0;

    SpikeSpec(double tau_, double alpha_, double patch)
        : tau(tau_), alpha(alpha_), patch_value(patch) {
        if (!(tau >= 0.0 && tau < 1.0) || !(alpha > 0.0) || tau + alpha > 1.0 + 1e-12)
            throw std::domain_error("spike: [tau, tau+alpha] must lie inside [0,1]");
    }
};

/// Grid cells are assigned to the patch by cell midpoint, so the distance to
/// the spiked control is exactly the patched measure on grid-aligned spikes.
ControlProcess spike_variation(const ControlProcess& u, const SpikeSpec& spec,
                               const TimeGrid& grid);

/// Discretized control distance: (dt x P)-measure of {|u - v| > tol}.
/// Default tol is 0 for grid/path controls and 1e-12 when either side was
/// realized from a feedback rule.
double ekeland_distance(const ControlProcess& u, const ControlProcess& v,
                        const PathEnsemble& ensemble,
                        std::optional<double> tol = std::nullopt);

struct WeightProcess {
    PathMatrix w;  // [n_paths x N], >= 1 by construction of build_weight
};

/// Monte Carlo estimate of E int_0^1 w(t) |u(t) - v(t)| dt.
double weighted_distance(const ControlProcess& u, const ControlProcess& v,
                         const WeightProcess& w, const PathEnsemble& ensemble);

struct AdjointBundle;
struct FbsdeSolution;

/// w(t) = 1 + |p| + |q| + |k| + |P1| + |P1||x| pathwise.
WeightProcess build_weight(const AdjointBundle& adjoints, const FbsdeSolution& solution);

}  // namespace fbsde
