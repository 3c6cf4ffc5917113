#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fbsde/common.hpp"

namespace fbsde {

/// Cross-sectional least squares on standardized monomials in (x, W) up to a
/// total degree. Collinear or degenerate columns (constant controls make
/// x proportional to W) are resolved by a rank-truncated SVD solve, so the
/// fitted values stay well defined; non-finite inputs raise
/// IllConditionedBasisError with the offending step.
class CrossSectionRegression {
public:
    CrossSectionRegression(int degree, std::size_t n_paths);

    static std::size_t basis_size(int degree);

    /// Load features for the current step. Spans are per-path.
    void set_features(std::span<const double> x, std::span<const double> w, std::size_t step);

    /// Fitted conditional expectation of the regressand, per path.
    std::vector<double> fit(std::span<const double> regressand) const;

private:
    int degree_;
    std::size_t n_paths_;
    std::size_t step_ = 0;
    std::vector<double> design_;  // column-major [n_paths x n_basis]
    std::size_t n_basis_ = 0;
};

}  // namespace fbsde
