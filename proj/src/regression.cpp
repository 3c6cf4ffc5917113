#include "fbsde/regression.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

namespace fbsde {

std::size_t CrossSectionRegression::basis_size(int degree) {
    // monomials x^a W^b with a+b <= degree
    return static_cast<std::size_t>((degree + 1) * (degree + 2) / 2);
}

CrossSectionRegression::CrossSectionRegression(int degree, std::size_t n_paths)
    : degree_(degree), n_paths_(n_paths) {
    if (degree < 0) throw std::invalid_argument("regression: negative degree");
    n_basis_ = basis_size(degree);
    if (n_paths_ < 100 * n_basis_)
        throw std::invalid_argument(
            "regression: need at least 100 paths per basis function");
    design_.resize(n_paths_ * n_basis_);
}

void CrossSectionRegression::set_features(std::span<const double> x, std::span<const double> w,
                                          std::size_t step) {
    step_ = step;
    if (x.size() != n_paths_ || w.size() != n_paths_)
        throw std::invalid_argument("regression: feature size mismatch");

    // raw monomial columns, column-major
    std::size_t col = 0;
    for (int total = 0; total <= degree_; ++total) {
        for (int a = total; a >= 0; --a) {
            const int b = total - a;
            double* out = design_.data() + col * n_paths_;
            for (std::size_t p = 0; p < n_paths_; ++p) {
                const double xv = x[p];
                const double wv = w[p];
                double v = 1.0;
                for (int i = 0; i < a; ++i) v *= xv;
                for (int i = 0; i < b; ++i) v *= wv;
                out[p] = v;
            }
            ++col;
        }
    }

    // column standardization (skip the intercept); degenerate columns are
    // centered to zero and fall out of the rank-truncated solve
    for (std::size_t c = 1; c < n_basis_; ++c) {
        double* colp = design_.data() + c * n_paths_;
        double mean = 0.0;
        for (std::size_t p = 0; p < n_paths_; ++p) mean += colp[p];
        mean /= static_cast<double>(n_paths_);
        double ss = 0.0;
        for (std::size_t p = 0; p < n_paths_; ++p) {
            colp[p] -= mean;
            ss += colp[p] * colp[p];
        }
        const double sd = std::sqrt(ss / static_cast<double>(n_paths_));
        if (sd > 1e-300) {
            const double inv = 1.0 / sd;
            for (std::size_t p = 0; p < n_paths_; ++p) colp[p] *= inv;
        }
    }

    for (double v : design_) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "regression basis is non-finite at step " << step;
            throw IllConditionedBasisError(os.str(), step);
        }
    }
}

std::vector<double> CrossSectionRegression::fit(std::span<const double> regressand) const {
    if (regressand.size() != n_paths_)
        throw std::invalid_argument("regression: regressand size mismatch");
    for (double v : regressand) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "regressand is non-finite at step " << step_;
            throw IllConditionedBasisError(os.str(), step_);
        }
    }

    using Eigen::MatrixXd;
    using Eigen::VectorXd;
    Eigen::Map<const MatrixXd> X(design_.data(), static_cast<Eigen::Index>(n_paths_),
                                 static_cast<Eigen::Index>(n_basis_));
    Eigen::Map<const VectorXd> b(regressand.data(), static_cast<Eigen::Index>(n_paths_));

    Eigen::BDCSVD<MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    const VectorXd coef = svd.solve(b);
    const VectorXd fitted = X * coef;

    std::vector<double> out(n_paths_);
    for (std::size_t p = 0; p < n_paths_; ++p) out[p] = fitted[static_cast<Eigen::Index>(p)];
    return out;
}

}  // namespace fbsde
