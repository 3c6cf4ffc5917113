#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fbsde {

/// Piecewise-constant function of time on [0,1] with right-continuous lookup:
/// value(t) is the entry of the last breakpoint <= t.
class PiecewiseConstant {
public:
    PiecewiseConstant() : breaks_{0.0}, values_{0.0} {}

    PiecewiseConstant(std::vector<double> breaks, std::vector<double> values)
        : breaks_(std::move(breaks)), values_(std::move(values)) {
        if (breaks_.empty() || breaks_.size() != values_.size())
            throw std::invalid_argument("piecewise table: breakpoints/values size mismatch");
        if (breaks_.front() != 0.0)
            throw std::invalid_argument("piecewise table: first breakpoint must be 0");
        if (!std::is_sorted(breaks_.begin(), breaks_.end()) ||
            std::adjacent_find(breaks_.begin(), breaks_.end()) != breaks_.end())
            throw std::invalid_argument("piecewise table: breakpoints must be strictly increasing");
        if (breaks_.back() >= 1.0 && breaks_.size() > 1 && breaks_.back() > 1.0)
            throw std::invalid_argument("piecewise table: breakpoints must lie in [0,1]");
    }

    static PiecewiseConstant constant(double v) {
        return PiecewiseConstant({0.0}, {v});
    }

    double operator()(double t) const {
        auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
        const std::size_t idx = static_cast<std::size_t>(it - breaks_.begin()) - 1;
        return values_[idx];
    }

    const std::vector<double>& breakpoints() const { return breaks_; }
    const std::vector<double>& values() const { return values_; }
    bool is_constant() const { return values_.size() == 1; }

    friend bool operator==(const PiecewiseConstant& a, const PiecewiseConstant& b) {
        return a.breaks_ == b.breaks_ && a.values_ == b.values_;
    }

private:
    std::vector<double> breaks_;
    std::vector<double> values_;
};

}  // namespace fbsde
