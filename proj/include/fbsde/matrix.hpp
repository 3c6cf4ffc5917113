#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

#include "fbsde/common.hpp"

namespace fbsde {

/// Dense row-major [n_paths x n_cols] storage for per-path, per-step values.
class PathMatrix {
public:
    PathMatrix() = default;
    PathMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t p, std::size_t i) {
        assert(p < rows_ && i < cols_);
        return data_[p * cols_ + i];
    }
    double operator()(std::size_t p, std::size_t i) const {
        assert(p < rows_ && i < cols_);
        return data_[p * cols_ + i];
    }

    std::span<double> row(std::size_t p) {
        return {data_.data() + p * cols_, cols_};
    }
    std::span<const double> row(std::size_t p) const {
        return {data_.data() + p * cols_, cols_};
    }

    std::span<const double> flat() const { return data_; }
    std::span<double> flat() { return data_; }

    bool same_shape(const PathMatrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// Per-step values that are either shared by all paths (deterministic) or
/// stored per path. Keeps deterministic controls and ODE-valued adjoints
/// from blowing up memory at large path counts.
class StepValues {
public:
    StepValues() = default;

    static StepValues broadcast(std::vector<double> steps) {
        StepValues v;
        v.steps_ = std::move(steps);
        v.per_path_ = false;
        return v;
    }
    static StepValues per_path(PathMatrix m) {
        StepValues v;
        v.matrix_ = std::move(m);
        v.per_path_ = true;
        return v;
    }

    bool is_per_path() const { return per_path_; }
    std::size_t n_steps() const {
        return per_path_ ? matrix_.cols() : steps_.size();
    }

    double at(std::size_t path, std::size_t i) const {
        return per_path_ ? matrix_(path, i) : steps_[i];
    }

    const PathMatrix& matrix() const { return matrix_; }
    const std::vector<double>& shared() const { return steps_; }

private:
    std::vector<double> steps_;
    PathMatrix matrix_;
    bool per_path_ = false;
};

}  // namespace fbsde
