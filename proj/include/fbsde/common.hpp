#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbsde {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A coefficient or cost evaluated to a non-finite value.
struct InvalidModelError : Error {
    using Error::Error;
};

/// Two objects built on different grids/ensembles were combined.
struct IncompatibilityError : Error {
    using Error::Error;
};

/// The forward iteration produced a non-finite state.
struct DivergenceError : Error {
    DivergenceError(const std::string& msg, std::size_t step)
        : Error(msg), step(step) {}
    std::size_t step;
};

/// A solver was asked for a control class it does not handle.
struct UnsupportedControlError : Error {
    using Error::Error;
};

/// Regression inputs were unusable at some backward step.
struct IllConditionedBasisError : Error {
    IllConditionedBasisError(const std::string& msg, std::size_t step)
        : Error(msg), step(step) {}
    std::size_t step;
};

/// A certificate's standing hypothesis failed its probe.
struct HypothesisViolatedError : Error {
    using Error::Error;
};

/// Model file could not be parsed; message carries the field location.
struct ParseError : Error {
    using Error::Error;
};

/// Pairwise (tree) summation: deterministic order, good cancellation behavior.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

struct MeanStdErr {
    double mean = 0.0;
    double std_error = 0.0;
};

inline MeanStdErr mean_and_se(std::span<const double> v) {
    if (v.empty()) return {};
    const double n = static_cast<double>(v.size());
    const double mean = pairwise_sum(v) / n;
    if (v.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) {
        const double d = x - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    return {mean, sd / std::sqrt(n)};
}

/// splitmix64; used to derive independent per-path substream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace fbsde
