#pragma once

#include <array>
#include <cstddef>

namespace fbsde::detail {

/// Classical 4th-order step for f(t, state); h may be negative (backward).
template <std::size_t K, typename F>
std::array<double, K> rk4_step(const F& f, double t, const std::array<double, K>& s, double h) {
    auto add = [](const std::array<double, K>& a, const std::array<double, K>& b, double w) {
        std::array<double, K> r;
        for (std::size_t i = 0; i < K; ++i) r[i] = a[i] + w * b[i];
        return r;
    };
    const auto k1 = f(t, s);
    const auto k2 = f(t + h / 2, add(s, k1, h / 2));
    const auto k3 = f(t + h / 2, add(s, k2, h / 2));
    const auto k4 = f(t + h, add(s, k3, h));
    std::array<double, K> out;
    for (std::size_t i = 0; i < K; ++i)
        out[i] = s[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return out;
}

}  // namespace fbsde::detail
