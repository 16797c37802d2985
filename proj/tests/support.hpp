#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "gcam/layers.hpp"
#include "gcam/model.hpp"

namespace testing {

// Test-side randomness comes from std::mt19937_64 so fixtures never depend on
// the library's own generator.
inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

inline gcam::Tensor64 random_tensor(const gcam::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    return gcam::Tensor64(shape, random_values(gcam::shape_volume(shape), seed, lo, hi));
}

inline gcam::Conv2d<double> conv(std::size_t out, std::size_t in, std::size_t k, std::size_t pad,
                                 std::vector<double> weight, std::vector<double> bias) {
    return gcam::Conv2d<double>{out, in, k, k, pad, 1, gcam::Tensor64({out, in, k, k}, std::move(weight)),
                                gcam::Tensor64({out}, std::move(bias))};
}

inline gcam::Linear<double> linear(std::size_t out, std::size_t in, std::vector<double> weight,
                                   std::vector<double> bias) {
    return gcam::Linear<double>{out, in, gcam::Tensor64({out, in}, std::move(weight)),
                                gcam::Tensor64({out}, std::move(bias)), std::nullopt};
}

inline gcam::Conv2d<double> random_conv(std::size_t out, std::size_t in, std::size_t k, std::size_t pad,
                                        std::uint64_t seed) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in * k * k));
    return conv(out, in, k, pad, random_values(out * in * k * k, seed, -s, s), random_values(out, seed + 1, -0.1, 0.1));
}

inline gcam::Linear<double> random_linear(std::size_t out, std::size_t in, std::uint64_t seed) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    return linear(out, in, random_values(out * in, seed, -s, s), random_values(out, seed + 1, -0.1, 0.1));
}

inline double rel_err(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / scale;
}

// Central difference of f at x along every coordinate.
inline std::vector<double> finite_difference(const std::function<double(const gcam::Tensor64&)>& f,
                                             const gcam::Tensor64& x, double h = 1e-5) {
    std::vector<double> g(x.size());
    gcam::Tensor64 probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = probe[i];
        probe[i] = v + h;
        const double up = f(probe);
        probe[i] = v - h;
        const double down = f(probe);
        probe[i] = v;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
    return worst;
}

inline double mean_abs_diff(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

}  // namespace testing
