#pragma once

#include <cmath>
#include <cstddef>

namespace ktraj::detail {

inline constexpr int kLanes = 8;
inline constexpr int kChunk = 64;

/// Kernel values for `count` consecutive sources: h = sqrt(r^2 + eps^2) and the offsets
/// scaled by 1/h. Written as a plain map so the compiler vectorizes it.
template <int D>
inline void pair_values(const double* target, const double* const* src, std::size_t base, int count, double eps2,
                        double* h, double (*g)[kChunk]) {
    for (int m = 0; m < count; ++m) {
        double diff[D];
        double r2 = eps2;
        for (int a = 0; a < D; ++a) {
            diff[a] = target[a] - src[a][base + m];
            r2 += diff[a] * diff[a];
        }
        const double hm = std::sqrt(r2);
        // Coincident points (r2 == 0) have zero offsets; bumping their denominator to 1
        // keeps the gradient term at zero without a branch the vectorizer would reject.
        const double inv = 1.0 / (hm + (hm > 0.0 ? 0.0 : 1.0));
        h[m] = hm;
        for (int a = 0; a < D; ++a) g[a][m] = diff[a] * inv;
    }
}

/// Adds the regularized-distance potential and its gradient kernel from `n` sources
/// (structure-of-arrays, one pointer per axis) onto a single target point.
/// Source j always lands in accumulator lane j mod kLanes, and the lanes are folded in a
/// fixed order, so the result does not depend on vectorization or memory alignment.
template <int D>
inline void accumulate_pairs(const double* target, const double* const* src, std::size_t n, double eps2,
                             double& pot, double* grad) {
    double acc_p[kLanes] = {};
    double acc_g[D][kLanes] = {};
    double h[kChunk];
    double g[D][kChunk];
    for (std::size_t j = 0; j < n; j += kChunk) {
        const int count = n - j < static_cast<std::size_t>(kChunk) ? static_cast<int>(n - j) : kChunk;
        pair_values<D>(target, src, j, count, eps2, h, g);
        int m = 0;
        for (; m + kLanes <= count; m += kLanes) {
            for (int l = 0; l < kLanes; ++l) acc_p[l] += h[m + l];
            for (int a = 0; a < D; ++a)
                for (int l = 0; l < kLanes; ++l) acc_g[a][l] += g[a][m + l];
        }
        for (int l = 0; m + l < count; ++l) {
            acc_p[l] += h[m + l];
            for (int a = 0; a < D; ++a) acc_g[a][l] += g[a][m + l];
        }
    }
    auto fold = [](const double* v) {
        return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
    };
    pot += fold(acc_p);
    for (int a = 0; a < D; ++a) grad[a] += fold(acc_g[a]);
}

}  // namespace ktraj::detail
