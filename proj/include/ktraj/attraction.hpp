#pragma once

#include <cstddef>
#include <vector>

#include "ktraj/core.hpp"
#include "ktraj/density.hpp"

namespace ktraj {

/// Convolutions of the regularized distance kernel sqrt(|x|^2 + eps^2) and of its
/// gradient with a target density, sampled on the density's (2N+1)^d grid.
struct KernelField {
    int dims = 2;
    int grid_n = 0;
    double kernel_eps = 0.0;
    std::vector<double> potential;           // H * rho
    std::vector<std::vector<double>> force;  // (d_l H) * rho, one grid per axis

    int side() const { return 2 * grid_n + 1; }
};

/// Linear (zero-padded, non-circular) FFT convolution of the sampled kernel with rho.
/// Peak memory is about three work arrays of (4N+1)^d doubles: roughly 3.5 GB for d = 3, N = 128.
KernelField precompute_field(const TargetDensity& rho, double kernel_eps);

/// Default kernel regularization for a grid: half a grid cell.
inline double default_field_eps(int grid_n) { return 0.5 / grid_n; }

enum class AttractionGradient {
    /// Exact derivative of the multilinear interpolant of the potential, so cost and
    /// gradient form a consistent pair (finite differences agree to rounding).
    Consistent,
    /// Multilinear interpolation of the precomputed force grids.
    InterpolatedForce,
};

struct AttractionResult {
    double cost = 0.0;
    std::vector<double> grad;    // p x d, same layout as SamplingPattern::coords
    std::size_t clamped = 0;     // particles outside [-1,1]^d that were clamped for lookup
};

/// Attraction energy (1/p) sum_i I(H*rho)(K[i]) and its gradient.
AttractionResult eval_attraction(const SamplingPattern& k, const KernelField& field,
                                 AttractionGradient mode = AttractionGradient::Consistent);

/// Multilinear interpolation of a single field grid at one point (clamped to the domain).
double interpolate(const KernelField& field, const std::vector<double>& grid, const double* x);

}  // namespace ktraj
