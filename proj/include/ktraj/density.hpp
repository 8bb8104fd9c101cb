#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace ktraj {

/// Radial variable-density profile: a plateau of radius `cutoff` (fraction of k_max)
/// followed by a (cutoff / r)^decay fall-off.
struct DensityParams {
    double cutoff = 0.25;
    double decay = 2.0;

    void validate() const;
};

/// Normalizer of the profile on [-1, 1] (1D closed form). Continuous at decay = 1.
double kappa_1d(const DensityParams& params);

/// Profile value at x (Euclidean radius). The plateau branch includes r == cutoff.
double radial_value(std::span<const double> x, const DensityParams& params, double kappa);

/// Target density sampled on the (2N+1)^d grid with nodes at i/N, i in [-N, N].
/// Row-major: the first axis varies slowest. Entries are non-negative and sum to 1.
struct TargetDensity {
    int dims = 2;
    int grid_n = 0;
    std::vector<double> grid;
    std::optional<DensityParams> params;  // empty for custom grids

    int side() const { return 2 * grid_n + 1; }
    std::size_t size() const { return grid.size(); }
    double node_coord(int index) const { return static_cast<double>(index - grid_n) / grid_n; }
};

/// Samples the radial profile at the grid nodes and renormalizes numerically so the
/// entries sum to one.
TargetDensity discretize(const DensityParams& params, int grid_n, int dims);

/// Wraps a user-supplied grid. Rejects negative or non-finite entries and normalizes.
TargetDensity density_from_grid(std::vector<double> grid, int dims);

/// Grid half-width recommended for an image matrix: twice the largest matrix size.
int recommended_grid_n(std::span<const int> matrix);

}  // namespace ktraj
