#include "ktraj/density.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ktraj/errors.hpp"

namespace ktraj {

void DensityParams::validate() const {
    if (!(cutoff > 0.0 && cutoff < 1.0)) throw InputError("density.cutoff must lie in (0, 1)");
    if (!(decay >= 0.0) || !std::isfinite(decay)) throw InputError("density.decay must be >= 0");
}

double kappa_1d(const DensityParams& params) {
    params.validate();
    const double c = params.cutoff;
    const double d = params.decay;
    // The closed form (1-D) / (2C(C^(D-1) - D)) is 0/0 at D = 1; use the limit there.
    if (std::abs(d - 1.0) < 1e-9) return 1.0 / (2.0 * c * (1.0 - std::log(c)));
    return (1.0 - d) / (2.0 * c * (std::pow(c, d - 1.0) - d));
}

double radial_value(std::span<const double> x, const DensityParams& params, double kappa) {
    double sq = 0.0;
    for (double v : x) sq += v * v;
    const double r = std::sqrt(sq);
    if (r <= params.cutoff) return kappa;
    return kappa * std::pow(params.cutoff / r, params.decay);
}

namespace {

void normalize(std::vector<double>& grid) {
    long double total = 0.0L;
    for (double v : grid) total += v;
    if (!(total > 0.0L)) throw InputError("density: grid has zero total mass");
    const double inv = static_cast<double>(1.0L / total);
    for (double& v : grid) v *= inv;
}

}  // namespace

TargetDensity discretize(const DensityParams& params, int grid_n, int dims) {
    params.validate();
    if (grid_n < 2) throw InputError("density: grid_n must be >= 2");
    if (dims != 2 && dims != 3) throw InputError("density: dims must be 2 or 3");

    TargetDensity out;
    out.dims = dims;
    out.grid_n = grid_n;
    out.params = params;
    const int side = out.side();
    const std::size_t n_cells = dims == 2 ? static_cast<std::size_t>(side) * side
                                          : static_cast<std::size_t>(side) * side * side;
    out.grid.resize(n_cells);

    // kappa cancels in the renormalization below.
    const double kappa = 1.0;
    std::size_t idx = 0;
    const int kz = dims == 3 ? side : 1;
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
            for (int k = 0; k < kz; ++k) {
                const double x[3] = {out.node_coord(i), out.node_coord(j),
                                     dims == 3 ? out.node_coord(k) : 0.0};
                out.grid[idx++] = radial_value(std::span<const double>(x, dims), params, kappa);
            }
        }
    }
    normalize(out.grid);
    return out;
}

TargetDensity density_from_grid(std::vector<double> grid, int dims) {
    if (dims != 2 && dims != 3) throw InputError("density: dims must be 2 or 3");
    const auto guess = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(grid.size()), 1.0 / dims)));
    std::size_t side = 0;
    for (std::size_t s : {guess - 1, guess, guess + 1}) {
        if (s > 0 && s * s * (dims == 3 ? s : 1) == grid.size()) side = s;
    }
    if (side == 0) {
        throw InputError("density: grid size " + std::to_string(grid.size()) +
                         " is not a perfect power for dims " + std::to_string(dims));
    }
    if (side % 2 == 0 || side < 5) throw InputError("density: grid side must be odd and >= 5");
    for (double v : grid) {
        if (!std::isfinite(v) || v < 0.0) throw InputError("density: grid entries must be finite and >= 0");
    }
    TargetDensity out;
    out.dims = dims;
    out.grid_n = static_cast<int>((side - 1) / 2);
    out.grid = std::move(grid);
    normalize(out.grid);
    return out;
}

int recommended_grid_n(std::span<const int> matrix) {
    int m = 0;
    for (int v : matrix) m = std::max(m, v);
    return 2 * m;
}

}  // namespace ktraj
