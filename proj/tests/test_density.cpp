#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ktraj/density.hpp"
#include "ktraj/errors.hpp"

using namespace ktraj;

TEST_CASE("one-dimensional normalizer") {
    DensityParams p;
    p.cutoff = 0.25;
    p.decay = 2.0;
    const double kappa = kappa_1d(p);
    CHECK(std::abs(kappa - 8.0 / 7.0) <= 1e-9);
    const double x[] = {0.5, 0.0};
    CHECK(std::abs(radial_value(x, p, kappa) - kappa / 4.0) <= 1e-12);
    const double origin[] = {0.0, 0.0};
    CHECK(radial_value(origin, p, kappa) == kappa);

    p.decay = 0.0;
    CHECK(std::abs(kappa_1d(p) - 0.5) <= 1e-12);
}

TEST_CASE("normalizer integrates the 1D profile to one") {
    for (double decay : {0.5, 1.0, 2.0, 3.0}) {
        DensityParams p;
        p.cutoff = 0.3;
        p.decay = decay;
        const double kappa = kappa_1d(p);
        const int n = 200000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x[] = {-1.0 + (i + 0.5) * 2.0 / n};
            sum += radial_value(std::span<const double>(x, 1), p, kappa) * 2.0 / n;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("plateau includes the cutoff radius") {
    DensityParams p;
    const double x[] = {0.25, 0.0};
    CHECK(radial_value(x, p, 1.0) == 1.0);
}

TEST_CASE("discretized density: normalization, flatness, ratio") {
    DensityParams flat;
    flat.decay = 0.0;
    const TargetDensity u = discretize(flat, 6, 2);
    for (double v : u.grid) CHECK(v == doctest::Approx(1.0 / 169.0).epsilon(1e-12));

    DensityParams p;
    const TargetDensity rho = discretize(p, 32, 3);
    CHECK(rho.side() == 65);
    const double total = std::accumulate(rho.grid.begin(), rho.grid.end(), 0.0);
    CHECK(std::abs(total - 1.0) <= 1e-12);
    for (double v : rho.grid) CHECK(v >= 0.0);
    auto at = [&](int i, int j, int k) { return rho.grid[(static_cast<std::size_t>(i) * 65 + j) * 65 + k]; };
    CHECK(std::abs(at(32, 32, 32) / at(48, 32, 32) - 4.0) <= 1e-12);
    CHECK(std::abs(at(32, 32, 32) / at(32, 32, 16) - 4.0) <= 1e-12);
}

TEST_CASE("discretized density is radially symmetric and monotone") {
    const TargetDensity rho = discretize(DensityParams{}, 16, 2);
    const int s = rho.side();
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
            // Swapping and mirroring axes keeps the radius.
            const double a = rho.grid[i * s + j];
            CHECK(a == rho.grid[j * s + i]);
            CHECK(a == rho.grid[(s - 1 - i) * s + j]);
        }
    }
    for (int j = 17; j < s; ++j) CHECK(rho.grid[16 * s + j] <= rho.grid[16 * s + j - 1]);
}

TEST_CASE("custom grids") {
    std::vector<double> grid(25, 2.0);
    const TargetDensity t = density_from_grid(grid, 2);
    CHECK(t.grid_n == 2);
    CHECK(!t.params.has_value());
    for (double v : t.grid) CHECK(v == doctest::Approx(1.0 / 25.0));
    grid[3] = -1.0;
    CHECK_THROWS_AS(density_from_grid(grid, 2), InputError);
    CHECK_THROWS_AS(density_from_grid(std::vector<double>(24, 1.0), 2), InputError);
    CHECK_THROWS_AS(density_from_grid(std::vector<double>(25, 0.0), 2), InputError);
}

TEST_CASE("parameter validation and grid size guidance") {
    DensityParams p;
    p.cutoff = 0.0;
    CHECK_THROWS_AS(p.validate(), InputError);
    p.cutoff = 0.25;
    p.decay = -1.0;
    CHECK_THROWS_AS(p.validate(), InputError);
    CHECK_THROWS_AS(discretize(DensityParams{}, 1, 2), InputError);
    const std::vector<int> m = {384, 384, 208};
    CHECK(recommended_grid_n(m) == 768);
}
