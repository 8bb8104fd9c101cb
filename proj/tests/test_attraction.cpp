#include <doctest.h>

#include <cmath>
#include <random>

#include "ktraj/attraction.hpp"
#include "ktraj/errors.hpp"
#include "oracles.hpp"

using namespace ktraj;

namespace {

TargetDensity random_density(int n, int dims, std::uint64_t seed) {
    const int side = 2 * n + 1;
    std::vector<double> g(static_cast<std::size_t>(side) * side * (dims == 3 ? side : 1));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : g) v = u(rng);
    return density_from_grid(std::move(g), dims);
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_CASE("FFT convolution matches spatial convolution") {
    for (int dims : {2, 3}) {
        const int n = dims == 2 ? 8 : 4;
        const TargetDensity rho = random_density(n, dims, 7 + dims);
        const double eps = 0.03;
        const KernelField f = precompute_field(rho, eps);
        const oracle::ConvolutionOracle ref = oracle::brute_force_convolution(rho, eps);
        CHECK(oracle::max_abs_diff(f.potential, ref.potential) / max_abs(ref.potential) <= 1e-10);
        for (int a = 0; a < dims; ++a) {
            CHECK(oracle::max_abs_diff(f.force[a], ref.force[a]) / max_abs(ref.force[a]) <= 1e-10);
        }
    }
}

TEST_CASE("a delta density reproduces the kernel") {
    const int n = 6, side = 13;
    std::vector<double> g(side * side, 0.0);
    g[6 * side + 6] = 1.0;
    const TargetDensity rho = density_from_grid(g, 2);
    const double eps = 0.01;
    const KernelField f = precompute_field(rho, eps);
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
            const double x = rho.node_coord(i), y = rho.node_coord(j);
            CHECK(std::abs(f.potential[i * side + j] - std::sqrt(x * x + y * y + eps * eps)) <= 1e-13);
        }
    }
    (void)n;
}

TEST_CASE("symmetric density gives an odd force field") {
    const TargetDensity rho = discretize(DensityParams{}, 10, 2);
    const KernelField f = precompute_field(rho, default_field_eps(10));
    const int side = f.side();
    double asym = 0.0;
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
            asym = std::max(asym, std::abs(f.force[0][i * side + j] + f.force[0][(side - 1 - i) * side + j]));
        }
    }
    CHECK(asym <= 1e-12);
}

TEST_CASE("interpolation is exact at grid nodes") {
    const TargetDensity rho = random_density(5, 3, 3);
    const KernelField f = precompute_field(rho, 0.05);
    const int side = f.side();
    for (int i : {0, 3, 10}) {
        for (int j : {0, 5, 9}) {
            for (int k : {1, 7, 10}) {
                const double x[3] = {rho.node_coord(i), rho.node_coord(j), rho.node_coord(k)};
                CHECK(interpolate(f, f.potential, x) == f.potential[(i * side + j) * side + k]);
            }
        }
    }
}

TEST_CASE("single particle at the centre of a symmetric density feels no force") {
    for (int dims : {2, 3}) {
        const TargetDensity rho = discretize(DensityParams{}, 8, dims);
        const KernelField f = precompute_field(rho, default_field_eps(8));
        SamplingPattern k(1, 1, dims);
        for (auto mode : {AttractionGradient::Consistent, AttractionGradient::InterpolatedForce}) {
            const AttractionResult r = eval_attraction(k, f, mode);
            for (double g : r.grad) CHECK(std::abs(g) <= 1e-10);
        }
    }
}

TEST_CASE("consistent gradient matches finite differences of the cost") {
    for (int dims : {2, 3}) {
        const int n = dims == 2 ? 32 : 12;
        const TargetDensity rho = discretize(DensityParams{}, n, dims);
        const KernelField f = precompute_field(rho, default_field_eps(n));
        SamplingPattern k = oracle::random_pattern(1, 100, dims, 19 + dims);
        // Keep every coordinate away from cell faces so the FD stencil stays in one cell.
        for (double& c : k.coords) {
            const double g = (c + 1.0) * n;
            const double frac = g - std::floor(g);
            if (frac < 0.01 || frac > 0.99) c += 0.02 / n;
        }
        const AttractionResult r = eval_attraction(k, f, AttractionGradient::Consistent);
        const double h = 1e-5;
        std::vector<double> fd(k.coords.size());
        for (std::size_t i = 0; i < k.coords.size(); ++i) {
            fd[i] = oracle::central_difference(
                [&](const std::vector<double>& x) {
                    SamplingPattern q = k;
                    q.coords = x;
                    return eval_attraction(q, f).cost;
                },
                k.coords, i, h);
        }
        CHECK(oracle::rel_l2(r.grad, fd) <= 1e-5);
    }
}

TEST_CASE("interpolated force approximates the consistent gradient") {
    const int n = 64;
    const TargetDensity rho = discretize(DensityParams{}, n, 2);
    const KernelField f = precompute_field(rho, default_field_eps(n));
    const SamplingPattern k = oracle::random_pattern(1, 200, 2, 5);
    const AttractionResult a = eval_attraction(k, f, AttractionGradient::Consistent);
    const AttractionResult b = eval_attraction(k, f, AttractionGradient::InterpolatedForce);
    CHECK(a.cost == b.cost);
    CHECK(oracle::rel_l2(b.grad, a.grad) <= 0.05);
}

TEST_CASE("out-of-domain particles are clamped and counted") {
    const TargetDensity rho = discretize(DensityParams{}, 4, 2);
    const KernelField f = precompute_field(rho, 0.1);
    SamplingPattern k(1, 3, 2);
    k.coords = {0.0, 0.0, 1.5, 0.0, -2.0, -2.0};
    const AttractionResult r = eval_attraction(k, f);
    CHECK(r.clamped == 2);
    SamplingPattern edge(1, 1, 2);
    edge.coords = {1.0, 0.0};
    const double expected = eval_attraction(edge, f).cost;
    SamplingPattern outside(1, 1, 2);
    outside.coords = {1.5, 0.0};
    CHECK(eval_attraction(outside, f).cost == expected);
}

TEST_CASE("attraction input checks") {
    const TargetDensity rho = discretize(DensityParams{}, 4, 2);
    CHECK_THROWS_AS(precompute_field(rho, 0.0), InputError);
    const KernelField f = precompute_field(rho, 0.1);
    SamplingPattern k3(1, 2, 3);
    CHECK_THROWS_AS(eval_attraction(k3, f), InputError);
}
