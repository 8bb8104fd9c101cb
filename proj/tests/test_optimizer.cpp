#include <doctest.h>

#include <cmath>
#include <cstring>

#include "ktraj/errors.hpp"
#include "ktraj/optimizer.hpp"
#include "oracles.hpp"

using namespace ktraj;

namespace {

HardwareSpec hw2d(int matrix = 32) {
    HardwareSpec hw;
    hw.fov = {0.23, 0.23};
    hw.matrix = {matrix, matrix};
    return hw;
}

OptimizerConfig small_cfg() {
    OptimizerConfig cfg;
    cfg.dims = 2;
    cfg.shots = 8;
    cfg.samples = 64;
    cfg.n_decim = 2;
    cfg.n_git = 25;
    cfg.n_pit = 100;
    cfg.seed = 3;
    cfg.repulsion.backend = RepulsionBackend::Direct;
    return cfg;
}

KernelField field_for(const OptimizerConfig& cfg, const HardwareSpec& hw) {
    const TargetDensity rho = discretize(cfg.density, cfg.resolved_grid_n(hw), cfg.dims);
    return precompute_field(rho, default_field_eps(rho.grid_n));
}

}  // namespace

TEST_CASE("BB step recovers the inverse curvature of a quadratic") {
    // f(x) = c/2 |x|^2, so dg = c dk for any pair of iterates.
    const double c = 3.7;
    const std::vector<double> dk = {0.1, -0.4, 0.25, 0.05};
    std::vector<double> dg(dk.size());
    for (std::size_t i = 0; i < dk.size(); ++i) dg[i] = c * dk[i];
    const double eta0 = 0.2;
    CHECK(std::abs(step_size(21, dk, dg, eta0, eta0, 20) - 1.0 / c) <= 1e-14);
    CHECK(step_size(1, dk, dg, eta0, 0.5, 20) == eta0);
    CHECK(step_size(20, dk, dg, eta0, 0.5, 20) == eta0);

    const std::vector<double> zero(dk.size(), 0.0);
    CHECK(step_size(30, dk, zero, eta0, 0.123, 20) == 0.123);
    std::vector<double> neg(dk.size());
    for (std::size_t i = 0; i < dk.size(); ++i) neg[i] = -dg[i];
    CHECK(step_size(30, dk, neg, eta0, 0.123, 20) == 0.123);

    // Safeguard interval.
    std::vector<double> flat(dk.size());
    for (std::size_t i = 0; i < dk.size(); ++i) flat[i] = 1e-9 * dk[i];
    CHECK(step_size(30, dk, flat, eta0, eta0, 20) == doctest::Approx(1e3 * eta0));
    for (std::size_t i = 0; i < dk.size(); ++i) flat[i] = 1e9 * dk[i];
    CHECK(step_size(30, dk, flat, eta0, eta0, 20) == doctest::Approx(1e-3 * eta0));
}

TEST_CASE("radial initialization") {
    const SamplingPattern one = init_radial(1, 8, 2);
    for (std::size_t n = 0; n < 8; ++n) CHECK(one.at(0, n, 1) == 0.0);
    CHECK(one.at(0, 4, 0) == 0.0);
    CHECK(one.at(0, 0, 0) == -1.0);

    for (int dims : {2, 3}) {
        const std::size_t shots = dims == 2 ? 12 : 16;
        const SamplingPattern k = init_radial(shots, 32, dims);
        for (std::size_t s = 0; s < k.shots; ++s) {
            double r2 = 0.0;
            for (int a = 0; a < dims; ++a) r2 += k.at(s, 16, a) * k.at(s, 16, a);
            CHECK(r2 == 0.0);
            for (std::size_t n = 0; n < k.samples; ++n) {
                double q = 0.0;
                for (int a = 0; a < dims; ++a) q += k.at(s, n, a) * k.at(s, n, a);
                CHECK(q <= 1.0 + 1e-12);
            }
        }
        // Mirror symmetry under x -> -x. With an even sample count the t = -1 end of the
        // x-axis spoke has no partner at t = +1, so first samples are skipped.
        std::size_t unmatched = 0;
        for (std::size_t i = 0; i < k.size(); ++i) {
            if (i % k.samples == 0) continue;
            bool found = false;
            for (std::size_t j = 0; j < k.size() && !found; ++j) {
                double d = std::abs(k.coords[j * dims] + k.coords[i * dims]);
                for (int a = 1; a < dims; ++a) d += std::abs(k.coords[j * dims + a] - k.coords[i * dims + a]);
                found = d <= 1e-12;
            }
            if (!found) ++unmatched;
        }
        CHECK(unmatched == 0);
    }
    const SamplingPattern big = init_radial(4096, 4, 3);
    CHECK(big.shots == 4096);
    CHECK_THROWS_AS(init_radial(10, 8, 3), InputError);
}

TEST_CASE("perturbation") {
    const SamplingPattern k = init_radial(8, 32, 2);
    const SamplingPattern same = perturb(k, 0.0, 7);
    CHECK(same.coords == k.coords);
    const SamplingPattern a = perturb(k, 0.25, 7);
    const SamplingPattern b = perturb(k, 0.25, 7);
    CHECK(a.coords == b.coords);
    CHECK(perturb(k, 0.25, 8).coords != a.coords);
    for (std::size_t i = 0; i < k.coords.size(); ++i) {
        CHECK(std::abs(a.coords[i]) <= 1.0);
        CHECK(std::abs(a.coords[i] - k.coords[i]) <= 0.25 + 1e-15);
    }
    CHECK_THROWS_AS(perturb(k, 1.0, 1), InputError);

    // Zero-mean noise away from the box faces.
    const std::size_t p = 100000;
    SamplingPattern z(1, p, 2);
    const double amp = 0.5;
    const SamplingPattern zn = perturb(z, amp, 11);
    for (int a = 0; a < 2; ++a) {
        double mean = 0.0;
        for (std::size_t i = 0; i < p; ++i) mean += zn.coords[2 * i + a];
        mean /= static_cast<double>(p);
        CHECK(std::abs(mean) <= 3.0 * amp / std::sqrt(12.0 * static_cast<double>(p)));
    }
}

TEST_CASE("dyadic upsampling and decimation") {
    const SamplingPattern k = oracle::random_pattern(3, 8, 3, 5, -0.9, 0.9);
    const SamplingPattern up = upsample_dyadic(k);
    CHECK(up.samples == 16);
    for (std::size_t s = 0; s < k.shots; ++s) {
        for (std::size_t n = 0; n < 8; ++n) {
            for (int a = 0; a < 3; ++a) {
                CHECK(up.at(s, 2 * n, a) == k.at(s, n, a));
                if (n + 1 < 8) CHECK(up.at(s, 2 * n + 1, a) == 0.5 * (k.at(s, n, a) + k.at(s, n + 1, a)));
            }
        }
    }
    CHECK(decimate(up, 2).coords == k.coords);
    CHECK_THROWS_AS(decimate(k, 3), InputError);

    SamplingPattern edge(1, 2, 2);
    edge.coords = {0.0, 0.0, 1.0, -1.0};
    const SamplingPattern e2 = upsample_dyadic(edge);
    CHECK(e2.at(0, 3, 0) == 1.0);
    CHECK(e2.at(0, 3, 1) == -1.0);
}

TEST_CASE("total gradient matches finite differences of the cost") {
    for (int dims : {2, 3}) {
        const int n = dims == 2 ? 32 : 12;
        const TargetDensity rho = discretize(DensityParams{}, n, dims);
        const KernelField f = precompute_field(rho, default_field_eps(n));
        RepulsionConfig rep;
        rep.backend = RepulsionBackend::Direct;
        rep.kernel_eps = 1e-3;
        SamplingPattern k = oracle::random_pattern(1, 200, dims, 40 + dims, -0.95, 0.95);
        for (double& c : k.coords) {
            const double g = (c + 1.0) * n;
            const double frac = g - std::floor(g);
            if (frac < 0.01 || frac > 0.99) c += 0.02 / n;
        }
        const Energy e = evaluate_energy(k, f, rep);
        std::vector<double> fd(k.coords.size());
        for (std::size_t i = 0; i < fd.size(); ++i) {
            fd[i] = oracle::central_difference(
                [&](const std::vector<double>& x) {
                    SamplingPattern q = k;
                    q.coords = x;
                    return evaluate_energy(q, f, rep).cost;
                },
                k.coords, i, 1e-5);
        }
        CAPTURE(dims);
        CHECK(oracle::rel_l2(e.grad, fd) <= 1e-5);
        CHECK(e.cost == doctest::Approx(e.attraction - e.repulsion).epsilon(1e-15));
    }
}

TEST_CASE("projection-only pipeline returns the projected initialization") {
    OptimizerConfig cfg = small_cfg();
    cfg.n_decim = 0;
    cfg.n_git = 0;
    const HardwareSpec hw = hw2d();
    const KernelField f = field_for(cfg, hw);
    const OptimizeResult r = optimize(cfg, hw, f);
    CHECK(r.trace.records.empty());
    CHECK(r.pattern.coords == r.initial.coords);
    CHECK(r.trace.final_cost == r.trace.initial_cost);
}

TEST_CASE("optimizer run: feasibility, schedule, monotone fixed phase, determinism") {
    const OptimizerConfig cfg = small_cfg();
    const HardwareSpec hw = hw2d();
    const KernelField f = field_for(cfg, hw);
    const OptimizeResult r = optimize(cfg, hw, f);

    REQUIRE(r.trace.records.size() == static_cast<std::size_t>((cfg.n_decim + 1) * cfg.n_git));
    CHECK(r.pattern.samples == cfg.samples);
    CHECK(r.trace.final_cost < r.trace.initial_cost);
    CHECK(r.trace.final_residual <= 1e-6);

    // Feasibility against the unscaled limits, checked independently of the projector.
    const ProjectionConfig pc = level_projection(cfg, hw, 0);
    const double vmax = pc.alpha * pc.raster_dt, amax = pc.beta * pc.raster_dt * pc.raster_dt;
    for (std::size_t s = 0; s < r.pattern.shots; ++s) {
        for (std::size_t n = 0; n < r.pattern.samples; ++n) {
            double v = 0.0, acc = 0.0;
            for (int a = 0; a < 2; ++a) {
                CHECK(std::abs(r.pattern.at(s, n, a)) <= 1.0 + 1e-6);
                if (n + 1 < r.pattern.samples) {
                    const double d = r.pattern.at(s, n + 1, a) - r.pattern.at(s, n, a);
                    v += d * d;
                }
                if (n + 2 < r.pattern.samples) {
                    const double d2 = r.pattern.at(s, n + 2, a) - 2 * r.pattern.at(s, n + 1, a) + r.pattern.at(s, n, a);
                    acc += d2 * d2;
                }
            }
            CHECK(std::sqrt(v) <= vmax * (1 + 1e-6) + 1e-9);
            CHECK(std::sqrt(acc) <= amax * (1 + 1e-6) + 1e-9);
        }
        for (int a = 0; a < 2; ++a) CHECK(r.pattern.at(s, cfg.resolved_pin_index(), a) == 0.0);
    }

    int level = cfg.n_decim;
    std::size_t expect_samples = cfg.samples >> cfg.n_decim;
    for (std::size_t i = 0; i < r.trace.records.size(); ++i) {
        const IterationRecord& rec = r.trace.records[i];
        CHECK(rec.level == level);
        CHECK(rec.samples == expect_samples);
        CHECK(rec.iteration == static_cast<int>(i % cfg.n_git) + 1);
        if (rec.iteration > 1 && rec.iteration <= cfg.fixed_step_iters + 1) {
            CAPTURE(i);
            CHECK(rec.cost <= r.trace.records[i - 1].cost + 1e-8);
        }
        if (rec.iteration == cfg.n_git) {
            --level;
            expect_samples *= 2;
        }
    }

    const OptimizeResult again = optimize(cfg, hw, f);
    CHECK(std::memcmp(again.pattern.coords.data(), r.pattern.coords.data(), r.pattern.coords.size() * 8) == 0);
}

TEST_CASE("level projection scales the limits by powers of two") {
    const OptimizerConfig cfg = small_cfg();
    const HardwareSpec hw = hw2d();
    const ProjectionConfig l0 = level_projection(cfg, hw, 0);
    const ProjectionConfig l2 = level_projection(cfg, hw, 2);
    const NormalizedLimits lim = normalized_limits(hw);
    CHECK(l0.alpha == lim.alpha);
    CHECK(l0.beta == lim.beta);
    CHECK(l2.alpha == 4 * lim.alpha);
    CHECK(l2.beta == 4 * lim.beta);
    REQUIRE(l2.pin.has_value());
    CHECK(l2.pin->pinned_index == cfg.resolved_pin_index() / 4);
}

TEST_CASE("divergence guard aborts with a diagnostic") {
    OptimizerConfig cfg = small_cfg();
    cfg.eta0 = 1e6;
    cfg.divergence_factor = 1.0001;
    cfg.n_decim = 0;
    cfg.samples = 16;
    const HardwareSpec hw = hw2d();
    const KernelField f = field_for(cfg, hw);
    bool threw = false;
    try {
        optimize(cfg, hw, f);
    } catch (const NumericalError& e) {
        threw = true;
        CHECK(std::string(e.what()).find("divergence") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("optimizer config validation") {
    OptimizerConfig cfg = small_cfg();
    CHECK_NOTHROW(cfg.validate());
    cfg.samples = 62;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = small_cfg();
    cfg.perturbation = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = small_cfg();
    cfg.dims = 3;
    cfg.shots = 10;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = small_cfg();
    cfg.n_pit = 0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = small_cfg();
    cfg.init_pit = 0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = small_cfg();
    cfg.pin_index = 64;
    CHECK_THROWS_AS(cfg.validate(), InputError);

    // Paper-scale shape is accepted.
    OptimizerConfig full;
    full.dims = 3;
    full.shots = 4096;
    full.samples = 2048;
    full.n_decim = 6;
    full.n_git = 100;
    full.n_pit = 100;
    CHECK_NOTHROW(full.validate());

    const HardwareSpec hw = hw2d();
    OptimizerConfig wrong = small_cfg();
    wrong.dims = 3;
    wrong.shots = 9;
    CHECK_THROWS_AS(optimize(wrong, hw), InputError);
}
