#include "ktraj/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "ktraj/errors.hpp"

namespace ktraj {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

bool is_power_of_two_multiple(std::size_t n, int levels) {
    return levels < 63 && n % (std::size_t{1} << levels) == 0;
}

}  // namespace

int OptimizerConfig::resolved_grid_n(const HardwareSpec& hw) const {
    return grid_n > 0 ? grid_n : recommended_grid_n(hw.matrix);
}

void OptimizerConfig::validate() const {
    if (dims != 2 && dims != 3) throw InputError("optimizer.dims must be 2 or 3");
    if (shots < 1) throw InputError("optimizer.shots must be >= 1");
    if (samples < 3) throw InputError("optimizer.samples must be >= 3");
    if (n_decim < 0) throw InputError("optimizer.n_decim must be >= 0");
    if (!is_power_of_two_multiple(samples, n_decim)) {
        throw InputError("optimizer.samples must be divisible by 2^n_decim");
    }
    if ((samples >> n_decim) < 3) throw InputError("optimizer.n_decim leaves fewer than 3 samples per shot");
    if (n_git < 0) throw InputError("optimizer.n_git must be >= 0");
    if (n_pit < 1) throw InputError("optimizer.n_pit must be >= 1");
    if (init_pit < 1) throw InputError("optimizer.init_pit must be >= 1");
    if (fixed_step_iters < 0) throw InputError("optimizer.fixed_step_iters must be >= 0");
    if (!(eta0 >= 0.0) || !std::isfinite(eta0)) throw InputError("optimizer.eta0 must be >= 0");
    if (!(step_fraction > 0.0)) throw InputError("optimizer.step_fraction must be > 0");
    if (!(perturbation >= 0.0 && perturbation < 1.0)) throw InputError("optimizer.perturbation must lie in [0, 1)");
    if (grid_n != 0 && grid_n < 2) throw InputError("optimizer.grid_n must be >= 2");
    if (!(field_eps >= 0.0)) throw InputError("optimizer.field_eps must be >= 0");
    if (!(divergence_factor > 1.0)) throw InputError("optimizer.divergence_factor must be > 1");
    if (pin_index && *pin_index >= samples) throw InputError("optimizer.pin_index must be < samples");
    if (dims == 3) {
        const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(shots))));
        if (m * m != shots) throw InputError("optimizer.shots must be a perfect square in 3D");
    }
    density.validate();
    repulsion.validate();
}

Energy evaluate_energy(const SamplingPattern& k, const KernelField& field, const RepulsionConfig& rep,
                       AttractionGradient mode) {
    AttractionResult a = eval_attraction(k, field, mode);
    RepulsionResult r = eval_repulsion(k, rep);
    Energy e;
    e.attraction = a.cost;
    e.repulsion = r.cost;
    e.cost = a.cost - r.cost;
    e.grad = std::move(a.grad);
    for (std::size_t i = 0; i < e.grad.size(); ++i) e.grad[i] -= r.grad[i];
    e.warnings = std::move(r.warnings);
    return e;
}

SamplingPattern init_radial(std::size_t n_c, std::size_t n_s, int dims) {
    if (dims != 2 && dims != 3) throw InputError("init_radial: dims must be 2 or 3");
    if (n_c < 1 || n_s < 2) throw InputError("init_radial: need at least one shot and two samples");
    SamplingPattern k(n_c, n_s, dims);
    const double half = static_cast<double>(n_s / 2);
    auto fill = [&](std::size_t shot, const double* dir) {
        for (std::size_t n = 0; n < n_s; ++n) {
            const double t = (static_cast<double>(n) - half) / half;
            for (int a = 0; a < dims; ++a) k.at(shot, n, a) = t * dir[a];
        }
    };
    if (dims == 2) {
        for (std::size_t i = 0; i < n_c; ++i) {
            const double theta = std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_c);
            const double dir[2] = {std::cos(theta), std::sin(theta)};
            fill(i, dir);
        }
        return k;
    }
    const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_c))));
    if (m * m != n_c) {
        throw InputError("init_radial: 3D needs a perfect-square shot count (sqrt(N_c) spokes x sqrt(N_c) tilts)");
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double theta = std::numbers::pi * static_cast<double>(i) / static_cast<double>(m);
        for (std::size_t j = 0; j < m; ++j) {
            const double phi = std::numbers::pi * static_cast<double>(j) / static_cast<double>(m);
            const double dir[3] = {std::cos(theta) * std::cos(phi), std::sin(theta) * std::cos(phi), std::sin(phi)};
            fill(i * m + j, dir);
        }
    }
    return k;
}

SamplingPattern perturb(const SamplingPattern& k, double amplitude, std::uint64_t seed) {
    if (!(amplitude >= 0.0 && amplitude < 1.0)) throw InputError("perturb: amplitude must lie in [0, 1)");
    SamplingPattern out = k;
    if (amplitude == 0.0) return out;
    std::mt19937_64 rng(seed);
    for (double& c : out.coords) {
        c = std::clamp(c + amplitude * (2.0 * uniform01(rng) - 1.0), -1.0, 1.0);
    }
    return out;
}

double step_size(int iter, std::span<const double> dk, std::span<const double> dg, double eta0, double prev_eta,
                 int fixed_step_iters) {
    if (iter <= fixed_step_iters) return eta0;
    const double den = dot(dg, dg);
    if (den <= 1e-30) return prev_eta;
    const double eta = dot(dk, dg) / den;
    if (!(eta > 0.0) || !std::isfinite(eta)) return prev_eta;
    return std::clamp(eta, 1e-3 * eta0, 1e3 * eta0);
}

SamplingPattern upsample_dyadic(const SamplingPattern& k) {
    if (k.samples < 2) throw InputError("upsample_dyadic: need at least two samples per shot");
    SamplingPattern out(k.shots, 2 * k.samples, k.dims);
    const std::size_t n = k.samples;
    for (std::size_t s = 0; s < k.shots; ++s) {
        for (int a = 0; a < k.dims; ++a) {
            for (std::size_t j = 0; j < n; ++j) {
                out.at(s, 2 * j, a) = k.at(s, j, a);
                if (j + 1 < n) out.at(s, 2 * j + 1, a) = 0.5 * (k.at(s, j, a) + k.at(s, j + 1, a));
            }
            const double extrap = 1.5 * k.at(s, n - 1, a) - 0.5 * k.at(s, n - 2, a);
            out.at(s, 2 * n - 1, a) = std::clamp(extrap, -1.0, 1.0);
        }
    }
    return out;
}

SamplingPattern decimate(const SamplingPattern& k, std::size_t factor) {
    if (factor < 1 || k.samples % factor != 0) throw InputError("decimate: factor must divide the sample count");
    SamplingPattern out(k.shots, k.samples / factor, k.dims);
    for (std::size_t s = 0; s < k.shots; ++s)
        for (std::size_t j = 0; j < out.samples; ++j)
            for (int a = 0; a < k.dims; ++a) out.at(s, j, a) = k.at(s, j * factor, a);
    return out;
}

ProjectionConfig level_projection(const OptimizerConfig& cfg, const HardwareSpec& hw, int level) {
    const NormalizedLimits lim = normalized_limits(hw);
    const double scale = std::ldexp(1.0, level);
    ProjectionConfig p;
    p.n_pit = cfg.n_pit;
    p.alpha = lim.alpha * scale;
    p.beta = lim.beta * scale;
    p.raster_dt = hw.raster_dt;
    if (cfg.pin_center) {
        LinearConstraint pin;
        pin.pinned_index = cfg.resolved_pin_index() >> level;
        pin.pinned_value.assign(cfg.dims, 0.0);
        p.pin = pin;
    }
    return p;
}

OptimizeResult optimize(const OptimizerConfig& cfg, const HardwareSpec& hw) {
    cfg.validate();
    hw.validate();
    if (hw.dims() != cfg.dims) throw InputError("optimizer.dims does not match the hardware fov/matrix axes");
    const TargetDensity rho = discretize(cfg.density, cfg.resolved_grid_n(hw), cfg.dims);
    const double eps = cfg.field_eps > 0.0 ? cfg.field_eps : default_field_eps(rho.grid_n);
    return optimize(cfg, hw, precompute_field(rho, eps));
}

OptimizeResult optimize(const OptimizerConfig& cfg, const HardwareSpec& hw, const KernelField& field) {
    cfg.validate();
    hw.validate();
    if (hw.dims() != cfg.dims || field.dims != cfg.dims) {
        throw InputError("optimizer.dims does not match the hardware axes or the attraction field");
    }
    const auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };

    OptimizeResult result;
    RunTrace& trace = result.trace;
    auto note = [&](std::vector<std::string>& w) {
        for (auto& s : w) {
            if (std::find(trace.warnings.begin(), trace.warnings.end(), s) == trace.warnings.end()) {
                trace.warnings.push_back(std::move(s));
            }
        }
    };

    const SamplingPattern full = perturb(init_radial(cfg.shots, cfg.samples, cfg.dims), cfg.perturbation, cfg.seed);
    {
        ProjectionConfig pcfg = level_projection(cfg, hw, 0);
        pcfg.n_pit = cfg.init_pit;
        PatternProjection init = project_pattern(full, pcfg);
        result.initial = std::move(init.pattern);
        Energy e = evaluate_energy(result.initial, field, cfg.repulsion, cfg.attraction_gradient);
        trace.initial_cost = e.cost;
        note(e.warnings);
    }

    SamplingPattern k = decimate(full, std::size_t{1} << cfg.n_decim);
    double residual = 0.0;
    for (int level = cfg.n_decim; level >= 0; --level) {
        if (level != cfg.n_decim) k = upsample_dyadic(k);
        const ProjectionConfig pcfg = level_projection(cfg, hw, level);
        {
            ProjectionConfig first = pcfg;
            if (level == cfg.n_decim) first.n_pit = cfg.init_pit;
            PatternProjection proj = project_pattern(k, first);
            k = std::move(proj.pattern);
            residual = proj.max_residual;
        }
        const double p = static_cast<double>(k.size());
        const double spacing = 2.0 / std::pow(p, 1.0 / cfg.dims);
        double eta0 = cfg.eta0;
        double eta = eta0;
        double level_min = std::numeric_limits<double>::infinity();
        std::vector<double> prev_k, prev_g;
        for (int it = 1; it <= cfg.n_git; ++it) {
            Energy e = evaluate_energy(k, field, cfg.repulsion, cfg.attraction_gradient);
            note(e.warnings);
            if (!std::isfinite(e.cost)) throw NumericalError("optimizer: non-finite cost at level " + std::to_string(level));
            level_min = std::min(level_min, e.cost);
            if (e.cost > level_min + (cfg.divergence_factor - 1.0) * std::abs(level_min)) {
                throw NumericalError("optimizer: divergence guard tripped at level " + std::to_string(level) +
                                     ", iteration " + std::to_string(it) + " (cost " + std::to_string(e.cost) +
                                     ", level minimum " + std::to_string(level_min) + ")");
            }
            if (it == 1 && cfg.eta0 == 0.0) {
                double gmax = 0.0;
                for (std::size_t i = 0; i < k.size(); ++i) {
                    double s = 0.0;
                    for (int a = 0; a < k.dims; ++a) s += e.grad[i * k.dims + a] * e.grad[i * k.dims + a];
                    gmax = std::max(gmax, std::sqrt(s));
                }
                eta0 = gmax > 0.0 ? cfg.step_fraction * spacing / gmax : 1.0;
                eta = eta0;
            }
            if (it > 1) {
                std::vector<double> dk(k.coords.size()), dg(k.coords.size());
                for (std::size_t i = 0; i < dk.size(); ++i) {
                    dk[i] = k.coords[i] - prev_k[i];
                    dg[i] = e.grad[i] - prev_g[i];
                }
                eta = step_size(it, dk, dg, eta0, eta, cfg.fixed_step_iters);
            }
            prev_k = k.coords;
            prev_g = e.grad;

            SamplingPattern next = k;
            for (std::size_t i = 0; i < next.coords.size(); ++i) next.coords[i] -= eta * e.grad[i];
            PatternProjection proj = project_pattern(next, pcfg);
            k = std::move(proj.pattern);
            residual = proj.max_residual;

            IterationRecord rec;
            rec.level = level;
            rec.iteration = it;
            rec.samples = k.samples;
            rec.cost = e.cost;
            rec.attraction = e.attraction;
            rec.repulsion = e.repulsion;
            rec.step = eta;
            rec.max_residual = residual;
            rec.wall_ms = elapsed_ms();
            trace.records.push_back(rec);
        }
    }

    Energy final_energy = evaluate_energy(k, field, cfg.repulsion, cfg.attraction_gradient);
    note(final_energy.warnings);
    trace.final_cost = final_energy.cost;
    trace.final_residual = residual;
    result.pattern = std::move(k);
    return result;
}

}  // namespace ktraj
