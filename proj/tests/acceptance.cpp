// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ktraj/analysis.hpp"
#include "ktraj/config.hpp"
#include "ktraj/io.hpp"
#include "ktraj/optimizer.hpp"
#include "ktraj/repulsion.hpp"
#include "oracles.hpp"

using namespace ktraj;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
        if (!ok) {
            pass = false;
            detail += " [x]";
        }
    }
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

RunConfig desk_config(const char* name) { return load_config(std::string(KTRAJ_SOURCE_DIR) + "/configs/" + name); }

KernelField field_for(const RunConfig& c) {
    const TargetDensity rho = discretize(c.optimizer.density, c.optimizer.resolved_grid_n(c.hardware), c.optimizer.dims);
    const double eps = c.optimizer.field_eps > 0.0 ? c.optimizer.field_eps : default_field_eps(rho.grid_n);
    return precompute_field(rho, eps);
}

// What generate writes: SPKT bytes, then the pattern read back from them.
std::string spkt_bytes(const SamplingPattern& k, const HardwareSpec& hw) {
    io::TrajectoryFile f;
    f.pattern = k;
    f.k_max = normalized_limits(hw).k_max;
    f.raster_dt = hw.raster_dt;
    std::ostringstream out(std::ios::binary);
    io::write_spkt(out, f);
    return out.str();
}

SamplingPattern stored(const SamplingPattern& k, const HardwareSpec& hw) {
    std::istringstream in(spkt_bytes(k, hw), std::ios::binary);
    return io::read_spkt(in).pattern;
}

// Checked by every run that produces a pattern (criterion 8).
struct WaveformLedger {
    std::size_t patterns = 0;
    std::size_t infeasible = 0;
    double worst_gradient = 0.0;  // max |G| / G_max
    double worst_slew = 0.0;
    void add(const SamplingPattern& k, const HardwareSpec& hw) {
        const WaveformReport w = kspace_to_waveforms(stored(k, hw), hw);
        ++patterns;
        if (!w.feasible()) ++infeasible;
        worst_gradient = std::max(worst_gradient, w.max_gradient / w.g_max);
        worst_slew = std::max(worst_slew, w.max_slew / w.s_max);
    }
};

WaveformLedger g_waveforms;

struct Desk3d {
    bool done = false;
    double wall = 0.0;
    SamplingPattern final_pattern;
    HardwareSpec hw;
};
Desk3d g_desk3d;

const Desk3d& desk3d_run() {
    if (!g_desk3d.done) {
        const RunConfig c = desk_config("desk3d.cfg");
        const auto t0 = Clock::now();
        const OptimizeResult r = optimize(c.optimizer, c.hardware, field_for(c));
        g_desk3d.wall = seconds_since(t0);
        g_desk3d.final_pattern = r.pattern;
        g_desk3d.hw = c.hardware;
        g_desk3d.done = true;
        g_waveforms.add(r.pattern, c.hardware);
    }
    return g_desk3d;
}

// ---------------------------------------------------------------- criteria

Outcome gradient_correctness() {
    Outcome o;
    double worst = 0.0;
    for (int dims : {2, 3}) {
        const int n = dims == 2 ? 32 : 16;
        const TargetDensity rho = discretize(DensityParams{}, n, dims);
        const KernelField f = precompute_field(rho, default_field_eps(n));
        RepulsionConfig rep;
        rep.kernel_eps = 1e-3;
        for (std::size_t p : {50, 200}) {
            SamplingPattern k = oracle::random_pattern(1, p, dims, 1000 + p + dims, -0.95, 0.95);
            // Interior points: keep the FD stencil inside one interpolation cell.
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
            worst = std::max(worst, oracle::rel_l2(e.grad, fd));
        }
    }
    o.require(worst <= 1e-5, "max rel FD error " + fmt("%.2e", worst) + " <= 1e-5");
    return o;
}

Outcome projection_correctness() {
    Outcome o;
    double worst_qp = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const std::vector<double> shot = oracle::random_pattern(1, 8, 2, 5000 + inst, -1.3, 1.3).coords;
        ProjectionConfig cfg;
        cfg.raster_dt = 1.0;
        cfg.alpha = 0.3;
        cfg.beta = 0.15;
        cfg.n_pit = 3000;
        std::optional<std::pair<std::size_t, std::vector<double>>> pin;
        if (inst % 2 == 0) {
            LinearConstraint c;
            c.pinned_index = 4;
            c.pinned_value = {0.0, 0.0};
            cfg.pin = c;
            pin = std::make_pair(std::size_t{4}, std::vector<double>{0.0, 0.0});
        }
        const ShotProjection r = project_shot(shot, 2, cfg);
        worst_qp = std::max(worst_qp, oracle::max_abs_diff(r.coords, oracle::dykstra_project(shot, 2, 0.3, 0.15, pin)));
    }
    o.require(worst_qp <= 1e-4, "QP oracle max diff " + fmt("%.1e", worst_qp) + " <= 1e-4");

    // Perturbed radial shots, as the optimizer first sees them, at the desk 2D final-level limits.
    // The solver residual and restoration blend are reported alongside the returned residual.
    const RunConfig c = desk_config("desk2d.cfg");
    const ProjectionConfig pc = level_projection(c.optimizer, c.hardware, 0);
    const std::size_t ns = c.optimizer.samples;
    const SamplingPattern start = perturb(init_radial(c.optimizer.shots, ns, 2), 0.25, 6000);
    double worst_res = 0.0, worst_idem = 0.0, worst_solver = 0.0, worst_blend = 0.0;
    for (std::size_t s = 0; s < start.shots; ++s) {
        const ShotProjection a = project_shot(start.shot(s), 2, pc);
        const ShotProjection b = project_shot(a.coords, 2, pc);
        worst_res = std::max(worst_res, a.residual.max());
        worst_solver = std::max(worst_solver, a.solver_residual.max());
        worst_blend = std::max(worst_blend, a.restoration);
        double d = 0.0;
        for (std::size_t i = 0; i < a.coords.size(); ++i) d += (a.coords[i] - b.coords[i]) * (a.coords[i] - b.coords[i]);
        worst_idem = std::max(worst_idem, std::sqrt(d) / (pc.feas_tol * std::sqrt(static_cast<double>(ns * 2))));
    }
    o.require(worst_res <= 1e-6, "max residual " + fmt("%.1e", worst_res) + " <= 1e-6 (solver " +
                                     fmt("%.1e", worst_solver) + " before restoration, blend <= " +
                                     fmt("%.2f", worst_blend) + ")");
    o.require(worst_idem <= 1.0, "idempotence " + fmt("%.2f", worst_idem) + " x feas_tol*sqrt(Ns*d) <= 1");
    return o;
}

Outcome repulsion_accelerator() {
    Outcome o;
    RepulsionConfig cfg;
    cfg.backend = RepulsionBackend::Tree;
    double worst = 0.0;
    for (int dims : {2, 3}) {
        const SamplingPattern k = oracle::random_pattern(1, 10000, dims, 70 + dims, -1.0, 1.0);
        const RepulsionResult t = eval_repulsion(k, cfg);
        const RepulsionResult d = eval_repulsion_direct(k, cfg.kernel_eps);
        worst = std::max({worst, std::abs(t.cost - d.cost) / std::abs(d.cost), oracle::rel_l2(t.grad, d.grad)});
    }
    o.require(worst <= cfg.tree_precision, "tree rel err at p=1e4 " + fmt("%.1e", worst) + " <= 1e-4");

    auto best_of_two = [&](std::size_t p) {
        const SamplingPattern k = oracle::random_pattern(1, p, 3, 90 + p, -1.0, 1.0);
        double best = 1e300;
        for (int rep = 0; rep < 2; ++rep) {
            const auto t0 = Clock::now();
            eval_repulsion_tree(k, cfg);
            best = std::min(best, seconds_since(t0));
        }
        return best;
    };
    const double t17 = best_of_two(std::size_t{1} << 17);
    const double t18 = best_of_two(std::size_t{1} << 18);
    o.require(t18 / t17 < 3.0, "3D tree time(2^18)/time(2^17) = " + fmt("%.2f", t18 / t17) + " < 3 (" +
                                   fmt("%.2f", t17) + " s, " + fmt("%.2f", t18) + " s)");
    return o;
}

Outcome density_compliance_run() {
    Outcome o;
    const RunConfig c = desk_config("desk2d.cfg");
    const OptimizerConfig& opt = c.optimizer;
    const auto t0 = Clock::now();
    const OptimizeResult r = optimize(opt, c.hardware, field_for(c));
    const double wall = seconds_since(t0);
    g_waveforms.add(r.pattern, c.hardware);
    const TargetDensity rho = discretize(opt.density, opt.resolved_grid_n(c.hardware), 2);
    const double l1_init = density_compliance(r.initial, rho, 8).l1_distance;
    const double l1_final = density_compliance(r.pattern, rho, 8).l1_distance;
    const double reduction = 1.0 - l1_final / l1_init;
    o.require(reduction >= 0.5, "L1 (8x8 bins) " + fmt("%.3f", l1_init) + " -> " + fmt("%.3f", l1_final) + ", " +
                                    fmt("%.0f", 100 * reduction) + "% reduction >= 50%");
    o.require(r.trace.final_cost < r.trace.initial_cost,
              "cost " + fmt("%.6f", r.trace.initial_cost) + " -> " + fmt("%.6f", r.trace.final_cost));
    o.require(wall < 60.0, "optimize " + fmt("%.1f", wall) + " s < 60 s");
    return o;
}

Outcome perturbation_trend() {
    Outcome o;
    RunConfig c = desk_config("desk2d.cfg");
    const KernelField field = field_for(c);
    auto median_cost = [&](double p) {
        std::vector<double> costs;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            c.optimizer.perturbation = p;
            c.optimizer.seed = seed;
            const OptimizeResult r = optimize(c.optimizer, c.hardware, field);
            g_waveforms.add(r.pattern, c.hardware);
            costs.push_back(r.trace.final_cost);
        }
        std::sort(costs.begin(), costs.end());
        return costs[2];
    };
    const double low = median_cost(0.25);
    const double high = median_cost(0.75);
    o.require(high <= low, "median final cost over 5 seeds: P=0.75 " + fmt("%.10f", high) + " <= P=0.25 " +
                               fmt("%.10f", low));
    return o;
}

Outcome psf_properties() {
    Outcome o;
    const Desk3d& run = desk3d_run();
    const std::vector<int> grid = run.hw.matrix;
    auto metrics = [&](const SamplingPattern& k, PsfVolume* out) {
        const std::vector<double> w = density_compensation(k, grid, 10, true);
        PsfVolume psf = compute_psf(k, grid, w, true);
        const PsfMetrics m = psf_metrics(psf);
        if (out) *out = std::move(psf);
        return m;
    };
    const PsfMetrics radial = metrics(init_radial(64, 128, 3), nullptr);
    PsfVolume psf;
    const PsfMetrics m = metrics(stored(run.final_pattern, run.hw), &psf);
    std::size_t centre = 0;
    for (int g : grid) centre = centre * g + g / 2;
    o.require(psf.peak_index == centre && m.sidelobe_found && m.psl_db > 0.0,
              "central peak, PSL " + fmt("%.2f", m.psl_db) + " dB");
    const double fwhm = *std::max_element(m.fwhm.begin(), m.fwhm.end());
    o.require(fwhm <= 3.0, "FWHM " + fmt("%.2f", m.fwhm[0]) + "/" + fmt("%.2f", m.fwhm[1]) + "/" +
                               fmt("%.2f", m.fwhm[2]) + " <= 3");
    o.require(m.psl_db > radial.psl_db, "PSL " + fmt("%.2f", m.psl_db) + " > radial " + fmt("%.2f", radial.psl_db));
    o.require(run.wall < 300.0, "optimize " + fmt("%.0f", run.wall) + " s");
    return o;
}

Outcome numeric_anchors() {
    Outcome o;
    HardwareSpec hw;
    hw.fov = {0.23, 0.23};
    hw.matrix = {384, 384};
    const NormalizedLimits lim = normalized_limits(hw);
    const double k_max = 384.0 / (2.0 * 0.23);
    const double alpha = std::min(42.57e6 * 40e-3, 1.0 / (0.23 * 2e-6)) / k_max;
    const double beta = 42.57e6 * 180.0 / k_max;
    o.require(std::abs(lim.alpha / alpha - 1.0) <= 1e-9 && std::abs(lim.beta / beta - 1.0) <= 1e-9,
              "alpha " + fmt("%.4f", lim.alpha) + ", beta " + fmt("%.6g", lim.beta));

    DensityParams p;
    const double kappa = kappa_1d(p);
    o.require(std::abs(kappa - 8.0 / 7.0) <= 1e-9, "kappa " + fmt("%.12f", kappa));

    double worst = 0.0;
    for (double sigma : {1.0, 1.5, 2.0, 3.0}) {
        const int n = 64;
        std::vector<double> prof(n);
        for (int i = 0; i < n; ++i) prof[i] = std::exp(-std::pow(i - n / 2, 2) / (2 * sigma * sigma));
        worst = std::max(worst, std::abs(fwhm_1d(prof, n / 2) / (2.3548 * sigma) - 1.0));
    }
    o.require(worst <= 1e-2, "Gaussian FWHM rel err " + fmt("%.1e", worst));

    SamplingPattern two(1, 2, 3);
    two.coords = {0, 0, 0, 1, 0, 0};
    const RepulsionResult r = eval_repulsion_direct(two, 0.0);
    const bool hand = std::abs(r.cost - 0.25) <= 1e-9 && std::abs(r.grad[0] + 0.25) <= 1e-9 &&
                      std::abs(r.grad[3] - 0.25) <= 1e-9;
    o.require(hand, "two-particle cost " + fmt("%.12f", r.cost));
    return o;
}

Outcome waveform_feasibility() {
    Outcome o;
    const Desk3d& run = desk3d_run();
    const WaveformReport w = kspace_to_waveforms(stored(run.final_pattern, run.hw), run.hw);
    o.require(g_waveforms.infeasible == 0, std::to_string(g_waveforms.patterns) + " patterns, max |G|/Gmax " +
                                               fmt("%.3f", g_waveforms.worst_gradient) + ", max |S|/Smax " +
                                               fmt("%.4f", g_waveforms.worst_slew));
    o.require(w.slew_saturation > w.gradient_saturation, "3D slew saturation " + fmt("%.3f", w.slew_saturation) +
                                                             " > gradient saturation " +
                                                             fmt("%.3f", w.gradient_saturation));
    return o;
}

Outcome determinism_io() {
    Outcome o;
    RunConfig c = desk_config("desk2d.cfg");
    c.optimizer.shots = 8;
    c.optimizer.samples = 64;
    c.optimizer.n_decim = 2;
    c.optimizer.n_git = 30;
    c.optimizer.repulsion.backend = RepulsionBackend::Tree;
    c.optimizer.repulsion.leaf_size = 16;
    const std::string a = spkt_bytes(optimize(c.optimizer, c.hardware).pattern, c.hardware);
    const std::string b = spkt_bytes(optimize(c.optimizer, c.hardware).pattern, c.hardware);
    o.require(a == b, "repeated runs give identical SPKT bytes (" + std::to_string(a.size()) + " B)");

    std::istringstream in(a, std::ios::binary);
    const io::TrajectoryFile f = io::read_spkt(in);
    std::ostringstream out(std::ios::binary);
    io::write_spkt(out, f);
    o.require(out.str() == a, "SPKT read/write round trip is bitwise exact");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradient_correctness},
        {"projection correctness", projection_correctness},
        {"repulsion accelerator", repulsion_accelerator},
        {"density compliance", density_compliance_run},
        {"perturbation trend", perturbation_trend},
        {"PSF properties", psf_properties},
        {"numeric anchors", numeric_anchors},
        {"waveform feasibility", waveform_feasibility},
        {"determinism and IO", determinism_io},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = Clock::now();
        Outcome r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        if (!r.pass) ++failures;
        std::printf("criterion %d %s: %s (%s) [%.1f s]\n", id, r.pass ? "PASS" : "FAIL", criteria[i].first,
                    r.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
