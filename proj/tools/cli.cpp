#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ktraj/analysis.hpp"
#include "ktraj/config.hpp"
#include "ktraj/errors.hpp"
#include "ktraj/io.hpp"
#include "ktraj/optimizer.hpp"
#include "ktraj/parallel.hpp"
#include "ktraj/repulsion.hpp"

namespace ktraj::cli {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::ofstream open_out(const std::string& path, bool binary = false) {
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) throw InputError("cannot write " + path);
    return f;
}

void emit_json(const json& j, const std::string& path, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << j.dump(2) << "\n";
        return;
    }
    auto f = open_out(path);
    f << j.dump(2) << "\n";
}

// JSON has no infinity; unbounded values become null.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<int> parse_grid(const std::string& text, int dims) {
    std::vector<int> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            grid.push_back(v);
        } catch (const std::logic_error&) {
            throw InputError("--grid: expected an integer list, got '" + text + "'");
        }
    }
    if (grid.size() == 1) grid.assign(static_cast<std::size_t>(dims), grid[0]);
    if (static_cast<int>(grid.size()) != dims) {
        throw InputError("--grid: " + std::to_string(grid.size()) + " sizes given for a " + std::to_string(dims) +
                         "-D trajectory");
    }
    for (int g : grid) {
        if (g < 2) throw InputError("--grid: sizes must be >= 2");
    }
    return grid;
}

std::string sibling(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    return (p.parent_path() / p.stem()).string() + suffix;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string config;
    std::string out;
    bool dry_run = false;
};

// Rough single-core cost model measured on the reference build: direct repulsion
// ~2.6 ns per pair, tree ~5 us per particle, projection ~0.03 us per sample per
// inner iteration, FFTs ~5 ns per point and log2 factor.
json dry_run_estimate(const RunConfig& cfg) {
    const OptimizerConfig& o = cfg.optimizer;
    const int d = o.dims;
    const int n = o.resolved_grid_n(cfg.hardware);
    const double side = 2.0 * n + 1.0;
    const double padded = std::pow(4.0 * n + 1.0, d);
    const double field_bytes = (1.0 + d) * std::pow(side, d) * 8.0;
    const double fft_bytes = 3.0 * padded * 8.0;
    const double p_full = static_cast<double>(o.shots) * static_cast<double>(o.samples);

    double seconds = (d + 1.0) * 3.0 * 5e-9 * padded * std::log2(padded);
    seconds += 3e-8 * o.init_pit * p_full * (1.0 + std::pow(0.5, o.n_decim));
    for (int level = o.n_decim; level >= 0; --level) {
        const double p = p_full / std::pow(2.0, level);
        const double rep = o.repulsion.backend == RepulsionBackend::Direct ? 2.6e-9 * p * p : 5e-6 * p;
        const double proj = 3e-8 * p * o.n_pit;
        seconds += o.n_git * (rep + proj + 1e-7 * p);
    }
    const int threads = std::max(1, num_threads());
    json j;
    j["mode"] = "dry-run";
    j["dims"] = d;
    j["shots"] = o.shots;
    j["samples"] = o.samples;
    j["particles"] = o.shots * o.samples;
    j["levels"] = o.n_decim + 1;
    j["density_grid_n"] = n;
    j["acceleration_factor"] = acceleration_factor(o.shots, cfg.hardware.matrix);
    j["repulsion_backend"] = o.repulsion.backend == RepulsionBackend::Direct ? "direct" : "tree";
    j["estimated_peak_memory_bytes"] = field_bytes + fft_bytes + 16.0 * p_full * d;
    j["estimated_seconds"] = seconds / threads;
    j["threads"] = threads;
    return j;
}

int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_config(a.config);
    if (!a.out.empty()) cfg.output = a.out;
    if (a.dry_run) {
        out << dry_run_estimate(cfg).dump(2) << "\n";
        return kExitOk;
    }
    if (cfg.output.empty()) throw InputError("no output path: pass --out or set output.trajectory");

    const auto t0 = Clock::now();
    const OptimizerConfig& o = cfg.optimizer;
    TargetDensity rho;
    if (!cfg.density_file.empty()) {
        rho = io::load_spkd(cfg.density_file);
        if (rho.dims != o.dims) throw InputError("density.file: grid dimension does not match hardware.fov");
    } else {
        rho = discretize(o.density, o.resolved_grid_n(cfg.hardware), o.dims);
    }
    const double eps = o.field_eps > 0.0 ? o.field_eps : default_field_eps(rho.grid_n);
    const KernelField field = precompute_field(rho, eps);
    const OptimizeResult res = optimize(o, cfg.hardware, field);
    const double run_ms = ms_since(t0);

    io::TrajectoryFile file;
    file.pattern = res.pattern;
    file.k_max = normalized_limits(cfg.hardware).k_max;
    file.raster_dt = cfg.hardware.raster_dt;
    io::save_spkt(cfg.output, file);
    // Waveforms are checked on what was written, so single-precision storage is accounted for.
    const io::TrajectoryFile stored = io::load_spkt(cfg.output);
    if (cfg.write_csv) {
        auto f = open_out(sibling(cfg.output, ".csv"));
        io::write_csv(f, stored.pattern);
    }
    {
        auto f = open_out(sibling(cfg.output, ".trace.csv"));
        f << "level,iteration,samples,cost,attraction,repulsion,step,max_residual,wall_ms\n";
        f.precision(17);
        for (const IterationRecord& r : res.trace.records) {
            f << r.level << ',' << r.iteration << ',' << r.samples << ',' << r.cost << ',' << r.attraction << ','
              << r.repulsion << ',' << r.step << ',' << r.max_residual << ',' << r.wall_ms << '\n';
        }
    }

    const WaveformReport w = kspace_to_waveforms(stored.pattern, cfg.hardware);
    const SamplingPattern ns = resample_to_dwell(stored.pattern, cfg.hardware);
    json rep;
    rep["trajectory"] = cfg.output;
    rep["dims"] = o.dims;
    rep["shots"] = o.shots;
    rep["samples"] = o.samples;
    rep["adc_samples_per_shot"] = ns.samples;
    rep["acceleration_factor"] = acceleration_factor(o.shots, cfg.hardware.matrix);
    rep["seed"] = o.seed;
    rep["initial_cost"] = res.trace.initial_cost;
    rep["final_cost"] = res.trace.final_cost;
    rep["final_constraint_residual"] = res.trace.final_residual;
    rep["feas_tol"] = cfg.feas_tol;
    rep["constraints_ok"] = res.trace.final_residual <= cfg.feas_tol;
    json wf;
    wf["feasible"] = w.feasible();
    wf["max_gradient"] = w.max_gradient;
    wf["g_max"] = w.g_max;
    wf["gradient_margin"] = w.g_max > 0.0 ? 1.0 - w.max_gradient / w.g_max : 0.0;
    wf["max_slew"] = w.max_slew;
    wf["s_max"] = w.s_max;
    wf["slew_margin"] = w.s_max > 0.0 ? 1.0 - w.max_slew / w.s_max : 0.0;
    wf["gradient_saturation"] = w.gradient_saturation;
    wf["slew_saturation"] = w.slew_saturation;
    wf["relative_tolerance"] = w.relative_tolerance;
    rep["waveforms"] = wf;
    rep["warnings"] = res.trace.warnings;
    rep["wall_ms"] = run_ms;
    rep["threads"] = num_threads();
    {
        auto f = open_out(sibling(cfg.output, ".report.json"));
        f << rep.dump(2) << "\n";
    }
    for (const std::string& warning : res.trace.warnings) err << "warning: " << warning << "\n";
    out << "wrote " << cfg.output << " (" << o.shots << " x " << o.samples << ", final cost " << res.trace.final_cost
        << ", feasible " << (w.feasible() ? "true" : "false") << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
    std::string mode;
    std::string traj;
    std::string out;
    // psf
    std::string grid;
    int iters = 10;
    double dwell = 0.0;
    bool allow_slow = false;
    std::string profile;
    double noise_radius = 0.75;
    // density
    int bins = 8;
    int grid_n = 64;
    double cutoff = 0.25;
    double decay = 2.0;
    std::string density;
    std::string hist;
    // waveforms
    HardwareSpec hw;
    std::vector<double> k_max;
    double raster_dt = 0.0;
    double tolerance = 0.01;
    std::string csv;
};

int analyze_psf(const AnalyzeArgs& a, const io::TrajectoryFile& t, std::ostream& out) {
    SamplingPattern k = t.pattern;
    const int d = k.dims;
    const std::vector<int> grid = parse_grid(a.grid.empty() ? (d == 2 ? "64" : "32") : a.grid, d);
    if (a.dwell > 0.0) {
        if (!(t.raster_dt > 0.0)) throw InputError("--dwell needs a trajectory file that records raster_dt");
        HardwareSpec hw;
        hw.raster_dt = t.raster_dt;
        hw.dwell_dt = a.dwell;
        k = resample_to_dwell(k, hw);
    }
    if (a.iters < 0) throw InputError("--iters must be >= 0");
    const std::vector<double> w = a.iters > 0 ? density_compensation(k, grid, a.iters, a.allow_slow)
                                              : std::vector<double>(k.size(), 1.0);
    const PsfVolume psf = compute_psf(k, grid, w, a.allow_slow);
    const PsfMetrics m = psf_metrics(psf, a.noise_radius);

    json j;
    j["mode"] = "psf";
    j["trajectory"] = a.traj;
    j["dims"] = d;
    j["shots"] = k.shots;
    j["samples"] = k.samples;
    j["grid"] = grid;
    j["dcf_iterations"] = a.iters;
    j["peak_value"] = psf.peak_value;
    json fwhm = json::array();
    for (double v : m.fwhm) fwhm.push_back(finite_or_null(v));
    j["fwhm_voxels"] = fwhm;
    j["fwhm_found"] = m.fwhm_found;
    j["psl_db"] = m.psl_db;
    j["pnl_db"] = m.pnl_db;
    j["sidelobe_found"] = m.sidelobe_found;
    j["main_lobe_lo"] = m.main_lobe_lo;
    j["main_lobe_hi"] = m.main_lobe_hi;
    j["noise_radius"] = a.noise_radius;
    j["db_convention"] = "20*log10 amplitude ratio";
    emit_json(j, a.out, out);

    if (!a.profile.empty()) {
        auto f = open_out(a.profile);
        f << "axis,offset,magnitude\n";
        f.precision(17);
        for (int axis = 0; axis < d; ++axis) {
            const std::vector<double> prof = psf_profile(psf, axis);
            const int half = grid[axis] / 2;
            for (std::size_t i = 0; i < prof.size(); ++i) {
                f << axis << ',' << static_cast<int>(i) - half << ',' << prof[i] / psf.peak_value << '\n';
            }
        }
    }
    return kExitOk;
}

int analyze_density(const AnalyzeArgs& a, const io::TrajectoryFile& t, std::ostream& out) {
    const SamplingPattern& k = t.pattern;
    TargetDensity rho;
    if (!a.density.empty()) {
        rho = io::load_spkd(a.density);
        if (rho.dims != k.dims) throw InputError("--density: grid dimension does not match the trajectory");
    } else {
        DensityParams p;
        p.cutoff = a.cutoff;
        p.decay = a.decay;
        p.validate();
        if (a.grid_n < 2) throw InputError("--grid-n must be >= 2");
        rho = discretize(p, a.grid_n, k.dims);
    }
    const DensityCompliance c = density_compliance(k, rho, a.bins);
    json j;
    j["mode"] = "density";
    j["trajectory"] = a.traj;
    j["dims"] = k.dims;
    j["particles"] = k.size();
    j["bins_per_axis"] = c.bins;
    j["l1_distance"] = c.l1_distance;
    emit_json(j, a.out, out);

    if (!a.hist.empty()) {
        auto f = open_out(a.hist);
        const char* names[] = {"i0", "i1", "i2"};
        for (int axis = 0; axis < k.dims; ++axis) f << names[axis] << ',';
        f << "empirical,target\n";
        f.precision(17);
        for (std::size_t b = 0; b < c.empirical.size(); ++b) {
            std::size_t rest = b;
            std::vector<std::size_t> idx(static_cast<std::size_t>(k.dims));
            for (int axis = k.dims - 1; axis >= 0; --axis) {
                idx[static_cast<std::size_t>(axis)] = rest % static_cast<std::size_t>(c.bins);
                rest /= static_cast<std::size_t>(c.bins);
            }
            for (std::size_t i : idx) f << i << ',';
            f << c.empirical[b] << ',' << c.target[b] << '\n';
        }
    }
    return kExitOk;
}

int analyze_waveforms(const AnalyzeArgs& a, const io::TrajectoryFile& t, std::ostream& out) {
    const SamplingPattern& k = t.pattern;
    const std::vector<double> k_max = a.k_max.empty() ? t.k_max : a.k_max;
    if (k_max.empty()) throw InputError("--k-max is required for trajectories without a k_max header (CSV input)");
    HardwareSpec hw = a.hw;
    hw.raster_dt = a.raster_dt > 0.0 ? a.raster_dt : t.raster_dt;
    if (!(hw.raster_dt > 0.0)) throw InputError("--raster-dt is required for trajectories without a raster_dt header");
    const WaveformReport w = kspace_to_waveforms(k, k_max, hw, a.tolerance);

    json j;
    j["mode"] = "waveforms";
    j["trajectory"] = a.traj;
    j["feasible"] = w.feasible();
    j["gradient_ok"] = w.gradient_ok;
    j["slew_ok"] = w.slew_ok;
    j["max_gradient"] = w.max_gradient;
    j["g_max"] = w.g_max;
    j["max_slew"] = w.max_slew;
    j["s_max"] = w.s_max;
    j["gradient_saturation"] = w.gradient_saturation;
    j["slew_saturation"] = w.slew_saturation;
    j["relative_tolerance"] = w.relative_tolerance;
    j["raster_dt"] = hw.raster_dt;
    j["k_max"] = k_max;
    emit_json(j, a.out, out);

    if (!a.csv.empty()) {
        auto f = open_out(a.csv);
        const int d = w.dims;
        const char* g_names[] = {"gx", "gy", "gz"};
        const char* s_names[] = {"sx", "sy", "sz"};
        f << "shot,index";
        for (int ax = 0; ax < d; ++ax) f << ',' << g_names[ax];
        f << ",g_norm";
        for (int ax = 0; ax < d; ++ax) f << ',' << s_names[ax];
        f << ",s_norm\n";
        f.precision(9);
        const std::size_t ng = w.samples - 1, nsl = w.samples - 2;
        for (std::size_t s = 0; s < w.shots; ++s) {
            for (std::size_t n = 0; n < ng; ++n) {
                f << s << ',' << n;
                for (int ax = 0; ax < d; ++ax) f << ',' << w.gradient[(s * ng + n) * d + ax];
                f << ',' << w.gradient_magnitude[s * ng + n];
                if (n < nsl) {
                    for (int ax = 0; ax < d; ++ax) f << ',' << w.slew[(s * nsl + n) * d + ax];
                    f << ',' << w.slew_magnitude[s * nsl + n];
                } else {
                    for (int ax = 0; ax <= d; ++ax) f << ',';
                }
                f << '\n';
            }
        }
    }
    return kExitOk;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    const io::TrajectoryFile t = io::load_trajectory(a.traj);
    t.pattern.validate();
    if (a.mode == "psf") return analyze_psf(a, t, out);
    if (a.mode == "density") return analyze_density(a, t, out);
    return analyze_waveforms(a, t, out);
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    int min_log2 = 10;
    int max_log2 = 16;
    int direct_max_log2 = 16;
    int dims = 2;
    std::string backend = "both";
    RepulsionConfig rep;
    std::uint64_t seed = 1;
    std::string out;
};

double relative_error(const RepulsionResult& approx, const RepulsionResult& exact) {
    double dg = 0.0, g = 0.0;
    for (std::size_t i = 0; i < exact.grad.size(); ++i) {
        const double e = approx.grad[i] - exact.grad[i];
        dg += e * e;
        g += exact.grad[i] * exact.grad[i];
    }
    const double grad_err = g > 0.0 ? std::sqrt(dg / g) : std::sqrt(dg);
    const double cost_err = std::abs(approx.cost - exact.cost) / std::max(std::abs(exact.cost), 1e-300);
    return std::max(grad_err, cost_err);
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    if (a.dims != 2 && a.dims != 3) throw InputError("--dims must be 2 or 3");
    if (a.min_log2 < 1 || a.max_log2 < a.min_log2 || a.max_log2 > 26) {
        throw InputError("--min-log2-p / --max-log2-p must satisfy 1 <= min <= max <= 26");
    }
    if (a.backend != "both" && a.backend != "direct" && a.backend != "tree") {
        throw InputError("--backend must be both, direct or tree");
    }
    a.rep.validate();
    std::ofstream file;
    if (!a.out.empty() && a.out != "-") file = open_out(a.out);
    std::ostream& csv = file.is_open() ? static_cast<std::ostream&>(file) : out;
    csv << "p,backend,wall_ms,rel_err_vs_direct\n";
    csv.precision(6);

    std::mt19937_64 rng(a.seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (int lg = a.min_log2; lg <= a.max_log2; ++lg) {
        const std::size_t p = std::size_t{1} << lg;
        SamplingPattern k(1, p, a.dims);
        for (double& c : k.coords) c = uni(rng);

        const bool run_direct = a.backend != "tree" && lg <= a.direct_max_log2;
        const bool run_tree = a.backend != "direct";
        RepulsionResult exact;
        if (run_direct) {
            const auto t0 = Clock::now();
            exact = eval_repulsion_direct(k, a.rep.kernel_eps);
            csv << p << ",direct," << ms_since(t0) << ",\n";
        }
        if (run_tree) {
            const auto t0 = Clock::now();
            const RepulsionResult tree = eval_repulsion_tree(k, a.rep);
            const double ms = ms_since(t0);
            csv << p << ",tree," << ms << ',';
            if (run_direct) csv << relative_error(tree, exact);
            csv << '\n';
            for (const std::string& w : tree.warnings) err << "warning (p=" << p << "): " << w << "\n";
        }
        csv.flush();
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"k-space trajectory design: generate, analyze and benchmark sampling patterns", "ktraj"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = all logical cores)")->check(CLI::NonNegativeNumber);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Optimize a trajectory from a config file");
    g->add_option("--config", gen.config, "Config file")->required();
    g->add_option("--out", gen.out, "Output SPKT path (overrides output.trajectory)");
    g->add_flag("--dry-run", gen.dry_run, "Validate and print cost estimates without running");

    AnalyzeArgs an;
    auto* a = app.add_subcommand("analyze", "Evaluate a trajectory");
    a->add_option("mode", an.mode, "psf, density or waveforms")
        ->required()
        ->check(CLI::IsMember({"psf", "density", "waveforms"}));
    a->add_option("--traj", an.traj, "SPKT or CSV trajectory")->required();
    a->add_option("--out", an.out, "JSON report path (default stdout)");
    a->add_option("--grid", an.grid, "psf: image matrix, one size or a comma list (default 64 in 2D, 32 in 3D)");
    a->add_option("--iters", an.iters, "psf: density-compensation iterations (0 = unit weights)");
    a->add_option("--dwell", an.dwell, "psf: resample to this ADC dwell time (s) first");
    a->add_flag("--allow-slow", an.allow_slow, "psf: allow direct DFTs above the size budget");
    a->add_option("--profile", an.profile, "psf: CSV of normalized line cuts through the peak");
    a->add_option("--noise-radius", an.noise_radius, "psf: normalized radius where the noise region starts");
    a->add_option("--bins", an.bins, "density: histogram bins per axis");
    a->add_option("--grid-n", an.grid_n, "density: target grid half-width");
    a->add_option("--cutoff", an.cutoff, "density: plateau radius");
    a->add_option("--decay", an.decay, "density: fall-off exponent");
    a->add_option("--density", an.density, "density: SPKD target grid instead of the parametric profile");
    a->add_option("--hist", an.hist, "density: per-bin histogram CSV");
    a->add_option("--g-max", an.hw.g_max, "waveforms: gradient limit (T/m)");
    a->add_option("--s-max", an.hw.s_max, "waveforms: slew limit (T/m/s)");
    a->add_option("--gamma", an.hw.gamma, "waveforms: gyromagnetic ratio / 2pi (Hz/T)");
    a->add_option("--k-max", an.k_max, "waveforms: per-axis k_max (1/m), overrides the file header")->delimiter(',');
    a->add_option("--raster-dt", an.raster_dt, "waveforms: raster time (s), overrides the file header");
    a->add_option("--tolerance", an.tolerance, "waveforms: relative slack above the limits");
    a->add_option("--csv", an.csv, "waveforms: per-sample gradient and slew CSV");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Time direct and tree repulsion over p = 2^k");
    b->add_option("--max-log2-p", bench.max_log2, "Largest log2(p)");
    b->add_option("--min-log2-p", bench.min_log2, "Smallest log2(p)");
    b->add_option("--direct-max-log2-p", bench.direct_max_log2, "Skip direct summation above this log2(p)");
    b->add_option("--dims", bench.dims, "2 or 3");
    b->add_option("--backend", bench.backend, "both, direct or tree");
    b->add_option("--precision", bench.rep.tree_precision, "Tree target relative error");
    b->add_option("--order", bench.rep.interp_order, "Tree interpolation order");
    b->add_option("--theta", bench.rep.mac_theta, "Tree acceptance parameter");
    b->add_option("--leaf-size", bench.rep.leaf_size, "Tree leaf capacity");
    b->add_option("--eps", bench.rep.kernel_eps, "Kernel regularization");
    b->add_option("--seed", bench.seed, "Random seed for particle positions");
    b->add_option("--out", bench.out, "CSV path (default stdout)");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitInput;
    }

    try {
        set_num_threads(threads);
        if (g->parsed()) return cmd_generate(gen, out, err);
        if (a->parsed()) return cmd_analyze(an, out);
        return cmd_bench(bench, out, err);
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace ktraj::cli
