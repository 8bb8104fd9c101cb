#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstring>

#include "ktraj/analysis.hpp"
#include "ktraj/attraction.hpp"
#include "ktraj/config.hpp"
#include "ktraj/core.hpp"
#include "ktraj/density.hpp"
#include "ktraj/errors.hpp"
#include "ktraj/io.hpp"
#include "ktraj/optimizer.hpp"
#include "ktraj/parallel.hpp"
#include "ktraj/projection.hpp"
#include "ktraj/repulsion.hpp"

namespace py = pybind11;
using namespace ktraj;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Patterns cross the boundary as (shots, samples, dims) float64 arrays.
SamplingPattern to_pattern(const Array& a) {
    if (a.ndim() != 3) throw InputError("pattern must have shape (shots, samples, dims)");
    const auto dims = static_cast<int>(a.shape(2));
    if (dims != 2 && dims != 3) throw InputError("pattern dims must be 2 or 3");
    SamplingPattern k(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), dims);
    std::memcpy(k.coords.data(), a.data(), k.coords.size() * sizeof(double));
    return k;
}

Array from_pattern(const SamplingPattern& k) {
    Array a({static_cast<py::ssize_t>(k.shots), static_cast<py::ssize_t>(k.samples), static_cast<py::ssize_t>(k.dims)});
    std::memcpy(a.mutable_data(), k.coords.data(), k.coords.size() * sizeof(double));
    return a;
}

Array vector_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
    Array a(shape);
    std::memcpy(a.mutable_data(), v.data(), v.size() * sizeof(double));
    return a;
}

Array grad_like(const std::vector<double>& g, const SamplingPattern& k) {
    return vector_array(g, {static_cast<py::ssize_t>(k.shots), static_cast<py::ssize_t>(k.samples),
                            static_cast<py::ssize_t>(k.dims)});
}

py::dict residual_dict(const ShotResiduals& r) {
    py::dict d;
    d["amplitude"] = r.amplitude;
    d["speed"] = r.speed;
    d["acceleration"] = r.acceleration;
    d["pin"] = r.pin;
    d["max"] = r.max();
    return d;
}

RepulsionBackend parse_backend(const std::string& s) {
    if (s == "direct") return RepulsionBackend::Direct;
    if (s == "tree") return RepulsionBackend::Tree;
    throw InputError("backend must be 'direct' or 'tree'");
}

AttractionGradient parse_mode(const std::string& s) {
    if (s == "consistent") return AttractionGradient::Consistent;
    if (s == "interpolated") return AttractionGradient::InterpolatedForce;
    throw InputError("mode must be 'consistent' or 'interpolated'");
}

py::array_t<std::complex<double>> psf_array(const PsfVolume& psf) {
    std::vector<py::ssize_t> shape(psf.shape.begin(), psf.shape.end());
    py::array_t<std::complex<double>> a(shape);
    std::copy(psf.values.begin(), psf.values.end(), a.mutable_data());
    return a;
}

PsfVolume psf_from_array(const py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw InputError("PSF must be a 2D or 3D array");
    PsfVolume psf;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) psf.shape.push_back(static_cast<int>(a.shape(i)));
    psf.values.assign(a.data(), a.data() + a.size());
    if (psf.values.empty()) throw InputError("PSF is empty");
    const std::vector<double> mag = psf.magnitude();
    const auto it = std::max_element(mag.begin(), mag.end());
    psf.peak_index = static_cast<std::size_t>(it - mag.begin());
    psf.peak_value = *it;
    return psf;
}

}  // namespace

PYBIND11_MODULE(_ktraj, m) {
    m.doc() = "k-space trajectory optimization and analysis";

    auto input_error = py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", input_error.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    m.def("set_num_threads", &set_num_threads, py::arg("n"), "Worker threads; 0 restores the default.");
    m.def("num_threads", &num_threads);

    py::class_<HardwareSpec>(m, "HardwareSpec")
        .def(py::init<>())
        .def_readwrite("g_max", &HardwareSpec::g_max)
        .def_readwrite("s_max", &HardwareSpec::s_max)
        .def_readwrite("gamma", &HardwareSpec::gamma)
        .def_readwrite("raster_dt", &HardwareSpec::raster_dt)
        .def_readwrite("dwell_dt", &HardwareSpec::dwell_dt)
        .def_readwrite("fov", &HardwareSpec::fov)
        .def_readwrite("matrix", &HardwareSpec::matrix)
        .def_property_readonly("dims", &HardwareSpec::dims)
        .def("validate", &HardwareSpec::validate);

    m.def("normalized_limits", [](const HardwareSpec& hw) {
        const NormalizedLimits l = normalized_limits(hw);
        py::dict d;
        d["alpha"] = l.alpha;
        d["beta"] = l.beta;
        d["k_max"] = l.k_max;
        d["k_max_shared"] = l.k_max_shared;
        return d;
    });

    py::class_<OptimizerConfig>(m, "OptimizerConfig")
        .def(py::init<>())
        .def_readwrite("shots", &OptimizerConfig::shots)
        .def_readwrite("samples", &OptimizerConfig::samples)
        .def_readwrite("dims", &OptimizerConfig::dims)
        .def_readwrite("n_decim", &OptimizerConfig::n_decim)
        .def_readwrite("n_git", &OptimizerConfig::n_git)
        .def_readwrite("n_pit", &OptimizerConfig::n_pit)
        .def_readwrite("init_pit", &OptimizerConfig::init_pit)
        .def_readwrite("fixed_step_iters", &OptimizerConfig::fixed_step_iters)
        .def_readwrite("eta0", &OptimizerConfig::eta0)
        .def_readwrite("step_fraction", &OptimizerConfig::step_fraction)
        .def_readwrite("perturbation", &OptimizerConfig::perturbation)
        .def_readwrite("seed", &OptimizerConfig::seed)
        .def_readwrite("grid_n", &OptimizerConfig::grid_n)
        .def_readwrite("field_eps", &OptimizerConfig::field_eps)
        .def_readwrite("pin_center", &OptimizerConfig::pin_center)
        .def_property(
            "cutoff", [](const OptimizerConfig& c) { return c.density.cutoff; },
            [](OptimizerConfig& c, double v) { c.density.cutoff = v; })
        .def_property(
            "decay", [](const OptimizerConfig& c) { return c.density.decay; },
            [](OptimizerConfig& c, double v) { c.density.decay = v; })
        .def_property(
            "backend",
            [](const OptimizerConfig& c) {
                return std::string(c.repulsion.backend == RepulsionBackend::Tree ? "tree" : "direct");
            },
            [](OptimizerConfig& c, const std::string& v) { c.repulsion.backend = parse_backend(v); })
        .def_property(
            "kernel_eps", [](const OptimizerConfig& c) { return c.repulsion.kernel_eps; },
            [](OptimizerConfig& c, double v) { c.repulsion.kernel_eps = v; })
        .def_property(
            "attraction_gradient",
            [](const OptimizerConfig& c) {
                return std::string(c.attraction_gradient == AttractionGradient::Consistent ? "consistent"
                                                                                           : "interpolated");
            },
            [](OptimizerConfig& c, const std::string& v) { c.attraction_gradient = parse_mode(v); })
        .def("validate", &OptimizerConfig::validate);

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("hardware", &RunConfig::hardware)
        .def_readwrite("optimizer", &RunConfig::optimizer)
        .def_readwrite("output", &RunConfig::output)
        .def_readwrite("density_file", &RunConfig::density_file)
        .def("validate", &RunConfig::validate)
        .def("format", [](const RunConfig& c) { return format_config(c); });

    m.def("parse_config", [](const std::string& text) { return parse_config(text); }, py::arg("text"));
    m.def("load_config", &load_config, py::arg("path"));

    m.def("init_radial", [](std::size_t shots, std::size_t samples, int dims) {
        return from_pattern(init_radial(shots, samples, dims));
    }, py::arg("shots"), py::arg("samples"), py::arg("dims"));
    m.def("perturb", [](const Array& k, double amplitude, std::uint64_t seed) {
        return from_pattern(perturb(to_pattern(k), amplitude, seed));
    }, py::arg("k"), py::arg("amplitude"), py::arg("seed"));

    m.def("discretize_density", [](int grid_n, int dims, double cutoff, double decay) {
        DensityParams p;
        p.cutoff = cutoff;
        p.decay = decay;
        const TargetDensity rho = discretize(p, grid_n, dims);
        const auto side = static_cast<py::ssize_t>(rho.side());
        std::vector<py::ssize_t> shape(dims, side);
        return vector_array(rho.grid, shape);
    }, py::arg("grid_n"), py::arg("dims"), py::arg("cutoff") = 0.25, py::arg("decay") = 2.0);

    py::class_<KernelField>(m, "AttractionField")
        .def(py::init([](const Array& density, double eps) {
                 if (density.ndim() != 2 && density.ndim() != 3) throw InputError("density must be 2D or 3D");
                 std::vector<double> g(density.data(), density.data() + density.size());
                 const TargetDensity rho = density_from_grid(std::move(g), static_cast<int>(density.ndim()));
                 py::gil_scoped_release release;
                 return precompute_field(rho, eps > 0.0 ? eps : default_field_eps(rho.grid_n));
             }),
             py::arg("density"), py::arg("eps") = 0.0)
        .def_readonly("dims", &KernelField::dims)
        .def_readonly("grid_n", &KernelField::grid_n)
        .def("evaluate", [](const KernelField& f, const Array& k, const std::string& mode) {
            const SamplingPattern p = to_pattern(k);
            AttractionResult r;
            {
                py::gil_scoped_release release;
                r = eval_attraction(p, f, parse_mode(mode));
            }
            return py::make_tuple(r.cost, grad_like(r.grad, p));
        }, py::arg("k"), py::arg("mode") = "consistent");

    m.def("repulsion", [](const Array& k, double eps, const std::string& backend, double precision) {
        const SamplingPattern p = to_pattern(k);
        RepulsionConfig cfg;
        cfg.kernel_eps = eps;
        cfg.backend = parse_backend(backend);
        cfg.tree_precision = precision;
        RepulsionResult r;
        {
            py::gil_scoped_release release;
            r = eval_repulsion(p, cfg);
        }
        return py::make_tuple(r.cost, grad_like(r.grad, p));
    }, py::arg("k"), py::arg("eps") = 1e-3, py::arg("backend") = "direct", py::arg("precision") = 1e-4);

    m.def("project_shot",
          [](const Array& shot, double alpha, double beta, double raster_dt, int n_pit, std::optional<std::size_t> pin_index,
             std::optional<std::vector<double>> pin_value) {
              if (shot.ndim() != 2) throw InputError("shot must have shape (samples, dims)");
              const int dims = static_cast<int>(shot.shape(1));
              ProjectionConfig cfg;
              cfg.alpha = alpha;
              cfg.beta = beta;
              cfg.raster_dt = raster_dt;
              cfg.n_pit = n_pit;
              if (pin_index) {
                  LinearConstraint c;
                  c.pinned_index = *pin_index;
                  c.pinned_value = pin_value.value_or(std::vector<double>(dims, 0.0));
                  cfg.pin = c;
              }
              const std::span<const double> in(shot.data(), static_cast<std::size_t>(shot.size()));
              ShotProjection r;
              {
                  py::gil_scoped_release release;
                  r = project_shot(in, dims, cfg);
              }
              py::dict d;
              d["coords"] = vector_array(r.coords, {shot.shape(0), shot.shape(1)});
              d["residual"] = residual_dict(r.residual);
              d["solver_residual"] = residual_dict(r.solver_residual);
              d["restoration"] = r.restoration;
              return d;
          },
          py::arg("shot"), py::arg("alpha"), py::arg("beta"), py::arg("raster_dt") = 10e-6, py::arg("n_pit") = 100,
          py::arg("pin_index") = py::none(), py::arg("pin_value") = py::none());

    m.def("optimize", [](const RunConfig& cfg) {
        cfg.validate();
        OptimizeResult res;
        {
            py::gil_scoped_release release;
            const OptimizerConfig& o = cfg.optimizer;
            const TargetDensity rho = cfg.density_file.empty() ? discretize(o.density, o.resolved_grid_n(cfg.hardware), o.dims)
                                                                 : io::load_spkd(cfg.density_file);
            const KernelField field =
                precompute_field(rho, o.field_eps > 0.0 ? o.field_eps : default_field_eps(rho.grid_n));
            res = optimize(o, cfg.hardware, field);
        }
        py::list records;
        for (const IterationRecord& r : res.trace.records) {
            py::dict d;
            d["level"] = r.level;
            d["iteration"] = r.iteration;
            d["samples"] = r.samples;
            d["cost"] = r.cost;
            d["attraction"] = r.attraction;
            d["repulsion"] = r.repulsion;
            d["step"] = r.step;
            d["max_residual"] = r.max_residual;
            d["wall_ms"] = r.wall_ms;
            records.append(d);
        }
        py::dict out;
        out["pattern"] = from_pattern(res.pattern);
        out["initial"] = from_pattern(res.initial);
        out["initial_cost"] = res.trace.initial_cost;
        out["final_cost"] = res.trace.final_cost;
        out["final_residual"] = res.trace.final_residual;
        out["trace"] = records;
        out["warnings"] = res.trace.warnings;
        return out;
    }, py::arg("config"));

    m.def("density_compensation", [](const Array& k, std::vector<int> grid, int iters, bool allow_slow) {
        const SamplingPattern p = to_pattern(k);
        std::vector<double> w;
        {
            py::gil_scoped_release release;
            w = density_compensation(p, grid, iters, allow_slow);
        }
        return vector_array(w, {static_cast<py::ssize_t>(p.shots), static_cast<py::ssize_t>(p.samples)});
    }, py::arg("k"), py::arg("grid"), py::arg("iters") = 10, py::arg("allow_slow") = false);

    m.def("compute_psf", [](const Array& k, std::vector<int> grid, const Array& weights, bool allow_slow) {
        const SamplingPattern p = to_pattern(k);
        const std::span<const double> w(weights.data(), static_cast<std::size_t>(weights.size()));
        PsfVolume psf;
        {
            py::gil_scoped_release release;
            psf = compute_psf(p, grid, w, allow_slow);
        }
        return psf_array(psf);
    }, py::arg("k"), py::arg("grid"), py::arg("weights"), py::arg("allow_slow") = false);

    m.def("psf_metrics", [](const py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>& psf,
                            double noise_radius) {
        const PsfMetrics mt = psf_metrics(psf_from_array(psf), noise_radius);
        py::dict d;
        d["fwhm"] = mt.fwhm;
        d["fwhm_found"] = mt.fwhm_found;
        d["psl_db"] = mt.psl_db;
        d["pnl_db"] = mt.pnl_db;
        d["sidelobe_found"] = mt.sidelobe_found;
        return d;
    }, py::arg("psf"), py::arg("noise_radius") = 0.75);

    m.def("density_compliance", [](const Array& k, int grid_n, int bins, double cutoff, double decay) {
        const SamplingPattern p = to_pattern(k);
        DensityParams params;
        params.cutoff = cutoff;
        params.decay = decay;
        const DensityCompliance c = density_compliance(p, discretize(params, grid_n, p.dims), bins);
        std::vector<py::ssize_t> shape(p.dims, bins);
        py::dict d;
        d["l1_distance"] = c.l1_distance;
        d["empirical"] = vector_array(c.empirical, shape);
        d["target"] = vector_array(c.target, shape);
        return d;
    }, py::arg("k"), py::arg("grid_n"), py::arg("bins") = 8, py::arg("cutoff") = 0.25, py::arg("decay") = 2.0);

    m.def("kspace_to_waveforms", [](const Array& k, const HardwareSpec& hw, double tolerance) {
        const SamplingPattern p = to_pattern(k);
        const WaveformReport w = kspace_to_waveforms(p, normalized_limits(hw).k_max, hw, tolerance);
        const auto s = static_cast<py::ssize_t>(w.shots), n = static_cast<py::ssize_t>(w.samples),
                   d = static_cast<py::ssize_t>(w.dims);
        py::dict out;
        out["gradient"] = vector_array(w.gradient, {s, n - 1, d});
        out["slew"] = vector_array(w.slew, {s, std::max<py::ssize_t>(n - 2, 0), d});
        out["max_gradient"] = w.max_gradient;
        out["max_slew"] = w.max_slew;
        out["gradient_saturation"] = w.gradient_saturation;
        out["slew_saturation"] = w.slew_saturation;
        out["feasible"] = w.feasible();
        return out;
    }, py::arg("k"), py::arg("hardware"), py::arg("tolerance") = 0.01);

    m.def("read_trajectory", [](const std::string& path) {
        const io::TrajectoryFile f = io::load_trajectory(path);
        py::dict d;
        d["pattern"] = from_pattern(f.pattern);
        d["k_max"] = f.k_max;
        d["raster_dt"] = f.raster_dt;
        return d;
    }, py::arg("path"));

    m.def("write_spkt", [](const std::string& path, const Array& k, std::vector<double> k_max, double raster_dt) {
        io::TrajectoryFile f;
        f.pattern = to_pattern(k);
        f.k_max = std::move(k_max);
        f.raster_dt = raster_dt;
        io::save_spkt(path, f);
    }, py::arg("path"), py::arg("k"), py::arg("k_max"), py::arg("raster_dt"));
}
