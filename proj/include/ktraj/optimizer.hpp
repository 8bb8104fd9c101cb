#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ktraj/attraction.hpp"
#include "ktraj/core.hpp"
#include "ktraj/density.hpp"
#include "ktraj/projection.hpp"
#include "ktraj/repulsion.hpp"

namespace ktraj {

struct OptimizerConfig {
    std::size_t shots = 32;
    std::size_t samples = 256;
    int dims = 2;
    int n_decim = 3;             // N_d: number of coarse levels
    int n_git = 100;             // gradient iterations per level
    int n_pit = 100;             // projection iterations per gradient iteration
    // Projection iterations for the perturbed initialization, which starts far from the
    // feasible set; 100 iterations there leave the restoration step to shrink the shots.
    int init_pit = 2000;
    int fixed_step_iters = 20;   // iterations per level that use eta0
    // Initial step. 0 selects it per level so the first step moves the fastest
    // particle by step_fraction of the mean sample spacing.
    double eta0 = 0.0;
    double step_fraction = 0.1;
    double perturbation = 0.25;  // P, uniform noise amplitude
    std::uint64_t seed = 0;
    DensityParams density;
    int grid_n = 0;              // density half-width N; 0 means twice the largest matrix size
    double field_eps = 0.0;      // attraction kernel eps; 0 means half a grid cell
    RepulsionConfig repulsion;
    AttractionGradient attraction_gradient = AttractionGradient::Consistent;
    bool pin_center = true;
    std::optional<std::size_t> pin_index;  // defaults to samples / 2
    double divergence_factor = 10.0;

    std::size_t resolved_pin_index() const { return pin_index.value_or(samples / 2); }
    int resolved_grid_n(const HardwareSpec& hw) const;

    /// Throws InputError naming the offending key.
    void validate() const;
};

struct IterationRecord {
    int level = 0;       // 0 is the final (full-resolution) level
    int iteration = 0;   // 1-based within the level
    std::size_t samples = 0;
    double cost = 0.0;
    double attraction = 0.0;
    double repulsion = 0.0;
    double step = 0.0;
    double max_residual = 0.0;  // after the projection that ends the iteration
    double wall_ms = 0.0;       // since the start of optimize
};

struct RunTrace {
    std::vector<IterationRecord> records;
    double initial_cost = 0.0;  // projected full-resolution initialization
    double final_cost = 0.0;
    double final_residual = 0.0;
    std::vector<std::string> warnings;
};

struct Energy {
    double cost = 0.0;  // attraction - repulsion
    double attraction = 0.0;
    double repulsion = 0.0;
    std::vector<double> grad;
    std::vector<std::string> warnings;
};

/// Total energy and its gradient (attraction gradient minus repulsion gradient).
Energy evaluate_energy(const SamplingPattern& k, const KernelField& field, const RepulsionConfig& rep,
                       AttractionGradient mode = AttractionGradient::Consistent);

/// Full-diameter radial spokes through the origin. 2D: n_c spokes at angles pi*i/n_c.
/// 3D: sqrt(n_c) in-plane spokes, each tilted sqrt(n_c) times out of the plane.
/// Sample n of every shot sits at t = (n - n_s/2) / (n_s/2) along its spoke.
SamplingPattern init_radial(std::size_t n_c, std::size_t n_s, int dims);

/// Adds i.i.d. uniform noise in [-P, P] per coordinate and clamps to [-1, 1].
SamplingPattern perturb(const SamplingPattern& k, double amplitude, std::uint64_t seed);

/// Step size for 1-based iteration `iter`: eta0 during the fixed phase, then the
/// Barzilai-Borwein ratio <dk, dg> / <dg, dg> clamped to [1e-3, 1e3] * eta0. Falls back
/// to prev_eta when the ratio is undefined or not positive.
double step_size(int iter, std::span<const double> dk, std::span<const double> dg, double eta0, double prev_eta,
                 int fixed_step_iters);

/// Dyadic upsampling of each shot: even samples are kept, odd samples are midpoints,
/// the final sample is extrapolated linearly and clamped to [-1, 1].
SamplingPattern upsample_dyadic(const SamplingPattern& k);

/// Keeps every `factor`-th sample of each shot.
SamplingPattern decimate(const SamplingPattern& k, std::size_t factor);

struct OptimizeResult {
    SamplingPattern pattern;
    SamplingPattern initial;  // projected full-resolution initialization
    RunTrace trace;
};

/// Multi-resolution projected gradient descent. Throws NumericalError when the cost
/// exceeds divergence_factor times its level minimum.
OptimizeResult optimize(const OptimizerConfig& cfg, const HardwareSpec& hw);

/// Same, with a precomputed attraction field (reused across runs that share a density).
OptimizeResult optimize(const OptimizerConfig& cfg, const HardwareSpec& hw, const KernelField& field);

/// Projection settings for level `level` (0 = full resolution).
ProjectionConfig level_projection(const OptimizerConfig& cfg, const HardwareSpec& hw, int level);

}  // namespace ktraj
