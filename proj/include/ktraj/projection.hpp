#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ktraj/core.hpp"

namespace ktraj {

enum class ProjectionRestart {
    Adaptive,  // gradient-based momentum restart
    Monotone,  // monotone FISTA: the dual objective never increases
    None,
};

/// Constraint set for one resolution level and the inner solver budget.
///
/// Per-sample bounds are alpha * raster_dt on first differences and
/// beta * raster_dt^2 on second differences of the normalized coordinates.
/// Amplitude is bounded per coordinate by 1.
struct ProjectionConfig {
    int n_pit = 100;
    double feas_tol = kFeasibilityTol;
    double alpha = 0.0;  // 1/s
    double beta = 0.0;   // 1/s^2
    double raster_dt = 10e-6;
    std::optional<LinearConstraint> pin;
    ProjectionRestart restart = ProjectionRestart::Adaptive;
    // Pull the solver output toward the pinned constant shot just far enough to satisfy
    // every constraint exactly. The move is bounded by the remaining violation.
    bool restore_feasibility = true;

    double speed_bound() const { return alpha * raster_dt; }
    double accel_bound() const { return beta * raster_dt * raster_dt; }

    void validate(int dims, std::size_t samples) const;
};

/// Constraint violations of a shot (0 means satisfied).
struct ShotResiduals {
    double amplitude = 0.0;
    double speed = 0.0;
    double acceleration = 0.0;
    double pin = 0.0;

    double max() const;
};

struct ShotProjection {
    std::vector<double> coords;   // samples x dims
    ShotResiduals residual;       // of the returned shot
    ShotResiduals solver_residual;  // before feasibility restoration
    double restoration = 0.0;     // blend factor toward the pinned constant shot
    std::vector<double> dual_objective;  // per iteration, filled when requested
};

/// Euclidean projection of one shot onto the constraint set, solved by accelerated
/// proximal gradient on the dual of the stacked operator [I; D1; D2].
ShotProjection project_shot(std::span<const double> shot, int dims, const ProjectionConfig& cfg,
                            bool record_dual = false);

struct PatternProjection {
    SamplingPattern pattern;
    std::vector<ShotResiduals> residuals;  // per shot
    double max_residual = 0.0;
    double max_restoration = 0.0;
};

/// Projects every shot independently (in parallel). Each shot's result does not
/// depend on the other shots or on the thread count.
PatternProjection project_pattern(const SamplingPattern& k, const ProjectionConfig& cfg);

ShotResiduals shot_residuals(std::span<const double> shot, int dims, const ProjectionConfig& cfg);

/// Squared operator norm of [I; D1; D2] for a shot of n samples, estimated by 50 power
/// iterations with a 1% safety margin. Cached per n.
double stacked_operator_norm_sq(std::size_t n);

}  // namespace ktraj
