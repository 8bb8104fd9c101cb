#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ktraj {

/// Physical scanner limits and acquisition geometry.
///
/// `gamma` is the gyromagnetic ratio divided by 2*pi, in Hz/T (42.57e6 for protons),
/// so no 2*pi factor appears anywhere downstream. `fov` and `matrix` carry one entry
/// per spatial axis; their common length is the trajectory dimension.
struct HardwareSpec {
    double g_max = 40e-3;      // T/m
    double s_max = 180.0;      // T/m/s
    double gamma = 42.57e6;    // Hz/T
    double raster_dt = 10e-6;  // s
    double dwell_dt = 2e-6;    // s
    std::vector<double> fov = {0.23, 0.23, 0.23};  // m
    std::vector<int> matrix = {384, 384, 208};

    int dims() const { return static_cast<int>(fov.size()); }

    /// Raster-to-dwell ratio; throws if not an integer.
    int oversampling() const;

    /// Throws InputError naming the offending field.
    void validate() const;
};

/// Hardware limits expressed in the normalized domain [-1, 1]^d.
struct NormalizedLimits {
    double alpha = 0.0;          // 1/s, speed bound
    double beta = 0.0;           // 1/s^2, acceleration bound
    std::vector<double> k_max;   // 1/m, per axis
    double k_max_shared = 0.0;   // 1/m, the value alpha and beta are normalized by (max over axes)
};

/// A multi-shot trajectory in normalized coordinates.
///
/// Coordinates are stored shot-major, then sample, with the axis innermost:
/// coords[(shot * samples + sample) * dims + axis].
struct SamplingPattern {
    std::size_t shots = 0;
    std::size_t samples = 0;
    int dims = 2;
    std::vector<double> coords;

    SamplingPattern() = default;
    SamplingPattern(std::size_t n_shots, std::size_t n_samples, int n_dims);

    std::size_t size() const { return shots * samples; }  // p
    std::size_t shot_stride() const { return samples * static_cast<std::size_t>(dims); }

    double& at(std::size_t shot, std::size_t sample, int axis) {
        return coords[(shot * samples + sample) * dims + axis];
    }
    double at(std::size_t shot, std::size_t sample, int axis) const {
        return coords[(shot * samples + sample) * dims + axis];
    }
    std::span<double> shot(std::size_t i) { return {coords.data() + i * shot_stride(), shot_stride()}; }
    std::span<const double> shot(std::size_t i) const {
        return {coords.data() + i * shot_stride(), shot_stride()};
    }
    std::span<const double> point(std::size_t i) const {
        return {coords.data() + i * dims, static_cast<std::size_t>(dims)};
    }

    /// Throws InputError if the shape is inconsistent or any coordinate is non-finite.
    void validate() const;

    /// Largest |coordinate| over the whole pattern.
    double max_abs() const;
};

/// Pins one sample of every shot to a fixed location (echo-time constraint).
struct LinearConstraint {
    std::size_t pinned_index = 0;
    std::vector<double> pinned_value;  // length dims
};

/// Feasibility tolerance, in normalized units, used by constraint reports.
inline constexpr double kFeasibilityTol = 1e-6;

NormalizedLimits normalized_limits(const HardwareSpec& hw);

/// Gradient and slew waveforms recovered from a trajectory, with a feasibility summary.
struct WaveformReport {
    std::size_t shots = 0;
    std::size_t samples = 0;
    int dims = 0;
    // shots x (samples-1) x dims, T/m; entry n of a shot is G[n+1].
    std::vector<double> gradient;
    // shots x (samples-2) x dims, T/m/s.
    std::vector<double> slew;
    std::vector<double> gradient_magnitude;  // shots x (samples-1)
    std::vector<double> slew_magnitude;      // shots x (samples-2)
    double max_gradient = 0.0;
    double max_slew = 0.0;
    double g_max = 0.0;
    double s_max = 0.0;
    // Fraction of samples whose magnitude is within 1% of the respective limit.
    double gradient_saturation = 0.0;
    double slew_saturation = 0.0;
    double relative_tolerance = 0.01;
    bool gradient_ok = false;
    bool slew_ok = false;
    bool feasible() const { return gradient_ok && slew_ok; }
};

/// Converts normalized k-space positions to physical gradient and slew waveforms.
/// Uses per-axis k_max to un-normalize, so anisotropic matrices export correctly.
/// `relative_tolerance` is the slack allowed above G_max / S_max before a limit is
/// reported as violated.
WaveformReport kspace_to_waveforms(const SamplingPattern& k, const HardwareSpec& hw,
                                   double relative_tolerance = 0.01);

/// Same with explicit per-axis k_max (1/m); only g_max, s_max, gamma and raster_dt are
/// read from `hw`. Used for trajectory files that store k_max but not fov/matrix.
WaveformReport kspace_to_waveforms(const SamplingPattern& k, std::span<const double> k_max,
                                   const HardwareSpec& hw, double relative_tolerance = 0.01);

/// Re-integrates gradients starting at each shot's first sample; the inverse of
/// kspace_to_waveforms up to rounding.
SamplingPattern waveforms_to_kspace(const WaveformReport& waves, const SamplingPattern& start,
                                    const HardwareSpec& hw);

/// Linear interpolation of every shot from raster period to ADC dwell period.
/// Output has samples * (raster_dt / dwell_dt) samples per shot; shot endpoints are kept bitwise.
SamplingPattern resample_to_dwell(const SamplingPattern& k, const HardwareSpec& hw);

/// Same as above with an explicit integer ratio.
SamplingPattern resample_linear(const SamplingPattern& k, int ratio);

/// Retrospective acceleration factor relative to a fully sampled Cartesian grid:
/// (N_y * N_z) / N_c in 3D, N_y / N_c in 2D.
double acceleration_factor(std::size_t n_shots, std::span<const int> matrix);

}  // namespace ktraj
