#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "ktraj/core.hpp"
#include "ktraj/density.hpp"

namespace ktraj {

/// Budget, in sample-voxel products, above which the direct DFT needs allow_slow.
inline constexpr double kDirectDftBudget = 2e10;

/// Image-domain response on voxels x in {-N/2, ..., N/2 - 1} per axis.
/// Row-major with the first axis slowest; the origin voxel has index N/2 on every axis.
struct PsfVolume {
    std::vector<int> shape;
    std::vector<std::complex<double>> values;
    std::size_t peak_index = 0;
    double peak_value = 0.0;  // magnitude

    int dims() const { return static_cast<int>(shape.size()); }
    std::size_t size() const { return values.size(); }
    std::vector<double> magnitude() const;
};

/// Pipe-Menon iteration w <- w / |A A^H w| starting from w = 1, where A^H grids onto the
/// image grid by direct DFT and A samples back. Denominators are floored at 1e-12.
std::vector<double> density_compensation(const SamplingPattern& k, std::span<const int> grid, int iters = 10,
                                         bool allow_slow = false);

/// PSF(x) = sum_j w_j exp(i pi k_j . x) for all-ones measurements.
PsfVolume compute_psf(const SamplingPattern& k, std::span<const int> grid, std::span<const double> weights,
                      bool allow_slow = false);

struct PsfMetrics {
    std::vector<double> fwhm;        // voxels per axis; +inf when no half-maximum crossing exists
    std::vector<bool> fwhm_found;
    double psl_db = 0.0;             // capped at kMetricCapDb
    double pnl_db = 0.0;
    bool sidelobe_found = false;
    std::vector<int> main_lobe_lo;   // per-axis main-lobe box, voxel indices
    std::vector<int> main_lobe_hi;
};

inline constexpr double kMetricCapDb = 300.0;

/// FWHM, peak-to-sidelobe and peak-to-noise levels (20 log10 amplitude ratios).
/// The noise region is the set of voxels at normalized radius above noise_radius.
PsfMetrics psf_metrics(const PsfVolume& psf, double noise_radius = 0.75);

/// Full width at half maximum of a 1-D profile around index `peak`, in samples.
/// Crossings are located on a parabola through the log-values of three neighbouring
/// samples (exact for Gaussians), with linear interpolation where a log is undefined.
double fwhm_1d(std::span<const double> profile, std::size_t peak, bool* found = nullptr);

/// Magnitude profile along `axis` through the peak.
std::vector<double> psf_profile(const PsfVolume& psf, int axis);

struct DensityCompliance {
    int bins = 0;
    int dims = 0;
    double l1_distance = 0.0;
    std::vector<double> empirical;  // bins^d, sums to 1
    std::vector<double> target;     // bins^d, sums to 1
};

/// Bins samples into a uniform bins^d grid over [-1, 1]^d and compares with the target
/// density aggregated into the same bins (each density node spreads its mass over its
/// cell of width 1/N, clipped to the domain).
DensityCompliance density_compliance(const SamplingPattern& k, const TargetDensity& rho, int bins);

}  // namespace ktraj
