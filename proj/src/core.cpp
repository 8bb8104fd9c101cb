#include "ktraj/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ktraj/errors.hpp"

namespace ktraj {

int HardwareSpec::oversampling() const {
    if (!(raster_dt > 0.0) || !(dwell_dt > 0.0)) {
        throw InputError("hardware: raster_dt and dwell_dt must be positive");
    }
    const double ratio = raster_dt / dwell_dt;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio) {
        throw InputError("hardware: raster_dt must be an integer multiple of dwell_dt (ratio " +
                         std::to_string(ratio) + ")");
    }
    return static_cast<int>(rounded);
}

void HardwareSpec::validate() const {
    if (!(g_max >= 0.0)) throw InputError("hardware.g_max must be >= 0");
    if (!(s_max >= 0.0)) throw InputError("hardware.s_max must be >= 0");
    if (!(gamma > 0.0)) throw InputError("hardware.gamma must be > 0");
    if (!(raster_dt > 0.0)) throw InputError("hardware.raster_dt must be > 0");
    if (!(dwell_dt > 0.0)) throw InputError("hardware.dwell_dt must be > 0");
    if (dwell_dt > raster_dt) throw InputError("hardware.dwell_dt must not exceed raster_dt");
    if (fov.size() != 2 && fov.size() != 3) throw InputError("hardware.fov must have 2 or 3 entries");
    if (matrix.size() != fov.size()) {
        throw InputError("hardware.matrix must have as many entries as hardware.fov");
    }
    for (double f : fov) {
        if (!(f > 0.0)) throw InputError("hardware.fov entries must be > 0");
    }
    for (int m : matrix) {
        if (m < 2) throw InputError("hardware.matrix entries must be >= 2");
    }
    (void)oversampling();
}

SamplingPattern::SamplingPattern(std::size_t n_shots, std::size_t n_samples, int n_dims)
    : shots(n_shots), samples(n_samples), dims(n_dims),
      coords(n_shots * n_samples * static_cast<std::size_t>(n_dims), 0.0) {}

void SamplingPattern::validate() const {
    if (dims != 2 && dims != 3) throw InputError("pattern: dims must be 2 or 3");
    if (coords.size() != shots * samples * static_cast<std::size_t>(dims)) {
        throw InputError("pattern: coordinate count does not match shots * samples * dims");
    }
    for (double c : coords) {
        if (!std::isfinite(c)) throw InputError("pattern: non-finite coordinate");
    }
}

double SamplingPattern::max_abs() const {
    double m = 0.0;
    for (double c : coords) m = std::max(m, std::abs(c));
    return m;
}

NormalizedLimits normalized_limits(const HardwareSpec& hw) {
    if (hw.fov.empty() || hw.fov.size() != hw.matrix.size()) {
        throw InputError("hardware: fov and matrix must be non-empty and of equal length");
    }
    if (!(hw.dwell_dt > 0.0)) throw InputError("hardware.dwell_dt must be > 0");
    NormalizedLimits out;
    double fov_max = 0.0;
    for (std::size_t i = 0; i < hw.fov.size(); ++i) {
        if (!(hw.fov[i] > 0.0)) throw InputError("hardware.fov entries must be > 0");
        const double k = hw.matrix[i] / (2.0 * hw.fov[i]);
        out.k_max.push_back(k);
        out.k_max_shared = std::max(out.k_max_shared, k);
        fov_max = std::max(fov_max, hw.fov[i]);
    }
    const double nyquist_speed = 1.0 / (fov_max * hw.dwell_dt);
    out.alpha = std::min(hw.gamma * hw.g_max, nyquist_speed) / out.k_max_shared;
    out.beta = hw.gamma * hw.s_max / out.k_max_shared;
    return out;
}

WaveformReport kspace_to_waveforms(const SamplingPattern& k, const HardwareSpec& hw,
                                   double relative_tolerance) {
    if (static_cast<int>(hw.fov.size()) != k.dims) {
        throw InputError("waveforms: hardware dimension does not match pattern dimension");
    }
    return kspace_to_waveforms(k, normalized_limits(hw).k_max, hw, relative_tolerance);
}

WaveformReport kspace_to_waveforms(const SamplingPattern& k, std::span<const double> k_max,
                                   const HardwareSpec& hw, double relative_tolerance) {
    if (k.samples < 3) {
        throw InputError("waveforms: need at least 3 samples per shot for a second difference");
    }
    if (static_cast<int>(k_max.size()) != k.dims) {
        throw InputError("waveforms: k_max has " + std::to_string(k_max.size()) + " entries for a " +
                         std::to_string(k.dims) + "-D pattern");
    }
    for (double km : k_max) {
        if (!(km > 0.0)) throw InputError("waveforms: k_max entries must be > 0");
    }
    if (!(hw.gamma > 0.0) || !(hw.raster_dt > 0.0)) {
        throw InputError("waveforms: gamma and raster_dt must be > 0");
    }
    const int d = k.dims;
    const std::size_t ng = k.samples - 1;
    const std::size_t ns = k.samples - 2;
    const double dt = hw.raster_dt;

    WaveformReport r;
    r.shots = k.shots;
    r.samples = k.samples;
    r.dims = d;
    r.g_max = hw.g_max;
    r.s_max = hw.s_max;
    r.relative_tolerance = relative_tolerance;
    r.gradient.assign(k.shots * ng * d, 0.0);
    r.slew.assign(k.shots * ns * d, 0.0);
    r.gradient_magnitude.assign(k.shots * ng, 0.0);
    r.slew_magnitude.assign(k.shots * ns, 0.0);

    std::vector<double> scale(d);
    for (int a = 0; a < d; ++a) scale[a] = k_max[a] / hw.gamma;

    std::size_t g_sat = 0, s_sat = 0;
    for (std::size_t s = 0; s < k.shots; ++s) {
        for (std::size_t n = 1; n < k.samples; ++n) {
            double sq = 0.0;
            for (int a = 0; a < d; ++a) {
                const double g = scale[a] * (k.at(s, n, a) - k.at(s, n - 1, a)) / dt;
                r.gradient[(s * ng + n - 1) * d + a] = g;
                sq += g * g;
            }
            const double mag = std::sqrt(sq);
            r.gradient_magnitude[s * ng + n - 1] = mag;
            r.max_gradient = std::max(r.max_gradient, mag);
            if (hw.g_max > 0.0 && mag >= 0.99 * hw.g_max) ++g_sat;
        }
        for (std::size_t n = 0; n < ns; ++n) {
            double sq = 0.0;
            for (int a = 0; a < d; ++a) {
                const double sl =
                    (r.gradient[(s * ng + n + 1) * d + a] - r.gradient[(s * ng + n) * d + a]) / dt;
                r.slew[(s * ns + n) * d + a] = sl;
                sq += sl * sl;
            }
            const double mag = std::sqrt(sq);
            r.slew_magnitude[s * ns + n] = mag;
            r.max_slew = std::max(r.max_slew, mag);
            if (hw.s_max > 0.0 && mag >= 0.99 * hw.s_max) ++s_sat;
        }
    }
    if (k.shots > 0) {
        r.gradient_saturation = static_cast<double>(g_sat) / static_cast<double>(k.shots * ng);
        r.slew_saturation = static_cast<double>(s_sat) / static_cast<double>(k.shots * ns);
    }
    r.gradient_ok = r.max_gradient <= hw.g_max * (1.0 + relative_tolerance);
    r.slew_ok = r.max_slew <= hw.s_max * (1.0 + relative_tolerance);
    return r;
}

SamplingPattern waveforms_to_kspace(const WaveformReport& waves, const SamplingPattern& start,
                                    const HardwareSpec& hw) {
    if (start.shots != waves.shots || start.dims != waves.dims) {
        throw InputError("waveforms: start pattern does not match waveform shape");
    }
    const NormalizedLimits lim = normalized_limits(hw);
    const int d = waves.dims;
    const std::size_t ng = waves.samples - 1;
    SamplingPattern out(waves.shots, waves.samples, d);
    for (std::size_t s = 0; s < waves.shots; ++s) {
        for (int a = 0; a < d; ++a) {
            const double step = hw.gamma * hw.raster_dt / lim.k_max[a];
            double pos = start.at(s, 0, a);
            out.at(s, 0, a) = pos;
            for (std::size_t n = 1; n < waves.samples; ++n) {
                pos += waves.gradient[(s * ng + n - 1) * d + a] * step;
                out.at(s, n, a) = pos;
            }
        }
    }
    return out;
}

SamplingPattern resample_linear(const SamplingPattern& k, int ratio) {
    if (ratio < 1) throw InputError("resample: ratio must be >= 1");
    if (ratio == 1 || k.samples < 2) return k;
    const int d = k.dims;
    const std::size_t m = k.samples * static_cast<std::size_t>(ratio);
    SamplingPattern out(k.shots, m, d);
    const double last = static_cast<double>(k.samples - 1);
    const double denom = static_cast<double>(m - 1);
    for (std::size_t s = 0; s < k.shots; ++s) {
        for (std::size_t j = 0; j < m; ++j) {
            // Position in raster-sample units; j = m-1 maps exactly to the last sample.
            const double u = static_cast<double>(j) * last / denom;
            auto lo = static_cast<std::size_t>(std::floor(u));
            if (lo >= k.samples - 1) lo = k.samples - 2;
            const double f = u - static_cast<double>(lo);
            for (int a = 0; a < d; ++a) {
                const double x0 = k.at(s, lo, a);
                const double x1 = k.at(s, lo + 1, a);
                double v;
                if (f == 0.0) {
                    v = x0;
                } else if (f == 1.0) {
                    v = x1;
                } else {
                    v = x0 + f * (x1 - x0);
                }
                out.at(s, j, a) = v;
            }
        }
    }
    return out;
}

SamplingPattern resample_to_dwell(const SamplingPattern& k, const HardwareSpec& hw) {
    return resample_linear(k, hw.oversampling());
}

double acceleration_factor(std::size_t n_shots, std::span<const int> matrix) {
    if (n_shots < 1) throw InputError("acceleration_factor: need at least one shot");
    if (matrix.size() == 3) {
        return static_cast<double>(matrix[1]) * static_cast<double>(matrix[2]) /
               static_cast<double>(n_shots);
    }
    if (matrix.size() == 2) return static_cast<double>(matrix[1]) / static_cast<double>(n_shots);
    throw InputError("acceleration_factor: matrix must have 2 or 3 entries");
}

}  // namespace ktraj
