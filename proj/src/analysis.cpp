#include "ktraj/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ktraj/errors.hpp"

namespace ktraj {

namespace {

using cplx = std::complex<double>;

struct GridShape {
    int dims = 0;
    int n[3] = {1, 1, 1};
    std::size_t volume = 1;
};

GridShape check_grid(const SamplingPattern& k, std::span<const int> grid, bool allow_slow) {
    if (k.size() == 0) throw InputError("analysis: empty pattern");
    k.validate();
    if (grid.size() != static_cast<std::size_t>(k.dims)) throw InputError("analysis: grid needs one size per axis");
    GridShape g;
    g.dims = k.dims;
    for (int a = 0; a < k.dims; ++a) {
        if (grid[a] < 2) throw InputError("analysis: grid sizes must be >= 2");
        g.n[a] = grid[a];
        g.volume *= static_cast<std::size_t>(grid[a]);
    }
    const double work = static_cast<double>(k.size()) * static_cast<double>(g.volume);
    if (work > kDirectDftBudget && !allow_slow) {
        throw InputError("analysis: direct DFT of this size exceeds the time budget; pass allow_slow to proceed");
    }
    return g;
}

// Per-axis phase tables e^{i pi k_j x} for voxels x in {-N/2, ..., N/2 - 1}.
std::vector<std::vector<cplx>> phase_tables(const SamplingPattern& k, const GridShape& g) {
    std::vector<std::vector<cplx>> tables(g.dims);
    const std::size_t p = k.size();
    for (int a = 0; a < g.dims; ++a) {
        const int n = g.n[a];
        tables[a].resize(p * n);
        for (std::size_t j = 0; j < p; ++j) {
            const double kj = k.coords[j * g.dims + a];
            for (int x = 0; x < n; ++x) {
                const double phase = std::numbers::pi * kj * static_cast<double>(x - n / 2);
                tables[a][j * n + x] = cplx(std::cos(phase), std::sin(phase));
            }
        }
    }
    return tables;
}

// image[v] = sum_j w_j prod_a E_a[j, v_a]
std::vector<cplx> adjoint(const std::vector<std::vector<cplx>>& e, const GridShape& g, std::span<const cplx> w) {
    std::vector<cplx> image(g.volume);
    const std::size_t p = w.size();
    const int n0 = g.n[0], n1 = g.n[1], n2 = g.dims == 3 ? g.n[2] : 1;
    const std::size_t slice = static_cast<std::size_t>(n1) * n2;
#pragma omp parallel for schedule(static)
    for (int x0 = 0; x0 < n0; ++x0) {
        cplx* out = image.data() + x0 * slice;
        for (std::size_t j = 0; j < p; ++j) {
            const cplx c0 = w[j] * e[0][j * n0 + x0];
            const cplx* e1 = e[1].data() + j * n1;
            if (g.dims == 2) {
                for (int x1 = 0; x1 < n1; ++x1) out[x1] += c0 * e1[x1];
            } else {
                const cplx* e2 = e[2].data() + j * n2;
                for (int x1 = 0; x1 < n1; ++x1) {
                    const cplx c1 = c0 * e1[x1];
                    cplx* row = out + static_cast<std::size_t>(x1) * n2;
                    for (int x2 = 0; x2 < n2; ++x2) row[x2] += c1 * e2[x2];
                }
            }
        }
    }
    return image;
}

// y_j = sum_v f[v] prod_a conj(E_a[j, v_a])
std::vector<cplx> forward(const std::vector<std::vector<cplx>>& e, const GridShape& g, const std::vector<cplx>& f,
                          std::size_t p) {
    std::vector<cplx> y(p);
    const int n0 = g.n[0], n1 = g.n[1], n2 = g.dims == 3 ? g.n[2] : 1;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(p); ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        cplx total = 0.0;
        for (int x0 = 0; x0 < n0; ++x0) {
            cplx acc0 = 0.0;
            for (int x1 = 0; x1 < n1; ++x1) {
                const cplx* row = f.data() + (static_cast<std::size_t>(x0) * n1 + x1) * n2;
                cplx acc1 = 0.0;
                if (g.dims == 2) {
                    acc1 = row[0];
                } else {
                    const cplx* e2 = e[2].data() + j * n2;
                    for (int x2 = 0; x2 < n2; ++x2) acc1 += row[x2] * std::conj(e2[x2]);
                }
                acc0 += acc1 * std::conj(e[1][j * n1 + x1]);
            }
            total += acc0 * std::conj(e[0][j * n0 + x0]);
        }
        y[j] = total;
    }
    return y;
}

std::vector<int> unravel(std::size_t index, const std::vector<int>& shape) {
    std::vector<int> out(shape.size());
    for (int a = static_cast<int>(shape.size()) - 1; a >= 0; --a) {
        out[a] = static_cast<int>(index % shape[a]);
        index /= shape[a];
    }
    return out;
}

std::size_t ravel(const std::vector<int>& idx, const std::vector<int>& shape) {
    std::size_t out = 0;
    for (std::size_t a = 0; a < shape.size(); ++a) out = out * shape[a] + idx[a];
    return out;
}

double to_db(double peak, double level) {
    if (!(level > 0.0)) return kMetricCapDb;
    return std::min(kMetricCapDb, 20.0 * std::log10(peak / level));
}

// Position of the half-maximum crossing between `inner` (above half) and `outer`.
double crossing(std::span<const double> prof, std::size_t inner, std::size_t outer, double half) {
    const double mi = prof[inner], mo = prof[outer];
    const double linear = static_cast<double>(inner) +
                          (mi - half) / (mi - mo) * (static_cast<double>(outer) - static_cast<double>(inner));
    const long dir = static_cast<long>(outer) - static_cast<long>(inner);
    long third = static_cast<long>(outer) + dir;
    if (third < 0 || third >= static_cast<long>(prof.size()) || !(prof[third] > 0.0)) {
        third = static_cast<long>(inner) - dir;
    }
    if (third < 0 || third >= static_cast<long>(prof.size())) return linear;
    const double xs[3] = {static_cast<double>(inner), static_cast<double>(outer), static_cast<double>(third)};
    const double ms[3] = {mi, mo, prof[third]};
    if (!(ms[0] > 0.0 && ms[1] > 0.0 && ms[2] > 0.0)) return linear;
    // Newton form of the parabola through (x, log m), shifted so the root solves q(x) = 0.
    const double y0 = std::log(ms[0]) - std::log(half);
    const double y1 = std::log(ms[1]) - std::log(half);
    const double y2 = std::log(ms[2]) - std::log(half);
    const double d01 = (y1 - y0) / (xs[1] - xs[0]);
    const double d12 = (y2 - y1) / (xs[2] - xs[1]);
    const double c2 = (d12 - d01) / (xs[2] - xs[0]);
    // q(x) = y0 + d01 (x - x0) + c2 (x - x0)(x - x1); write in t = x - x0.
    const double qa = c2;
    const double qb = d01 - c2 * (xs[1] - xs[0]);
    const double qc = y0;
    const double lo = std::min(xs[0], xs[1]), hi = std::max(xs[0], xs[1]);
    auto in_range = [&](double t) { return xs[0] + t >= lo - 1e-12 && xs[0] + t <= hi + 1e-12; };
    if (std::abs(qa) < 1e-14) {
        if (qb == 0.0) return linear;
        const double t = -qc / qb;
        return in_range(t) ? xs[0] + t : linear;
    }
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) return linear;
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (qb + std::copysign(sq, qb));
    const double t1 = q / qa;
    const double t2 = q != 0.0 ? qc / q : t1;
    if (in_range(t1)) return xs[0] + t1;
    if (in_range(t2)) return xs[0] + t2;
    return linear;
}

}  // namespace

std::vector<double> PsfVolume::magnitude() const {
    std::vector<double> m(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m[i] = std::abs(values[i]);
    return m;
}

std::vector<double> density_compensation(const SamplingPattern& k, std::span<const int> grid, int iters,
                                         bool allow_slow) {
    if (iters < 1) throw InputError("density_compensation: iters must be >= 1");
    const GridShape g = check_grid(k, grid, allow_slow);
    const auto e = phase_tables(k, g);
    const std::size_t p = k.size();
    const double inv_volume = 1.0 / static_cast<double>(g.volume);
    std::vector<cplx> w(p, cplx(1.0, 0.0));
    for (int it = 0; it < iters; ++it) {
        const std::vector<cplx> image = adjoint(e, g, w);
        const std::vector<cplx> back = forward(e, g, image, p);
        for (std::size_t j = 0; j < p; ++j) {
            const double den = std::max(std::abs(back[j]) * inv_volume, 1e-12);
            w[j] = cplx(w[j].real() / den, 0.0);
        }
    }
    std::vector<double> out(p);
    for (std::size_t j = 0; j < p; ++j) out[j] = w[j].real();
    return out;
}

PsfVolume compute_psf(const SamplingPattern& k, std::span<const int> grid, std::span<const double> weights,
                      bool allow_slow) {
    const GridShape g = check_grid(k, grid, allow_slow);
    if (weights.size() != k.size()) throw InputError("compute_psf: one weight per sample is required");
    const auto e = phase_tables(k, g);
    std::vector<cplx> w(weights.begin(), weights.end());
    PsfVolume psf;
    psf.shape.assign(grid.begin(), grid.end());
    psf.values = adjoint(e, g, w);
    for (std::size_t i = 0; i < psf.values.size(); ++i) {
        const double m = std::abs(psf.values[i]);
        if (m > psf.peak_value) {
            psf.peak_value = m;
            psf.peak_index = i;
        }
    }
    return psf;
}

double fwhm_1d(std::span<const double> profile, std::size_t peak, bool* found) {
    if (found) *found = false;
    if (peak >= profile.size()) throw InputError("fwhm: peak index out of range");
    const double top = profile[peak];
    if (!(top > 0.0)) throw InputError("fwhm: peak must be strictly positive");
    const double half = 0.5 * top;
    std::size_t r = peak + 1;
    while (r < profile.size() && profile[r] > half) ++r;
    std::size_t l = peak;
    while (l > 0 && profile[l - 1] > half) --l;
    if (r >= profile.size() || l == 0) return std::numeric_limits<double>::infinity();
    const double right = crossing(profile, r - 1, r, half);
    const double left = crossing(profile, l, l - 1, half);
    if (found) *found = true;
    return right - left;
}

std::vector<double> psf_profile(const PsfVolume& psf, int axis) {
    if (axis < 0 || axis >= psf.dims()) throw InputError("psf_profile: axis out of range");
    std::vector<int> idx = unravel(psf.peak_index, psf.shape);
    std::vector<double> out(psf.shape[axis]);
    for (int i = 0; i < psf.shape[axis]; ++i) {
        idx[axis] = i;
        out[i] = std::abs(psf.values[ravel(idx, psf.shape)]);
    }
    return out;
}

PsfMetrics psf_metrics(const PsfVolume& psf, double noise_radius) {
    if (!(psf.peak_value > 0.0)) throw InputError("psf_metrics: peak must be strictly positive");
    const int d = psf.dims();
    const std::vector<double> mag = psf.magnitude();
    const std::vector<int> peak = unravel(psf.peak_index, psf.shape);
    PsfMetrics m;
    m.fwhm.resize(d);
    m.fwhm_found.resize(d);
    m.main_lobe_lo.resize(d);
    m.main_lobe_hi.resize(d);
    for (int a = 0; a < d; ++a) {
        const std::vector<double> prof = psf_profile(psf, a);
        bool found = false;
        m.fwhm[a] = fwhm_1d(prof, peak[a], &found);
        m.fwhm_found[a] = found;
        int hi = peak[a];
        while (hi + 1 < psf.shape[a] && prof[hi + 1] < prof[hi]) ++hi;
        int lo = peak[a];
        while (lo > 0 && prof[lo - 1] < prof[lo]) --lo;
        m.main_lobe_lo[a] = lo;
        m.main_lobe_hi[a] = hi;
    }

    // Largest local maximum (over the full 3^d neighbourhood) outside the main-lobe box.
    double sidelobe = 0.0;
    std::vector<int> idx(d), nb(d);
    const int neighbours = d == 2 ? 9 : 27;
    for (std::size_t v = 0; v < mag.size(); ++v) {
        idx = unravel(v, psf.shape);
        bool inside = true;
        for (int a = 0; a < d; ++a) inside = inside && idx[a] >= m.main_lobe_lo[a] && idx[a] <= m.main_lobe_hi[a];
        if (inside || !(mag[v] > sidelobe)) continue;
        bool is_max = true;
        for (int o = 0; o < neighbours && is_max; ++o) {
            int rem = o;
            bool valid = true;
            bool self = true;
            for (int a = d - 1; a >= 0; --a) {
                const int step = rem % 3 - 1;
                rem /= 3;
                nb[a] = idx[a] + step;
                self = self && step == 0;
                valid = valid && nb[a] >= 0 && nb[a] < psf.shape[a];
            }
            if (self || !valid) continue;
            if (mag[ravel(nb, psf.shape)] > mag[v]) is_max = false;
        }
        if (is_max) sidelobe = mag[v];
    }
    m.sidelobe_found = sidelobe > 0.0;
    m.psl_db = to_db(psf.peak_value, sidelobe);

    double sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t v = 0; v < mag.size(); ++v) {
        idx = unravel(v, psf.shape);
        double r2 = 0.0;
        for (int a = 0; a < d; ++a) {
            const double half = 0.5 * psf.shape[a];
            const double x = (idx[a] - psf.shape[a] / 2) / half;
            r2 += x * x;
        }
        if (r2 > noise_radius * noise_radius) {
            sum_sq += mag[v] * mag[v];
            ++count;
        }
    }
    m.pnl_db = count > 0 ? to_db(psf.peak_value, std::sqrt(sum_sq / static_cast<double>(count))) : kMetricCapDb;
    return m;
}

DensityCompliance density_compliance(const SamplingPattern& k, const TargetDensity& rho, int bins) {
    if (bins < 4) throw InputError("density_compliance: bins must be >= 4");
    if (k.dims != rho.dims) throw InputError("density_compliance: pattern and density dimensions differ");
    if (k.size() == 0) throw InputError("density_compliance: empty pattern");
    const int d = k.dims;
    std::size_t total = 1;
    for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(bins);
    DensityCompliance out;
    out.bins = bins;
    out.dims = d;
    out.empirical.assign(total, 0.0);
    out.target.assign(total, 0.0);

    auto bin_of = [&](double x) {
        const int b = static_cast<int>(std::floor((x + 1.0) * 0.5 * bins));
        return std::clamp(b, 0, bins - 1);
    };
    for (std::size_t i = 0; i < k.size(); ++i) {
        std::size_t flat = 0;
        for (int a = 0; a < d; ++a) flat = flat * bins + bin_of(k.coords[i * d + a]);
        out.empirical[flat] += 1.0;
    }
    const double inv_p = 1.0 / static_cast<double>(k.size());
    for (double& v : out.empirical) v *= inv_p;

    // Per-axis overlap of each node cell (clipped to the domain) with the bins.
    const int side = rho.side();
    const double half_cell = 0.5 / rho.grid_n;
    const double bin_width = 2.0 / bins;
    std::vector<std::vector<std::pair<int, double>>> overlap(side);
    for (int i = 0; i < side; ++i) {
        const double c = rho.node_coord(i);
        const double lo = std::max(-1.0, c - half_cell), hi = std::min(1.0, c + half_cell);
        for (int b = bin_of(lo); b <= bin_of(hi); ++b) {
            const double blo = -1.0 + b * bin_width, bhi = blo + bin_width;
            const double len = std::min(hi, bhi) - std::max(lo, blo);
            if (len > 0.0) overlap[i].push_back({b, len / (hi - lo)});
        }
    }
    std::vector<int> idx(d);
    for (std::size_t v = 0; v < rho.grid.size(); ++v) {
        const double mass = rho.grid[v];
        if (mass == 0.0) continue;
        std::size_t rem = v;
        for (int a = d - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(rem % side);
            rem /= side;
        }
        if (d == 2) {
            for (const auto& [b0, f0] : overlap[idx[0]])
                for (const auto& [b1, f1] : overlap[idx[1]]) out.target[b0 * bins + b1] += mass * f0 * f1;
        } else {
            for (const auto& [b0, f0] : overlap[idx[0]])
                for (const auto& [b1, f1] : overlap[idx[1]])
                    for (const auto& [b2, f2] : overlap[idx[2]])
                        out.target[(static_cast<std::size_t>(b0) * bins + b1) * bins + b2] += mass * f0 * f1 * f2;
        }
    }
    double target_sum = 0.0;
    for (double v : out.target) target_sum += v;
    for (double& v : out.target) v /= target_sum;
    for (std::size_t b = 0; b < total; ++b) out.l1_distance += std::abs(out.empirical[b] - out.target[b]);
    return out;
}

}  // namespace ktraj
