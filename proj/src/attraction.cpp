#include "ktraj/attraction.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <complex>
#include <memory>
#include <mutex>

#include "ktraj/errors.hpp"

namespace ktraj {

namespace {

// FFTW's planner is not thread-safe.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
    if (p == nullptr) throw std::bad_alloc();
    return FftwBuffer<T>(p);
}

int good_fft_size(int n) {
    for (int m = n;; ++m) {
        int r = m;
        for (int f : {2, 3, 5, 7}) {
            while (r % f == 0) r /= f;
        }
        if (r == 1) return m;
    }
}

// Circular convolution of size L^d, where rho sits at [0, 2N] and the kernel
// offsets [-2N, 2N] wrap modulo L. L >= 4N+1 keeps every offset distinct.
class Convolver {
public:
    Convolver(const TargetDensity& rho) : dims_(rho.dims), n_(rho.grid_n) {
        len_ = good_fft_size(4 * n_ + 1);
        half_ = len_ / 2 + 1;
        real_size_ = static_cast<std::size_t>(len_) * len_ * (dims_ == 3 ? len_ : 1);
        complex_size_ = static_cast<std::size_t>(len_) * (dims_ == 3 ? len_ : 1) * half_;

        real_ = fftw_buffer<double>(real_size_);
        rho_hat_ = fftw_buffer<fftw_complex>(complex_size_);
        work_hat_ = fftw_buffer<fftw_complex>(complex_size_);
        {
            std::lock_guard<std::mutex> lock(planner_mutex());
            if (dims_ == 2) {
                forward_ = fftw_plan_dft_r2c_2d(len_, len_, real_.get(), work_hat_.get(), FFTW_ESTIMATE);
                backward_ = fftw_plan_dft_c2r_2d(len_, len_, work_hat_.get(), real_.get(), FFTW_ESTIMATE);
            } else {
                forward_ = fftw_plan_dft_r2c_3d(len_, len_, len_, real_.get(), work_hat_.get(), FFTW_ESTIMATE);
                backward_ =
                    fftw_plan_dft_c2r_3d(len_, len_, len_, work_hat_.get(), real_.get(), FFTW_ESTIMATE);
            }
        }
        if (forward_ == nullptr || backward_ == nullptr) throw NumericalError("attraction: FFT planning failed");

        std::fill(real_.get(), real_.get() + real_size_, 0.0);
        const int side = 2 * n_ + 1;
        const int kz = dims_ == 3 ? side : 1;
        std::size_t src = 0;
        for (int i = 0; i < side; ++i)
            for (int j = 0; j < side; ++j)
                for (int k = 0; k < kz; ++k) real_[index(i, j, k)] = rho.grid[src++];
        fftw_execute(forward_);
        std::memcpy(rho_hat_.get(), work_hat_.get(), complex_size_ * sizeof(fftw_complex));
    }

    ~Convolver() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    Convolver(const Convolver&) = delete;
    Convolver& operator=(const Convolver&) = delete;

    /// Convolves rho with kernel(offset / N) and returns the (2N+1)^d central block.
    template <class Kernel>
    std::vector<double> convolve(Kernel&& kernel) {
        const int two_n = 2 * n_;
        const int kz = dims_ == 3 ? len_ : 1;
        const double inv_n = 1.0 / n_;
        for (int i = 0; i < len_; ++i) {
            const int oi = wrap(i);
            for (int j = 0; j < len_; ++j) {
                const int oj = wrap(j);
                for (int k = 0; k < kz; ++k) {
                    const int ok = dims_ == 3 ? wrap(k) : 0;
                    double v = 0.0;
                    if (std::abs(oi) <= two_n && std::abs(oj) <= two_n && std::abs(ok) <= two_n) {
                        const double x[3] = {oi * inv_n, oj * inv_n, ok * inv_n};
                        v = kernel(x);
                    }
                    real_[index(i, j, k)] = v;
                }
            }
        }
        fftw_execute(forward_);
        const double scale = 1.0 / static_cast<double>(real_size_);
        for (std::size_t m = 0; m < complex_size_; ++m) {
            const std::complex<double> a(work_hat_[m][0], work_hat_[m][1]);
            const std::complex<double> b(rho_hat_[m][0], rho_hat_[m][1]);
            const std::complex<double> c = a * b * scale;
            work_hat_[m][0] = c.real();
            work_hat_[m][1] = c.imag();
        }
        fftw_execute(backward_);

        // Output node m in [-N, N] sits at circular index m + N.
        const int side = 2 * n_ + 1;
        const int oz = dims_ == 3 ? side : 1;
        std::vector<double> out(static_cast<std::size_t>(side) * side * oz);
        std::size_t dst = 0;
        for (int i = 0; i < side; ++i)
            for (int j = 0; j < side; ++j)
                for (int k = 0; k < oz; ++k) out[dst++] = real_[index(i, j, k)];
        return out;
    }

private:
    std::size_t index(int i, int j, int k) const {
        if (dims_ == 2) return static_cast<std::size_t>(i) * len_ + j;
        return (static_cast<std::size_t>(i) * len_ + j) * len_ + k;
    }
    int wrap(int i) const { return i <= len_ / 2 ? i : i - len_; }

    int dims_;
    int n_;
    int len_ = 0;
    int half_ = 0;
    std::size_t real_size_ = 0;
    std::size_t complex_size_ = 0;
    FftwBuffer<double> real_;
    FftwBuffer<fftw_complex> rho_hat_;
    FftwBuffer<fftw_complex> work_hat_;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

// Cell lookup for one coordinate: lower node index and fractional offset in [0, 1].
struct AxisCell {
    int lo = 0;
    double frac = 0.0;
};

inline AxisCell locate(double x, int grid_n) {
    const double g = (x + 1.0) * grid_n;
    int lo = static_cast<int>(std::floor(g));
    lo = std::clamp(lo, 0, 2 * grid_n - 1);
    return {lo, g - lo};
}

// Multilinear interpolation on one cell. When `slope` is given it receives the partial
// derivatives with respect to the cell fractions (multiply by N for coordinates).
double multilinear_2d(const std::vector<double>& grid, std::size_t side, const AxisCell* c, double* slope) {
    const std::size_t b = static_cast<std::size_t>(c[0].lo) * side + c[1].lo;
    const double fx = c[0].frac, fy = c[1].frac;
    const double v00 = grid[b], v01 = grid[b + 1], v10 = grid[b + side], v11 = grid[b + side + 1];
    if (slope != nullptr) {
        slope[0] = (1 - fy) * (v10 - v00) + fy * (v11 - v01);
        slope[1] = (1 - fx) * (v01 - v00) + fx * (v11 - v10);
    }
    return (1 - fx) * ((1 - fy) * v00 + fy * v01) + fx * ((1 - fy) * v10 + fy * v11);
}

double multilinear_3d(const std::vector<double>& grid, std::size_t side, const AxisCell* c, double* slope) {
    const std::size_t sxy = side * side;
    const std::size_t b = (static_cast<std::size_t>(c[0].lo) * side + c[1].lo) * side + c[2].lo;
    const double wx[2] = {1 - c[0].frac, c[0].frac}, wy[2] = {1 - c[1].frac, c[1].frac},
                 wz[2] = {1 - c[2].frac, c[2].frac};
    double val = 0.0, dx = 0.0, dy = 0.0, dz = 0.0;
    for (int ix = 0; ix < 2; ++ix)
        for (int iy = 0; iy < 2; ++iy)
            for (int iz = 0; iz < 2; ++iz) {
                const double w = grid[b + ix * sxy + iy * side + iz];
                val += wx[ix] * wy[iy] * wz[iz] * w;
                dx += (ix ? 1.0 : -1.0) * wy[iy] * wz[iz] * w;
                dy += wx[ix] * (iy ? 1.0 : -1.0) * wz[iz] * w;
                dz += wx[ix] * wy[iy] * (iz ? 1.0 : -1.0) * w;
            }
    if (slope != nullptr) {
        slope[0] = dx;
        slope[1] = dy;
        slope[2] = dz;
    }
    return val;
}

}  // namespace

KernelField precompute_field(const TargetDensity& rho, double kernel_eps) {
    if (!(kernel_eps > 0.0)) throw InputError("attraction: kernel_eps must be > 0");
    if (rho.dims != 2 && rho.dims != 3) throw InputError("attraction: density dims must be 2 or 3");
    KernelField field;
    field.dims = rho.dims;
    field.grid_n = rho.grid_n;
    field.kernel_eps = kernel_eps;

    Convolver conv(rho);
    const double eps2 = kernel_eps * kernel_eps;
    const int d = rho.dims;
    field.potential = conv.convolve([&](const double* x) {
        double sq = eps2;
        for (int a = 0; a < d; ++a) sq += x[a] * x[a];
        return std::sqrt(sq);
    });
    for (int axis = 0; axis < d; ++axis) {
        field.force.push_back(conv.convolve([&](const double* x) {
            double sq = eps2;
            for (int a = 0; a < d; ++a) sq += x[a] * x[a];
            return x[axis] / std::sqrt(sq);
        }));
    }
    return field;
}

double interpolate(const KernelField& field, const std::vector<double>& grid, const double* x) {
    const int n = field.grid_n;
    const std::size_t side = static_cast<std::size_t>(field.side());
    AxisCell c[3];
    for (int a = 0; a < field.dims; ++a) c[a] = locate(std::clamp(x[a], -1.0, 1.0), n);
    return field.dims == 2 ? multilinear_2d(grid, side, c, nullptr) : multilinear_3d(grid, side, c, nullptr);
}

AttractionResult eval_attraction(const SamplingPattern& k, const KernelField& field, AttractionGradient mode) {
    if (k.dims != field.dims) throw InputError("attraction: pattern and field dimensions differ");
    const std::size_t p = k.size();
    const int d = k.dims;
    AttractionResult res;
    res.grad.assign(p * d, 0.0);
    if (p == 0) return res;

    const int n = field.grid_n;
    const std::size_t side = static_cast<std::size_t>(field.side());
    const double inv_p = 1.0 / static_cast<double>(p);
    const auto& pot = field.potential;
    std::vector<double> values(p);
    std::vector<unsigned char> clamped(p, 0);

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(p); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double x[3] = {0, 0, 0};
        for (int a = 0; a < d; ++a) {
            const double v = k.coords[i * d + a];
            x[a] = std::clamp(v, -1.0, 1.0);
            if (x[a] != v) clamped[i] = 1;
        }
        AxisCell c[3];
        for (int a = 0; a < d; ++a) c[a] = locate(x[a], n);
        double* g = res.grad.data() + i * d;
        values[i] = d == 2 ? multilinear_2d(pot, side, c, nullptr) : multilinear_3d(pot, side, c, nullptr);
        if (mode == AttractionGradient::InterpolatedForce) {
            for (int a = 0; a < d; ++a) g[a] = inv_p * interpolate(field, field.force[a], x);
            continue;
        }
        double slope[3];
        if (d == 2) {
            multilinear_2d(pot, side, c, slope);
        } else {
            multilinear_3d(pot, side, c, slope);
        }
        // On an interior node the interpolant has a kink; use the mean of the two
        // one-sided slopes, which is what a central difference sees.
        for (int a = 0; a < d; ++a) {
            if (c[a].frac == 0.0 && c[a].lo > 0) {
                AxisCell below[3] = {c[0], c[1], c[2]};
                below[a] = {c[a].lo - 1, 1.0};
                double other[3];
                if (d == 2) {
                    multilinear_2d(pot, side, below, other);
                } else {
                    multilinear_3d(pot, side, below, other);
                }
                slope[a] = 0.5 * (slope[a] + other[a]);
            }
            g[a] = inv_p * n * slope[a];
        }
    }

    double total = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        total += values[i];
        res.clamped += clamped[i];
    }
    res.cost = total * inv_p;
    return res;
}

}  // namespace ktraj
