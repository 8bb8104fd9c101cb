#include "ktraj/projection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "ktraj/errors.hpp"

namespace ktraj {

namespace {

// Stacked operator A = [I; D1; D2] on an interleaved shot (samples x dims).
// The dual vector holds the three blocks back to back.
struct Stacked {
    std::size_t n = 0;  // samples
    int d = 0;
    std::size_t m0 = 0, m1 = 0, m2 = 0;

    Stacked(std::size_t samples, int dims) : n(samples), d(dims) {
        m0 = n * d;
        m1 = n >= 2 ? (n - 1) * d : 0;
        m2 = n >= 3 ? (n - 2) * d : 0;
    }
    std::size_t dual_size() const { return m0 + m1 + m2; }

    void apply(const double* x, double* out) const {
        std::copy(x, x + m0, out);
        double* o1 = out + m0;
        for (std::size_t i = 0; i < m1; ++i) o1[i] = x[i + d] - x[i];
        double* o2 = o1 + m1;
        for (std::size_t i = 0; i < m2; ++i) o2[i] = x[i + 2 * d] - 2.0 * x[i + d] + x[i];
    }

    void apply_t(const double* lam, double* out) const {
        std::copy(lam, lam + m0, out);
        const double* l1 = lam + m0;
        const double* l2 = l1 + m1;
        const std::size_t dd = static_cast<std::size_t>(d);
        for (std::size_t i = 0; i < m0; ++i) {
            double v = 0.0;
            if (i < m1) v -= l1[i];
            if (i >= dd && i - dd < m1) v += l1[i - dd];
            if (i < m2) v += l2[i];
            if (i >= dd && i - dd < m2) v -= 2.0 * l2[i - dd];
            if (i >= 2 * dd && i - 2 * dd < m2) v += l2[i - 2 * dd];
            out[i] += v;
        }
    }
};

double power_iteration(std::size_t n) {
    const Stacked op(n, 1);
    std::vector<double> x(n), y(op.dual_size()), z(n);
    // Start near the top eigenvector (highest frequency) so 50 iterations suffice.
    for (std::size_t i = 0; i < n; ++i) x[i] = (i % 2 == 0 ? 1.0 : -1.0) + 1e-3 * std::sin(0.7 * i);
    double lambda = 0.0;
    for (int it = 0; it < 50; ++it) {
        double norm = 0.0;
        for (double v : x) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) break;
        for (double& v : x) v /= norm;
        op.apply(x.data(), y.data());
        op.apply_t(y.data(), z.data());
        lambda = 0.0;
        for (std::size_t i = 0; i < n; ++i) lambda += x[i] * z[i];
        x.swap(z);
    }
    return lambda;
}

double ball_excess(const double* v, int d, double radius) {
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += v[a] * v[a];
    return std::max(0.0, std::sqrt(s) - radius);
}

void project_ball(double* v, int d, double radius) {
    double s = 0.0;
    for (int a = 0; a < d; ++a) s += v[a] * v[a];
    const double norm = std::sqrt(s);
    if (norm > radius) {
        const double scale = norm > 0.0 ? radius / norm : 0.0;
        for (int a = 0; a < d; ++a) v[a] *= scale;
    }
}

class ShotSolver {
public:
    ShotSolver(std::span<const double> shot, int dims, const ProjectionConfig& cfg)
        : op_(shot.size() / dims, dims), cfg_(cfg), x0_(shot.begin(), shot.end()) {
        lip_ = stacked_operator_norm_sq(op_.n);
        r1_ = cfg.speed_bound();
        r2_ = cfg.accel_bound();
        if (cfg.pin) {
            pin_ = cfg.pin->pinned_index;
            for (int a = 0; a < dims; ++a) x0_[*pin_ * dims + a] = cfg.pin->pinned_value[a];
        }
        s_.resize(op_.m0);
        as_.resize(op_.dual_size());
    }

    ShotProjection run(bool record_dual) {
        const std::size_t m = op_.dual_size();
        std::vector<double> lam(m, 0.0), y(m, 0.0), z(m), prev(m);
        ShotProjection out;
        double t = 1.0;
        double h_lam = record_dual || cfg_.restart == ProjectionRestart::Monotone ? dual_value(lam) : 0.0;
        for (int it = 0; it < cfg_.n_pit; ++it) {
            prox_step(y, z);
            prev = lam;
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            if (cfg_.restart == ProjectionRestart::Monotone) {
                const double h_z = dual_value(z);
                if (h_z <= h_lam) {
                    lam = z;
                    h_lam = h_z;
                }
                for (std::size_t i = 0; i < m; ++i) {
                    y[i] = lam[i] + (t / t_next) * (z[i] - lam[i]) + ((t - 1.0) / t_next) * (lam[i] - prev[i]);
                }
                t = t_next;
            } else {
                lam = z;
                bool restart = false;
                if (cfg_.restart == ProjectionRestart::Adaptive) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) dot += (y[i] - lam[i]) * (lam[i] - prev[i]);
                    restart = dot > 0.0;
                }
                if (restart) {
                    t = 1.0;
                    y = lam;
                } else {
                    for (std::size_t i = 0; i < m; ++i) y[i] = lam[i] + ((t - 1.0) / t_next) * (lam[i] - prev[i]);
                    t = t_next;
                }
                if (record_dual) h_lam = dual_value(lam);
            }
            if (record_dual) out.dual_objective.push_back(h_lam);
        }
        primal(lam);
        out.coords = s_;
        out.solver_residual = shot_residuals(out.coords, op_.d, cfg_);
        if (cfg_.restore_feasibility && out.solver_residual.max() > 0.0) {
            out.restoration = restore(out.coords);
        }
        out.residual = shot_residuals(out.coords, op_.d, cfg_);
        return out;
    }

private:
    // s(lam): free samples x0 - A^T lam, pinned sample held at its value.
    void primal(const std::vector<double>& lam) {
        std::fill(s_.begin(), s_.end(), 0.0);
        op_.apply_t(lam.data(), s_.data());
        for (std::size_t i = 0; i < op_.m0; ++i) s_[i] = x0_[i] - s_[i];
        if (pin_) {
            for (int a = 0; a < op_.d; ++a) s_[*pin_ * op_.d + a] = x0_[*pin_ * op_.d + a];
        }
    }

    // z = prox of the conjugate at y + A s(y) / L, via Moreau: w - Pi_C(L w) / L.
    void prox_step(const std::vector<double>& y, std::vector<double>& z) {
        primal(y);
        op_.apply(s_.data(), as_.data());
        const double inv_l = 1.0 / lip_;
        const std::size_t m = op_.dual_size();
        for (std::size_t i = 0; i < m; ++i) z[i] = y[i] + inv_l * as_[i];
        // Pi_C(L w) / L equals the projection of w onto the sets shrunk by 1/L.
        for (std::size_t i = 0; i < op_.m0; ++i) z[i] -= std::clamp(z[i], -inv_l, inv_l);
        shrink_balls(z.data() + op_.m0, op_.m1, r1_ * inv_l);
        shrink_balls(z.data() + op_.m0 + op_.m1, op_.m2, r2_ * inv_l);
    }

    void shrink_balls(double* w, std::size_t len, double radius) const {
        const int d = op_.d;
        for (std::size_t i = 0; i < len; i += d) {
            double v[3];
            std::copy(w + i, w + i + d, v);
            project_ball(v, d, radius);
            for (int a = 0; a < d; ++a) w[i + a] -= v[a];
        }
    }

    // Negated dual function, minimized by the iteration.
    double dual_value(const std::vector<double>& lam) {
        primal(lam);
        op_.apply(s_.data(), as_.data());
        double quad = 0.0;
        for (std::size_t i = 0; i < op_.m0; ++i) {
            if (pin_ && i / op_.d == *pin_) continue;
            quad += (s_[i] - x0_[i]) * (s_[i] - x0_[i]);
        }
        double inner = 0.0;
        for (std::size_t i = 0; i < op_.dual_size(); ++i) inner += lam[i] * as_[i];
        double support = 0.0;
        for (std::size_t i = 0; i < op_.m0; ++i) support += std::abs(lam[i]);
        support += r1_ * norm_sum(lam.data() + op_.m0, op_.m1) + r2_ * norm_sum(lam.data() + op_.m0 + op_.m1, op_.m2);
        return -(0.5 * quad + inner - support);
    }

    double norm_sum(const double* v, std::size_t len) const {
        double total = 0.0;
        for (std::size_t i = 0; i < len; i += op_.d) {
            double s = 0.0;
            for (int a = 0; a < op_.d; ++a) s += v[i + a] * v[i + a];
            total += std::sqrt(s);
        }
        return total;
    }

    // Blends x toward the constant shot at the pinned value (zero without a pin), which
    // satisfies every derivative bound with zero slack, by the smallest factor that
    // makes x feasible. Returns the factor.
    double restore(std::vector<double>& x) const {
        const int d = op_.d;
        std::vector<double> anchor(d, 0.0);
        if (cfg_.pin) anchor = cfg_.pin->pinned_value;
        double lambda = 0.0;
        for (std::size_t i = 0; i < op_.m0; ++i) {
            const double ax = std::abs(x[i]);
            const double az = std::abs(anchor[i % d]);
            if (ax > 1.0 && az < 1.0) lambda = std::max(lambda, (ax - 1.0) / (ax - az));
        }
        std::vector<double> dx(op_.dual_size());
        op_.apply(x.data(), dx.data());
        auto derivative_factor = [&](const double* v, std::size_t len, double radius) {
            for (std::size_t i = 0; i < len; i += d) {
                double s = 0.0;
                for (int a = 0; a < d; ++a) s += v[i + a] * v[i + a];
                const double norm = std::sqrt(s);
                if (norm > radius) lambda = std::max(lambda, 1.0 - radius / norm);
            }
        };
        derivative_factor(dx.data() + op_.m0, op_.m1, r1_);
        derivative_factor(dx.data() + op_.m0 + op_.m1, op_.m2, r2_);
        lambda = std::min(1.0, lambda);
        for (std::size_t i = 0; i < op_.m0; ++i) {
            x[i] = (1.0 - lambda) * x[i] + lambda * anchor[i % d];
            x[i] = std::clamp(x[i], -1.0, 1.0);
        }
        return lambda;
    }

    Stacked op_;
    const ProjectionConfig& cfg_;
    std::vector<double> x0_;
    std::optional<std::size_t> pin_;
    double lip_ = 1.0;
    double r1_ = 0.0;
    double r2_ = 0.0;
    std::vector<double> s_;
    std::vector<double> as_;
};

}  // namespace

void ProjectionConfig::validate(int dims, std::size_t samples) const {
    if (n_pit < 1) throw InputError("projection.n_pit must be >= 1");
    if (!(feas_tol > 0.0)) throw InputError("projection.feas_tol must be > 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InputError("projection: alpha must be finite and >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InputError("projection: beta must be finite and >= 0");
    if (!(raster_dt > 0.0)) throw InputError("projection: raster_dt must be > 0");
    if (pin) {
        if (pin->pinned_index >= samples) throw InputError("projection: pinned_index out of range");
        if (pin->pinned_value.size() != static_cast<std::size_t>(dims)) {
            throw InputError("projection: pinned_value must have one entry per axis");
        }
        for (double v : pin->pinned_value) {
            if (!(std::abs(v) <= 1.0)) throw InputError("projection: pinned_value lies outside [-1, 1]");
        }
    }
}

double ShotResiduals::max() const { return std::max({amplitude, speed, acceleration, pin}); }

ShotResiduals shot_residuals(std::span<const double> shot, int dims, const ProjectionConfig& cfg) {
    ShotResiduals r;
    const std::size_t n = shot.size() / dims;
    for (double v : shot) r.amplitude = std::max(r.amplitude, std::abs(v) - 1.0);
    double diff[3];
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (int a = 0; a < dims; ++a) diff[a] = shot[(i + 1) * dims + a] - shot[i * dims + a];
        r.speed = std::max(r.speed, ball_excess(diff, dims, cfg.speed_bound()));
    }
    for (std::size_t i = 0; i + 2 < n; ++i) {
        for (int a = 0; a < dims; ++a) {
            diff[a] = shot[(i + 2) * dims + a] - 2.0 * shot[(i + 1) * dims + a] + shot[i * dims + a];
        }
        r.acceleration = std::max(r.acceleration, ball_excess(diff, dims, cfg.accel_bound()));
    }
    if (cfg.pin && cfg.pin->pinned_index < n) {
        for (int a = 0; a < dims; ++a) {
            r.pin = std::max(r.pin, std::abs(shot[cfg.pin->pinned_index * dims + a] - cfg.pin->pinned_value[a]));
        }
    }
    return r;
}

double stacked_operator_norm_sq(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, double> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    const double value = 1.01 * power_iteration(n);
    cache.emplace(n, value);
    return value;
}

ShotProjection project_shot(std::span<const double> shot, int dims, const ProjectionConfig& cfg, bool record_dual) {
    if (dims != 2 && dims != 3) throw InputError("projection: dims must be 2 or 3");
    if (shot.empty() || shot.size() % dims != 0) throw InputError("projection: shot size is not a multiple of dims");
    cfg.validate(dims, shot.size() / dims);
    for (double v : shot) {
        if (!std::isfinite(v)) throw InputError("projection: shot contains non-finite coordinates");
    }
    ShotSolver solver(shot, dims, cfg);
    return solver.run(record_dual);
}

PatternProjection project_pattern(const SamplingPattern& k, const ProjectionConfig& cfg) {
    k.validate();
    cfg.validate(k.dims, k.samples);
    stacked_operator_norm_sq(k.samples);  // fill the cache before the parallel region
    PatternProjection out;
    out.pattern = SamplingPattern(k.shots, k.samples, k.dims);
    out.residuals.resize(k.shots);
    std::vector<double> restoration(k.shots, 0.0);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(k.shots); ++s) {
        ShotSolver solver(k.shot(s), k.dims, cfg);
        ShotProjection res = solver.run(false);
        std::copy(res.coords.begin(), res.coords.end(), out.pattern.shot(s).begin());
        out.residuals[s] = res.residual;
        restoration[s] = res.restoration;
    }
    for (std::size_t s = 0; s < k.shots; ++s) {
        out.max_residual = std::max(out.max_residual, out.residuals[s].max());
        out.max_restoration = std::max(out.max_restoration, restoration[s]);
    }
    return out;
}

}  // namespace ktraj
