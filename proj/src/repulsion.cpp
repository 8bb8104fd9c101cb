#include "ktraj/repulsion.hpp"

#include <cmath>

#include "ktraj/detail/pairwise.hpp"
#include "ktraj/detail/repulsion_common.hpp"
#include "ktraj/errors.hpp"

namespace ktraj {

void RepulsionConfig::validate() const {
    if (!(kernel_eps >= 0.0) || !std::isfinite(kernel_eps)) throw InputError("repulsion.kernel_eps must be >= 0");
    if (!(tree_precision > 0.0)) throw InputError("repulsion.tree_precision must be > 0");
    if (leaf_size < 8) throw InputError("repulsion.leaf_size must be >= 8");
    if (interp_order < 2 || interp_order > 8) throw InputError("repulsion.interp_order must lie in [2, 8]");
    if (!(mac_theta > 0.0 && mac_theta < 1.0)) throw InputError("repulsion.mac_theta must lie in (0, 1)");
    if (verify_samples < 0) throw InputError("repulsion.verify_samples must be >= 0");
}

namespace detail {

SoaPoints to_soa(const SamplingPattern& k) {
    SoaPoints s;
    s.dims = k.dims;
    const std::size_t p = k.size();
    for (int a = 0; a < k.dims; ++a) {
        s.axis[a].resize(p);
        for (std::size_t i = 0; i < p; ++i) s.axis[a][i] = k.coords[i * k.dims + a];
    }
    return s;
}

void finalize(RepulsionResult& res, const std::vector<double>& pot, std::vector<double> grad, std::size_t p) {
    const double inv_p2 = 1.0 / (static_cast<double>(p) * static_cast<double>(p));
    double total = 0.0;
    for (double v : pot) total += v;
    res.cost = 0.5 * inv_p2 * total;
    for (double& g : grad) g *= inv_p2;
    res.grad = std::move(grad);
}

void direct_sums(const SamplingPattern& k, double eps, const std::vector<std::size_t>& targets,
                 std::vector<double>& pot, std::vector<double>& grad) {
    const int d = k.dims;
    const SoaPoints soa = to_soa(k);
    const double* src[3] = {soa.axis[0].data(), soa.axis[1].data(), d == 3 ? soa.axis[2].data() : nullptr};
    const double eps2 = eps * eps;
    const std::size_t p = k.size();
    pot.assign(targets.size(), 0.0);
    grad.assign(targets.size() * d, 0.0);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t tt = 0; tt < static_cast<std::ptrdiff_t>(targets.size()); ++tt) {
        const auto t = static_cast<std::size_t>(tt);
        const double* x = k.coords.data() + targets[t] * d;
        if (d == 2) {
            accumulate_pairs<2>(x, src, p, eps2, pot[t], grad.data() + t * 2);
        } else {
            accumulate_pairs<3>(x, src, p, eps2, pot[t], grad.data() + t * 3);
        }
    }
}

}  // namespace detail

RepulsionResult eval_repulsion_direct(const SamplingPattern& k, double eps) {
    if (k.size() == 0) throw InputError("repulsion: empty pattern");
    if (!(eps >= 0.0)) throw InputError("repulsion: kernel_eps must be >= 0");
    const std::size_t p = k.size();
    std::vector<std::size_t> all(p);
    for (std::size_t i = 0; i < p; ++i) all[i] = i;
    std::vector<double> pot, grad;
    detail::direct_sums(k, eps, all, pot, grad);
    RepulsionResult res;
    res.backend_used = RepulsionBackend::Direct;
    detail::finalize(res, pot, std::move(grad), p);
    return res;
}

RepulsionResult eval_repulsion(const SamplingPattern& k, const RepulsionConfig& cfg) {
    cfg.validate();
    if (cfg.backend == RepulsionBackend::Tree) return eval_repulsion_tree(k, cfg);
    return eval_repulsion_direct(k, cfg.kernel_eps);
}

}  // namespace ktraj
