#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "ktraj/detail/pairwise.hpp"
#include "ktraj/detail/repulsion_common.hpp"
#include "ktraj/errors.hpp"
#include "ktraj/repulsion.hpp"

namespace ktraj {

namespace {

constexpr int kMaxDepth = 30;
constexpr int kMaxOrder = 8;

// Lagrange basis on the n Chebyshev points of the first kind.
class Chebyshev {
public:
    explicit Chebyshev(int n) : n_(n), nodes_(n), bary_(n) {
        for (int m = 0; m < n; ++m) {
            const double angle = (2.0 * m + 1.0) * std::numbers::pi / (2.0 * n);
            nodes_[m] = std::cos(angle);
            bary_[m] = (m % 2 == 0 ? 1.0 : -1.0) * std::sin(angle);
        }
        // transfer_[s][a * n + b] = L_a((sign + xi_b) / 2): child node b seen from the parent.
        for (int s = 0; s < 2; ++s) {
            const double sign = s == 0 ? -1.0 : 1.0;
            transfer_[s].assign(static_cast<std::size_t>(n) * n, 0.0);
            std::vector<double> vals(n);
            for (int b = 0; b < n; ++b) {
                basis(0.5 * (sign + nodes_[b]), vals.data());
                for (int a = 0; a < n; ++a) transfer_[s][a * n + b] = vals[a];
            }
        }
    }

    int order() const { return n_; }
    double node(int m) const { return nodes_[m]; }
    const std::vector<double>& transfer(int s) const { return transfer_[s]; }

    void basis(double x, double* out) const {
        double total = 0.0;
        for (int m = 0; m < n_; ++m) {
            const double diff = x - nodes_[m];
            if (diff == 0.0) {
                std::fill(out, out + n_, 0.0);
                out[m] = 1.0;
                return;
            }
            out[m] = bary_[m] / diff;
            total += out[m];
        }
        const double inv = 1.0 / total;
        for (int m = 0; m < n_; ++m) out[m] *= inv;
    }

private:
    int n_;
    std::vector<double> nodes_;
    std::vector<double> bary_;
    std::array<std::vector<double>, 2> transfer_;
};

template <int D>
struct Node {
    std::array<double, D> center{};
    double half_width = 0.0;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::array<std::int32_t, (1 << D)> child{};
    std::int32_t parent = -1;
    bool leaf = true;

    std::uint32_t count() const { return end - begin; }
};

template <int D>
class Tree {
public:
    Tree(const SamplingPattern& k, int leaf_size) {
        const std::size_t p = k.size();
        perm_.resize(p);
        for (std::size_t i = 0; i < p; ++i) perm_[i] = static_cast<std::uint32_t>(i);

        std::array<double, D> lo, hi;
        lo.fill(std::numeric_limits<double>::infinity());
        hi.fill(-std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < p; ++i) {
            for (int a = 0; a < D; ++a) {
                lo[a] = std::min(lo[a], k.coords[i * D + a]);
                hi[a] = std::max(hi[a], k.coords[i * D + a]);
            }
        }
        Node<D> root;
        double hw = 0.0;
        for (int a = 0; a < D; ++a) {
            root.center[a] = 0.5 * (lo[a] + hi[a]);
            hw = std::max(hw, 0.5 * (hi[a] - lo[a]));
        }
        root.half_width = hw * (1.0 + 1e-12) + 1e-300;
        root.begin = 0;
        root.end = static_cast<std::uint32_t>(p);
        root.child.fill(-1);
        nodes_.push_back(root);

        std::vector<std::uint32_t> scratch(p);
        std::vector<std::uint8_t> octant(p);
        std::vector<std::pair<std::int32_t, int>> stack{{0, 0}};
        while (!stack.empty()) {
            const auto [id, depth] = stack.back();
            stack.pop_back();
            const Node<D> node = nodes_[id];
            if (node.count() <= static_cast<std::uint32_t>(leaf_size) || depth >= kMaxDepth ||
                node.half_width < 1e-13) {
                continue;
            }
            // Stable counting sort of the node's particles by octant.
            std::array<std::uint32_t, (1 << D)> counts{};
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::uint32_t src = perm_[i];
                int oct = 0;
                for (int a = 0; a < D; ++a) {
                    if (k.coords[static_cast<std::size_t>(src) * D + a] >= node.center[a]) oct |= 1 << a;
                }
                octant[i] = static_cast<std::uint8_t>(oct);
                ++counts[oct];
            }
            std::array<std::uint32_t, (1 << D)> offsets{};
            std::uint32_t run = node.begin;
            for (int o = 0; o < (1 << D); ++o) {
                offsets[o] = run;
                run += counts[o];
            }
            auto cursor = offsets;
            for (std::uint32_t i = node.begin; i < node.end; ++i) scratch[cursor[octant[i]]++] = perm_[i];
            std::copy(scratch.begin() + node.begin, scratch.begin() + node.end, perm_.begin() + node.begin);

            nodes_[id].leaf = false;
            for (int o = 0; o < (1 << D); ++o) {
                if (counts[o] == 0) continue;
                Node<D> c;
                c.half_width = 0.5 * node.half_width;
                for (int a = 0; a < D; ++a) {
                    c.center[a] = node.center[a] + ((o >> a) & 1 ? 0.5 : -0.5) * node.half_width;
                }
                c.begin = offsets[o];
                c.end = offsets[o] + counts[o];
                c.parent = id;
                c.child.fill(-1);
                const auto cid = static_cast<std::int32_t>(nodes_.size());
                nodes_[id].child[o] = cid;
                nodes_.push_back(c);
                stack.push_back({cid, depth + 1});
            }
        }

        for (int a = 0; a < D; ++a) {
            sorted_[a].resize(p);
            for (std::size_t i = 0; i < p; ++i) sorted_[a][i] = k.coords[static_cast<std::size_t>(perm_[i]) * D + a];
        }
    }

    const std::vector<Node<D>>& nodes() const { return nodes_; }
    const std::vector<std::uint32_t>& perm() const { return perm_; }
    const std::array<std::vector<double>, D>& sorted() const { return sorted_; }

private:
    std::vector<Node<D>> nodes_;
    std::vector<std::uint32_t> perm_;
    std::array<std::vector<double>, D> sorted_;
};

template <int D>
constexpr int ipow(int n) {
    int r = 1;
    for (int a = 0; a < D; ++a) r *= n;
    return r;
}

// Applies a 1-D n x n matrix along one axis of an n^D tensor: out[.., a, ..] = sum_b m[a, b] in[.., b, ..].
template <int D>
void apply_axis(const double* in, double* out, const double* m, int n, int axis, bool transpose) {
    int stride = 1;
    for (int a = D - 1; a > axis; --a) stride *= n;
    const int total = ipow<D>(n);
    const int block = stride * n;
    for (int base = 0; base < total; base += block) {
        for (int inner = 0; inner < stride; ++inner) {
            for (int a = 0; a < n; ++a) {
                double s = 0.0;
                for (int b = 0; b < n; ++b) {
                    const double coef = transpose ? m[b * n + a] : m[a * n + b];
                    s += coef * in[base + b * stride + inner];
                }
                out[base + a * stride + inner] = s;
            }
        }
    }
}

template <int D>
class FarField {
public:
    FarField(const Tree<D>& tree, const Chebyshev& cheb, double eps, double theta)
        : tree_(tree), cheb_(cheb), n_(cheb.order()), np_(ipow<D>(cheb.order())), eps2_(eps * eps),
          theta_(theta) {
        const auto& nodes = tree.nodes();
        m2l_.resize(nodes.size());
        direct_.resize(nodes.size());
        if (!nodes.empty()) interact(0, 0);
    }

    // Computes unnormalized per-particle sums in tree order.
    void evaluate(std::vector<double>& pot, std::vector<double>& grad) {
        const auto& nodes = tree_.nodes();
        const std::size_t p = tree_.perm().size();
        const auto nn = static_cast<std::ptrdiff_t>(nodes.size());
        multipole_.assign(nodes.size() * np_, 0.0);
        local_.assign(nodes.size() * np_ * (D + 1), 0.0);
        has_local_.assign(nodes.size(), 0);
        pot.assign(p, 0.0);
        grad.assign(p * D, 0.0);

        // Upward pass: leaves by particle-to-multipole, internal nodes from their children.
        // Children always have larger ids than their parent.
        std::vector<double> tmp_a(np_), tmp_b(np_);
        for (std::ptrdiff_t id = nn - 1; id >= 0; --id) {
            const Node<D>& node = nodes[id];
            double* m = multipole_.data() + id * np_;
            if (node.leaf) {
                particle_to_multipole(node, m);
                continue;
            }
            for (int o = 0; o < (1 << D); ++o) {
                const std::int32_t c = node.child[o];
                if (c < 0) continue;
                const double* src = multipole_.data() + static_cast<std::size_t>(c) * np_;
                std::copy(src, src + np_, tmp_a.begin());
                for (int a = 0; a < D; ++a) {
                    apply_axis<D>(tmp_a.data(), tmp_b.data(), cheb_.transfer((o >> a) & 1).data(), n_, a, false);
                    std::swap(tmp_a, tmp_b);
                }
                for (int q = 0; q < np_; ++q) m[q] += tmp_a[q];
            }
        }

        // Far-field transfers, parallel over target cells.
#pragma omp parallel
        {
            std::array<std::vector<double>, D> tgt, src;
            for (int a = 0; a < D; ++a) {
                tgt[a].resize(np_);
                src[a].resize(np_);
            }
#pragma omp for schedule(dynamic, 4)
            for (std::ptrdiff_t id = 0; id < nn; ++id) {
                if (m2l_[id].empty()) continue;
                has_local_[id] = 1;
                proxies(nodes[id], tgt);
                double* loc = local_.data() + static_cast<std::size_t>(id) * np_ * (D + 1);
                for (const std::int32_t s : m2l_[id]) {
                    proxies(nodes[s], src);
                    const double* w = multipole_.data() + static_cast<std::size_t>(s) * np_;
                    const double* sp[D];
                    for (int a = 0; a < D; ++a) sp[a] = src[a].data();
                    for (int q = 0; q < np_; ++q) {
                        double x[D];
                        for (int a = 0; a < D; ++a) x[a] = tgt[a][q];
                        double g[D] = {};
                        double pv = 0.0;
                        weighted_pairs(x, sp, w, pv, g);
                        loc[q] += pv;
                        for (int a = 0; a < D; ++a) loc[(a + 1) * np_ + q] += g[a];
                    }
                }
            }
        }

        // Downward pass: push parent locals to children.
        for (std::ptrdiff_t id = 0; id < nn; ++id) {
            const Node<D>& node = nodes[id];
            if (node.parent < 0 || !has_local_[node.parent]) continue;
            has_local_[id] = 1;
            const int o = octant_of(node);
            const double* parent = local_.data() + static_cast<std::size_t>(node.parent) * np_ * (D + 1);
            double* loc = local_.data() + static_cast<std::size_t>(id) * np_ * (D + 1);
            for (int f = 0; f <= D; ++f) {
                std::copy(parent + f * np_, parent + (f + 1) * np_, tmp_a.begin());
                for (int a = 0; a < D; ++a) {
                    apply_axis<D>(tmp_a.data(), tmp_b.data(), cheb_.transfer((o >> a) & 1).data(), n_, a, true);
                    std::swap(tmp_a, tmp_b);
                }
                for (int q = 0; q < np_; ++q) loc[f * np_ + q] += tmp_a[q];
            }
        }

        // Leaf pass: evaluate locals at particles, then near-field and small direct pairs,
        // including those recorded on ancestors.
        std::vector<std::int32_t> leaves;
        for (std::ptrdiff_t id = 0; id < nn; ++id) {
            if (nodes[id].leaf) leaves.push_back(static_cast<std::int32_t>(id));
        }
        const auto& sorted = tree_.sorted();
        const double* all[D];
        for (int a = 0; a < D; ++a) all[a] = sorted[a].data();
#pragma omp parallel
        {
            std::array<std::vector<double>, D> basis;
            for (int a = 0; a < D; ++a) basis[a].resize(n_);
#pragma omp for schedule(dynamic, 8)
            for (std::ptrdiff_t li = 0; li < static_cast<std::ptrdiff_t>(leaves.size()); ++li) {
                const std::int32_t id = leaves[li];
                const Node<D>& leaf = nodes[id];
                const double* loc = local_.data() + static_cast<std::size_t>(id) * np_ * (D + 1);
                for (std::uint32_t i = leaf.begin; i < leaf.end; ++i) {
                    double x[D];
                    for (int a = 0; a < D; ++a) x[a] = sorted[a][i];
                    if (has_local_[id]) {
                        evaluate_local(leaf, loc, x, basis, pot[i], grad.data() + static_cast<std::size_t>(i) * D);
                    }
                    for (std::int32_t t = id; t >= 0; t = nodes[t].parent) {
                        for (const std::int32_t s : direct_[t]) {
                            const Node<D>& sn = nodes[s];
                            const double* sp[D];
                            for (int a = 0; a < D; ++a) sp[a] = all[a] + sn.begin;
                            detail::accumulate_pairs<D>(x, sp, sn.count(), eps2_, pot[i],
                                                        grad.data() + static_cast<std::size_t>(i) * D);
                        }
                    }
                }
            }
        }
    }

private:
    void interact(std::int32_t t, std::int32_t s) {
        const auto& nodes = tree_.nodes();
        const Node<D>& tn = nodes[t];
        const Node<D>& sn = nodes[s];
        double dist2 = 0.0;
        for (int a = 0; a < D; ++a) {
            const double diff = tn.center[a] - sn.center[a];
            dist2 += diff * diff;
        }
        const double radii = (tn.half_width + sn.half_width) * std::sqrt(static_cast<double>(D));
        if (t != s && radii * radii < theta_ * theta_ * dist2) {
            const double pairs = static_cast<double>(tn.count()) * static_cast<double>(sn.count());
            if (pairs <= static_cast<double>(np_) * static_cast<double>(np_)) {
                direct_[t].push_back(s);
            } else {
                m2l_[t].push_back(s);
            }
            return;
        }
        if (tn.leaf && sn.leaf) {
            direct_[t].push_back(s);
            return;
        }
        const bool split_target = !tn.leaf && (sn.leaf || tn.half_width >= sn.half_width);
        if (split_target) {
            for (const std::int32_t c : tn.child) {
                if (c >= 0) interact(c, s);
            }
        } else {
            for (const std::int32_t c : sn.child) {
                if (c >= 0) interact(t, c);
            }
        }
    }

    int octant_of(const Node<D>& node) const {
        const Node<D>& parent = tree_.nodes()[node.parent];
        int o = 0;
        for (int a = 0; a < D; ++a) {
            if (node.center[a] > parent.center[a]) o |= 1 << a;
        }
        return o;
    }

    void proxies(const Node<D>& node, std::array<std::vector<double>, D>& out) const {
        for (int q = 0; q < np_; ++q) {
            int rem = q;
            for (int a = D - 1; a >= 0; --a) {
                out[a][q] = node.center[a] + node.half_width * cheb_.node(rem % n_);
                rem /= n_;
            }
        }
    }

    void particle_to_multipole(const Node<D>& node, double* m) const {
        const auto& sorted = tree_.sorted();
        std::array<std::array<double, kMaxOrder>, D> b{};
        const double inv_hw = 1.0 / node.half_width;
        for (std::uint32_t i = node.begin; i < node.end; ++i) {
            for (int a = 0; a < D; ++a) {
                const double u = std::clamp((sorted[a][i] - node.center[a]) * inv_hw, -1.0, 1.0);
                cheb_.basis(u, b[a].data());
            }
            tensor_accumulate(b, 1.0, m);
        }
    }

    void tensor_accumulate(const std::array<std::array<double, kMaxOrder>, D>& b, double w, double* m) const {
        if constexpr (D == 2) {
            for (int i = 0; i < n_; ++i) {
                const double bi = w * b[0][i];
                for (int j = 0; j < n_; ++j) m[i * n_ + j] += bi * b[1][j];
            }
        } else {
            for (int i = 0; i < n_; ++i) {
                for (int j = 0; j < n_; ++j) {
                    const double bij = w * b[0][i] * b[1][j];
                    double* row = m + (i * n_ + j) * n_;
                    for (int l = 0; l < n_; ++l) row[l] += bij * b[2][l];
                }
            }
        }
    }

    void evaluate_local(const Node<D>& node, const double* loc, const double* x,
                        std::array<std::vector<double>, D>& basis, double& pot, double* grad) const {
        const double inv_hw = 1.0 / node.half_width;
        for (int a = 0; a < D; ++a) {
            const double u = std::clamp((x[a] - node.center[a]) * inv_hw, -1.0, 1.0);
            cheb_.basis(u, basis[a].data());
        }
        double acc[D + 1] = {};
        if constexpr (D == 2) {
            for (int i = 0; i < n_; ++i) {
                for (int j = 0; j < n_; ++j) {
                    const double w = basis[0][i] * basis[1][j];
                    const int q = i * n_ + j;
                    for (int f = 0; f <= D; ++f) acc[f] += w * loc[f * np_ + q];
                }
            }
        } else {
            for (int i = 0; i < n_; ++i) {
                for (int j = 0; j < n_; ++j) {
                    const double wij = basis[0][i] * basis[1][j];
                    for (int l = 0; l < n_; ++l) {
                        const double w = wij * basis[2][l];
                        const int q = (i * n_ + j) * n_ + l;
                        for (int f = 0; f <= D; ++f) acc[f] += w * loc[f * np_ + q];
                    }
                }
            }
        }
        pot += acc[0];
        for (int a = 0; a < D; ++a) grad[a] += acc[a + 1];
    }

    void weighted_pairs(const double* x, const double* const* src, const double* w, double& pot, double* grad) const {
        double acc_p[detail::kLanes] = {};
        double acc_g[D][detail::kLanes] = {};
        int j = 0;
        for (; j + detail::kLanes <= np_; j += detail::kLanes) {
            for (int l = 0; l < detail::kLanes; ++l) {
                double diff[D];
                double r2 = eps2_;
                for (int a = 0; a < D; ++a) {
                    diff[a] = x[a] - src[a][j + l];
                    r2 += diff[a] * diff[a];
                }
                const double h = std::sqrt(r2);
                const double wl = w[j + l];
                acc_p[l] += wl * h;
                const double inv = wl / h;
                for (int a = 0; a < D; ++a) acc_g[a][l] += diff[a] * inv;
            }
        }
        for (int l = 0; j + l < np_; ++l) {
            double diff[D];
            double r2 = eps2_;
            for (int a = 0; a < D; ++a) {
                diff[a] = x[a] - src[a][j + l];
                r2 += diff[a] * diff[a];
            }
            const double h = std::sqrt(r2);
            const double wl = w[j + l];
            acc_p[l] += wl * h;
            const double inv = wl / h;
            for (int a = 0; a < D; ++a) acc_g[a][l] += diff[a] * inv;
        }
        for (int l = 0; l < detail::kLanes; ++l) {
            pot += acc_p[l];
            for (int a = 0; a < D; ++a) grad[a] += acc_g[a][l];
        }
    }

    const Tree<D>& tree_;
    const Chebyshev& cheb_;
    int n_;
    int np_;
    double eps2_;
    double theta_;
    std::vector<std::vector<std::int32_t>> m2l_;
    std::vector<std::vector<std::int32_t>> direct_;
    std::vector<double> multipole_;
    std::vector<double> local_;
    std::vector<std::uint8_t> has_local_;
};

std::vector<std::size_t> verification_targets(std::size_t p, int samples) {
    std::vector<std::size_t> out;
    const std::size_t m = std::min<std::size_t>(p, static_cast<std::size_t>(samples));
    for (std::size_t s = 0; s < m; ++s) out.push_back(s * p / m);
    return out;
}

template <int D>
RepulsionResult run_tree(const SamplingPattern& k, const RepulsionConfig& cfg) {
    const std::size_t p = k.size();
    const Tree<D> tree(k, cfg.leaf_size);
    const auto targets = verification_targets(p, cfg.verify_samples);
    std::vector<double> ref_pot, ref_grad;
    if (!targets.empty()) detail::direct_sums(k, cfg.kernel_eps, targets, ref_pot, ref_grad);

    RepulsionResult res;
    res.backend_used = RepulsionBackend::Tree;
    for (int order = cfg.interp_order; order <= kMaxOrder; ++order) {
        const Chebyshev cheb(order);
        FarField<D> far(tree, cheb, cfg.kernel_eps, cfg.mac_theta);
        std::vector<double> pot_sorted, grad_sorted;
        far.evaluate(pot_sorted, grad_sorted);

        std::vector<double> pot(p), grad(p * D);
        const auto& perm = tree.perm();
        for (std::size_t i = 0; i < p; ++i) {
            pot[perm[i]] = pot_sorted[i];
            for (int a = 0; a < D; ++a) grad[static_cast<std::size_t>(perm[i]) * D + a] = grad_sorted[i * D + a];
        }

        double cost_err = 0.0, grad_err = 0.0;
        if (!targets.empty()) {
            double dp = 0.0, rp = 0.0, dg = 0.0, rg = 0.0;
            for (std::size_t t = 0; t < targets.size(); ++t) {
                dp += std::abs(pot[targets[t]] - ref_pot[t]);
                rp += std::abs(ref_pot[t]);
                for (int a = 0; a < D; ++a) {
                    const double diff = grad[targets[t] * D + a] - ref_grad[t * D + a];
                    dg += diff * diff;
                    rg += ref_grad[t * D + a] * ref_grad[t * D + a];
                }
            }
            cost_err = rp > 0.0 ? dp / rp : dp;
            grad_err = rg > 0.0 ? std::sqrt(dg / rg) : std::sqrt(dg);
        }
        res.order_used = order;
        res.est_cost_error = cost_err;
        res.est_grad_error = grad_err;
        if (cost_err <= cfg.tree_precision && grad_err <= cfg.tree_precision) {
            detail::finalize(res, pot, std::move(grad), p);
            return res;
        }
        std::ostringstream msg;
        msg << "tree repulsion: sampled error (cost " << cost_err << ", gradient " << grad_err
            << ") exceeds precision " << cfg.tree_precision << " at order " << order;
        if (order < kMaxOrder) msg << "; escalating order";
        res.warnings.push_back(msg.str());
    }
    res.warnings.push_back("tree repulsion: falling back to direct summation");
    RepulsionResult direct = eval_repulsion_direct(k, cfg.kernel_eps);
    direct.warnings = std::move(res.warnings);
    return direct;
}

}  // namespace

RepulsionResult eval_repulsion_tree(const SamplingPattern& k, const RepulsionConfig& cfg) {
    cfg.validate();
    if (k.size() == 0) throw InputError("repulsion: empty pattern");
    if (k.dims == 2) return run_tree<2>(k, cfg);
    if (k.dims == 3) return run_tree<3>(k, cfg);
    throw InputError("repulsion: dims must be 2 or 3");
}

}  // namespace ktraj
