#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ktraj/core.hpp"

namespace ktraj {

enum class RepulsionBackend { Direct, Tree };

struct RepulsionConfig {
    double kernel_eps = 1e-3;
    RepulsionBackend backend = RepulsionBackend::Direct;
    double tree_precision = 1e-4;  // target relative error on cost and on the gradient l2 norm
    int leaf_size = 64;
    int interp_order = 5;          // Chebyshev nodes per axis in far-field expansions
    double mac_theta = 0.85;       // cell pairs with (r_T + r_S) < theta * distance are far-field
    int verify_samples = 64;       // particles checked against direct summation (0 disables)

    void validate() const;
};

struct RepulsionResult {
    double cost = 0.0;
    std::vector<double> grad;  // p x d
    RepulsionBackend backend_used = RepulsionBackend::Direct;
    int order_used = 0;
    // Sampled relative errors of the tree result (zero for direct summation).
    double est_cost_error = 0.0;
    double est_grad_error = 0.0;
    std::vector<std::string> warnings;
};

/// Exact pairwise repulsion
///   cost  = 1/(2p^2) sum_{i,j} sqrt(r_ij^2 + eps^2)
///   grad_i = 1/p^2 sum_{j != i} (K_i - K_j) / sqrt(r_ij^2 + eps^2)
/// Coincident pairs contribute nothing to the gradient. Thread-count independent.
RepulsionResult eval_repulsion_direct(const SamplingPattern& k, double eps);

/// Hierarchical approximation of the same sums: an adaptive 2^d-tree with Chebyshev
/// interpolation of the kernel between well-separated cells. The result is checked on a
/// sample of particles; the interpolation order escalates (up to 8) when the sample error
/// exceeds tree_precision, and the call falls back to direct summation past that.
RepulsionResult eval_repulsion_tree(const SamplingPattern& k, const RepulsionConfig& cfg);

/// Dispatches on cfg.backend.
RepulsionResult eval_repulsion(const SamplingPattern& k, const RepulsionConfig& cfg);

namespace detail {

/// Per-particle unnormalized sums for a subset of targets against all sources:
/// pot[t] = sum_j H(r), grad[t] = sum_j (x_t - x_j)/H(r). Used for tree verification.
void direct_sums(const SamplingPattern& k, double eps, const std::vector<std::size_t>& targets,
                 std::vector<double>& pot, std::vector<double>& grad);

}  // namespace detail

}  // namespace ktraj
