#pragma once

#include <array>
#include <vector>

#include "ktraj/repulsion.hpp"

namespace ktraj::detail {

struct SoaPoints {
    int dims = 0;
    std::array<std::vector<double>, 3> axis;
};

SoaPoints to_soa(const SamplingPattern& k);

/// Applies the 1/(2p^2) and 1/p^2 normalizations and sums the cost in index order.
void finalize(RepulsionResult& res, const std::vector<double>& pot, std::vector<double> grad, std::size_t p);

}  // namespace ktraj::detail
