#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/core/types.hpp"

namespace dimdm::mi {

/// Mismatched pairing (i, perm[i]) with perm[i] != i for every i: an
/// in-batch sample from the product of marginals.
struct Pairing {
    std::vector<std::size_t> perm;
};

/// Uniformly random derangement of {0..n-1} by rejection (about e draws on average).
inline Pairing marginal_pairing(std::size_t n, Rng& rng) {
    dimdm::detail::require(n >= 2, "marginal pairing needs n >= 2");
    Pairing p;
    p.perm.resize(n);
    for (;;) {
        std::iota(p.perm.begin(), p.perm.end(), std::size_t{0});
        for (std::size_t i = n - 1; i > 0; --i) std::swap(p.perm[i], p.perm[rng.below(i + 1)]);
        bool fixed = false;
        for (std::size_t i = 0; i < n && !fixed; ++i) fixed = p.perm[i] == i;
        if (!fixed) return p;
    }
}

template <typename DX, typename DY>
Pairing marginal_pairing(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y, Rng& rng) {
    dimdm::detail::require(x.rows() == y.rows(), "marginal pairing: x and y row counts differ");
    return marginal_pairing(static_cast<std::size_t>(x.rows()), rng);
}

} // namespace dimdm::mi
