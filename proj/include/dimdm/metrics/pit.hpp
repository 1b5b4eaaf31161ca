#pragma once

// Componentwise probability integral transforms between N(0,1) and U(0,1)
// marginals.

#include <algorithm>
#include <limits>

#include "dimdm/core/types.hpp"
#include "dimdm/metrics/stats.hpp"

namespace dimdm::metrics {

/// Clipping applied before the normal quantile, which diverges at 0 and 1.
inline constexpr double pit_delta = 1e-7;

inline Matrix pit_gaussian_to_uniform(const Matrix& x) {
    static constexpr double lo = std::numeric_limits<double>::min();
    static constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
    return x.unaryExpr([](double v) { return std::clamp(normal_cdf(v), lo, hi); }).eval();
}

inline Matrix pit_uniform_to_gaussian(const Matrix& u) {
    return u.unaryExpr([](double v) { return normal_quantile(std::clamp(v, pit_delta, 1.0 - pit_delta)); });
}

/// Phi applied to every entry; the result lies in (0, 1).
inline EmbeddingBatch pit_gaussian_to_uniform(const EmbeddingBatch& emb) {
    return EmbeddingBatch(pit_gaussian_to_uniform(emb.values()), HeadKind::uniform_head);
}

/// Phi^-1 applied to every entry after clipping to [delta, 1 - delta].
inline EmbeddingBatch pit_uniform_to_gaussian(const EmbeddingBatch& emb) {
    return EmbeddingBatch(pit_uniform_to_gaussian(emb.values()), HeadKind::gaussian_head);
}

} // namespace dimdm::metrics
