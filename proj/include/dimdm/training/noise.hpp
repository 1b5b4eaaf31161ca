#pragma once

#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/nn/layers.hpp"

namespace dimdm::training {

inline void check_noise_head(const NoiseSpec& noise, HeadKind head) {
    if (auto v = noise.violations(); !v.empty()) throw DomainError(v.front());
    dimdm::detail::require(noise.head() == head, std::string("noise kind '") + std::string(to_string(noise.kind)) +
                                                     "' is incompatible with head '" + std::string(to_string(head)) + "'");
}

/// Adds fresh i.i.d. noise to every entry, in place.
template <typename S>
void add_noise(nn::Mat<S>& m, const NoiseSpec& noise, Rng& rng) {
    const double s = noise.scale;
    if (noise.kind == NoiseKind::gaussian)
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<S>(s * rng.normal());
    else
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<S>(rng.uniform(-s, s));
}

/// f(X) + Z. The sum leaves the head's support, so the result is tagged raw.
inline EmbeddingBatch inject_noise(const EmbeddingBatch& emb, const NoiseSpec& noise, Rng& rng) {
    check_noise_head(noise, emb.head());
    nn::Mat<double> m = emb.values();
    add_noise(m, noise, rng);
    return EmbeddingBatch(Matrix(m), HeadKind::raw);
}

} // namespace dimdm::training
