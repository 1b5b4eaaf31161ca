#pragma once

// Input augmentations X -> X'. All functions are pure given the stream.

#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/nn/layers.hpp"

namespace dimdm::training {

using nn::ImageShape;
using nn::Mat;

/// Applies `spec` to every row. `shape` describes the row layout and is only
/// used by random_crop_pad (zero padding by `strength` pixels, then a random
/// crop back to the original size, drawn per sample).
template <typename S>
Mat<S> augment(const Mat<S>& batch, const AugmentationSpec& spec, Rng& rng, ImageShape shape) {
    if (auto v = spec.violations(); !v.empty()) throw DomainError(v.front());
    switch (spec.kind) {
    case AugmentationKind::identity: return batch;
    case AugmentationKind::additive_gaussian: {
        Mat<S> out = batch;
        const double s = spec.strength;
        for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += static_cast<S>(s * rng.normal());
        return out;
    }
    case AugmentationKind::random_crop_pad: {
        dimdm::detail::require(shape.size() == batch.cols(), "augment: image shape does not match the row width");
        const int pad = static_cast<int>(spec.strength);
        Mat<S> out = Mat<S>::Zero(batch.rows(), batch.cols());
        const int c = shape.channels;
        for (Eigen::Index n = 0; n < batch.rows(); ++n) {
            const int dy = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1))) - pad;
            const int dx = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1))) - pad;
            for (int y = 0; y < shape.height; ++y) {
                const int sy = y + dy;
                if (sy < 0 || sy >= shape.height) continue;
                for (int x = 0; x < shape.width; ++x) {
                    const int sx = x + dx;
                    if (sx < 0 || sx >= shape.width) continue;
                    for (int k = 0; k < c; ++k)
                        out(n, (static_cast<Eigen::Index>(y) * shape.width + x) * c + k) =
                            batch(n, (static_cast<Eigen::Index>(sy) * shape.width + sx) * c + k);
                }
            }
        }
        return out;
    }
    }
    throw DomainError("unknown augmentation kind");
}

template <typename S>
Mat<S> augment(const Mat<S>& batch, const AugmentationSpec& spec, Rng& rng) {
    return augment(batch, spec, rng, ImageShape{1, static_cast<int>(batch.cols()), 1});
}

/// Per-sample mixture: with probability `identity_prob` a row is left
/// untouched, otherwise it is augmented. Keeps P(X = X' | X) >= identity_prob.
template <typename S>
Mat<S> augment_mixed(const Mat<S>& batch, const AugmentationSpec& spec, double identity_prob, Rng& rng, ImageShape shape) {
    dimdm::detail::require(identity_prob >= 0.0 && identity_prob <= 1.0, "augment: identity probability outside [0,1]");
    Mat<S> out = augment(batch, spec, rng, shape);
    for (Eigen::Index n = 0; n < batch.rows(); ++n)
        if (rng.uniform() < identity_prob) out.row(n) = batch.row(n);
    return out;
}

} // namespace dimdm::training
