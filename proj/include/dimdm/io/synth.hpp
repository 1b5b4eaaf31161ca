#pragma once

// Synthetic datasets with known structure, used as null-hypothesis and
// oracle data.
//
//   gaussian_blobs  `classes` isotropic Gaussians (std `noise`) with centres
//                   equally spaced on the diagonal from -scale*1 to +scale*1;
//                   sample i has label i mod classes
//   uniform_cube    U([0,1]^d), unlabelled
//   two_moons       two interleaved half circles in the plane plus Gaussian
//                   jitter of std `noise`; label = moon index (d must be 2)

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/io/dataset.hpp"

namespace dimdm::io {

enum class SynthKind { gaussian_blobs, uniform_cube, two_moons };

inline std::string_view to_string(SynthKind k) {
    switch (k) {
    case SynthKind::gaussian_blobs: return "gaussian_blobs";
    case SynthKind::uniform_cube: return "uniform_cube";
    case SynthKind::two_moons: return "two_moons";
    }
    return "?";
}

inline std::optional<SynthKind> parse_synth_kind(std::string_view s) {
    for (auto k : {SynthKind::gaussian_blobs, SynthKind::uniform_cube, SynthKind::two_moons})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

struct SynthSpec {
    SynthKind kind = SynthKind::gaussian_blobs;
    Eigen::Index n = 1000;
    int d = 2;
    int classes = 2;     // gaussian_blobs
    double scale = 5.0;  // gaussian_blobs
    double noise = 1.0;  // gaussian_blobs, two_moons
};

inline Dataset synth_dataset(const SynthSpec& spec, Rng& rng) {
    dimdm::detail::require(spec.n >= 1, "synthetic dataset needs n >= 1");
    dimdm::detail::require(spec.d >= 1, "synthetic dataset needs d >= 1");
    dimdm::detail::require(spec.noise >= 0.0 && std::isfinite(spec.noise), "synthetic noise must be finite and non-negative");
    Dataset ds;
    ds.name = std::string(to_string(spec.kind));
    ds.inputs.resize(spec.n, spec.d);
    ds.shape = {1, spec.d, 1};
    switch (spec.kind) {
    case SynthKind::gaussian_blobs: {
        dimdm::detail::require(spec.classes >= 1, "gaussian_blobs needs at least one class");
        ds.labels.emplace(static_cast<std::size_t>(spec.n));
        for (Eigen::Index i = 0; i < spec.n; ++i) {
            const int c = static_cast<int>(i % spec.classes);
            const double t = spec.classes == 1 ? 0.0 : 2.0 * c / (spec.classes - 1) - 1.0;
            for (int j = 0; j < spec.d; ++j) ds.inputs(i, j) = spec.scale * t + spec.noise * rng.normal();
            (*ds.labels)[static_cast<std::size_t>(i)] = c;
        }
        break;
    }
    case SynthKind::uniform_cube:
        for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) ds.inputs.data()[i] = rng.uniform();
        break;
    case SynthKind::two_moons: {
        dimdm::detail::require(spec.d == 2, "two_moons is two-dimensional");
        ds.labels.emplace(static_cast<std::size_t>(spec.n));
        for (Eigen::Index i = 0; i < spec.n; ++i) {
            const int c = static_cast<int>(i % 2);
            const double t = std::numbers::pi * rng.uniform();
            const double x = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
            const double y = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
            ds.inputs(i, 0) = x + spec.noise * rng.normal();
            ds.inputs(i, 1) = y + spec.noise * rng.normal();
            (*ds.labels)[static_cast<std::size_t>(i)] = c;
        }
        break;
    }
    }
    return ds;
}

} // namespace dimdm::io
