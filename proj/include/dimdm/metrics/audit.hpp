#pragma once

// Distribution-matching audit: projected univariate tests, Henze-Zirkler,
// and the optional divergence bound, assembled into one report.

#include <optional>
#include <string>
#include <string_view>

#include "dimdm/core/config.hpp"
#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/metrics/kl.hpp"
#include "dimdm/metrics/normality.hpp"
#include "dimdm/metrics/pit.hpp"

namespace dimdm::metrics {

enum class Target { gaussian, uniform };

inline std::string_view to_string(Target t) { return t == Target::gaussian ? "gaussian" : "uniform"; }

inline std::optional<Target> parse_target(std::string_view s) {
    if (s == "gaussian") return Target::gaussian;
    if (s == "uniform") return Target::uniform;
    return std::nullopt;
}

/// Mutual-information inputs of the divergence bound (nats) and the noise
/// scale they were measured at.
struct KlInputs {
    double i_noise_output = 0.0;
    double i_objective = 0.0;
    double noise_scale = 0.0;
};

struct AuditSettings {
    ProjectionSettings projection;
    std::optional<KlInputs> kl;
};

struct DMReport {
    double dagostino_pearson = 0.0;
    double shapiro_wilk = 0.0;
    double henze_zirkler = 0.0;
    std::optional<double> kl_upper_bound;
    int n_projections = 0;
    int subsample_size = 0;
    int n_bootstrap = 0;
    Target target = Target::gaussian;

    /// Flat `key = value` lines in field order; an absent bound is `none`.
    std::string to_text() const {
        using dimdm::detail::format_double;
        std::string s;
        s += "dagostino_pearson = " + format_double(dagostino_pearson) + "\n";
        s += "shapiro_wilk = " + format_double(shapiro_wilk) + "\n";
        s += "henze_zirkler = " + format_double(henze_zirkler) + "\n";
        s += "kl_upper_bound = " + (kl_upper_bound ? format_double(*kl_upper_bound) : std::string("none")) + "\n";
        s += "n_projections = " + std::to_string(n_projections) + "\n";
        s += "subsample_size = " + std::to_string(subsample_size) + "\n";
        s += "n_bootstrap = " + std::to_string(n_bootstrap) + "\n";
        s += "target = " + std::string(to_string(target)) + "\n";
        return s;
    }
};

/// Runs the battery against `target`. The uniform target is first mapped to
/// the Gaussian case by the probability integral transform. Streams:
/// rng.fork(0) D'Agostino-Pearson, fork(1) Shapiro-Wilk, fork(2) Henze-Zirkler
/// subsamples.
inline DMReport audit(const EmbeddingBatch& emb, Target target, const AuditSettings& settings, Rng& rng) {
    Matrix x = emb.values();
    if (target == Target::uniform) {
        dimdm::detail::require(x.size() == 0 || (x.minCoeff() >= 0.0 && x.maxCoeff() <= 1.0),
                               "uniform-target audit needs embeddings inside [0, 1]");
        x = pit_uniform_to_gaussian(x);
    }
    const auto& ps = settings.projection;
    auto dp_rng = rng.fork(0), sw_rng = rng.fork(1), hz_rng = rng.fork(2);
    DMReport r;
    r.target = target;
    r.n_projections = ps.n_projections;
    r.subsample_size = ps.subsample_size;
    r.n_bootstrap = ps.n_bootstrap;
    r.dagostino_pearson = projected_normality(x, UnivariateTest::dagostino_pearson, ps, dp_rng);
    r.shapiro_wilk = projected_normality(x, UnivariateTest::shapiro_wilk, ps, sw_rng);
    r.henze_zirkler = bootstrapped_henze_zirkler(x, ps, hz_rng);
    if (settings.kl) {
        const int d = static_cast<int>(x.cols());
        r.kl_upper_bound = target == Target::gaussian
                               ? kl_upper_bound_gaussian(settings.kl->i_noise_output, settings.kl->i_objective, d, settings.kl->noise_scale)
                               : kl_upper_bound_uniform(settings.kl->i_noise_output, settings.kl->i_objective, d, settings.kl->noise_scale);
    }
    return r;
}

} // namespace dimdm::metrics
