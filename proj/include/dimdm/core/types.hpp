#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dimdm/core/error.hpp"

namespace dimdm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class NoiseKind { gaussian, uniform };
enum class HeadKind { gaussian_head, uniform_head, raw };
enum class AugmentationKind { identity, additive_gaussian, random_crop_pad };
enum class BoundKind { dv, nwj, infonce };
enum class CriticKind { joint_mlp, separable, closed_form_gaussian };

namespace detail {

template <typename E, std::size_t N>
struct EnumNames {
    std::array<std::pair<E, std::string_view>, N> entries;

    constexpr std::string_view name(E e) const {
        for (const auto& [v, s] : entries)
            if (v == e) return s;
        return "?";
    }

    std::optional<E> parse(std::string_view s) const {
        for (const auto& [v, n] : entries)
            if (n == s) return v;
        return std::nullopt;
    }
};

inline constexpr EnumNames<NoiseKind, 2> noise_names{{{{NoiseKind::gaussian, "gaussian"}, {NoiseKind::uniform, "uniform"}}}};
inline constexpr EnumNames<HeadKind, 3> head_names{
    {{{HeadKind::gaussian_head, "gaussian_head"}, {HeadKind::uniform_head, "uniform_head"}, {HeadKind::raw, "raw"}}}};
inline constexpr EnumNames<AugmentationKind, 3> augmentation_names{{{{AugmentationKind::identity, "identity"},
                                                                     {AugmentationKind::additive_gaussian, "additive_gaussian"},
                                                                     {AugmentationKind::random_crop_pad, "random_crop_pad"}}}};
inline constexpr EnumNames<BoundKind, 3> bound_names{
    {{{BoundKind::dv, "dv"}, {BoundKind::nwj, "nwj"}, {BoundKind::infonce, "infonce"}}}};
inline constexpr EnumNames<CriticKind, 3> critic_names{{{{CriticKind::joint_mlp, "joint_mlp"},
                                                         {CriticKind::separable, "separable"},
                                                         {CriticKind::closed_form_gaussian, "closed_form_gaussian"}}}};

} // namespace detail

inline std::string_view to_string(NoiseKind k) { return detail::noise_names.name(k); }
inline std::string_view to_string(HeadKind k) { return detail::head_names.name(k); }
inline std::string_view to_string(AugmentationKind k) { return detail::augmentation_names.name(k); }
inline std::string_view to_string(BoundKind k) { return detail::bound_names.name(k); }
inline std::string_view to_string(CriticKind k) { return detail::critic_names.name(k); }

inline std::optional<NoiseKind> parse_noise_kind(std::string_view s) { return detail::noise_names.parse(s); }
inline std::optional<HeadKind> parse_head_kind(std::string_view s) { return detail::head_names.parse(s); }
inline std::optional<AugmentationKind> parse_augmentation_kind(std::string_view s) {
    return detail::augmentation_names.parse(s);
}
inline std::optional<BoundKind> parse_bound_kind(std::string_view s) { return detail::bound_names.parse(s); }
inline std::optional<CriticKind> parse_critic_kind(std::string_view s) { return detail::critic_names.parse(s); }

/// The injected noise Z: N(0, scale^2 I) or U([-scale, scale]^d).
struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian;
    double scale = 0.1;

    static NoiseSpec gaussian(double sigma) { return checked({NoiseKind::gaussian, sigma}); }
    static NoiseSpec uniform(double epsilon) { return checked({NoiseKind::uniform, epsilon}); }

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (!(scale > 0.0) || !std::isfinite(scale)) out.emplace_back("noise.scale must be a positive finite number");
        if (kind == NoiseKind::uniform && !(scale < 0.5))
            out.emplace_back("noise.scale must be < 0.5 for uniform noise");
        return out;
    }

    static NoiseSpec checked(NoiseSpec s) {
        if (auto v = s.violations(); !v.empty()) throw DomainError(v.front());
        return s;
    }

    /// Head the noise is paired with.
    HeadKind head() const { return kind == NoiseKind::gaussian ? HeadKind::gaussian_head : HeadKind::uniform_head; }

    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct AugmentationSpec {
    AugmentationKind kind = AugmentationKind::additive_gaussian;
    double strength = 0.6;

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (!(strength >= 0.0) || !std::isfinite(strength))
            out.emplace_back("augmentation.strength must be a non-negative finite number");
        if (kind == AugmentationKind::identity && strength != 0.0)
            out.emplace_back("augmentation.strength must be 0 for the identity augmentation");
        if (kind == AugmentationKind::random_crop_pad && strength != std::floor(strength))
            out.emplace_back("augmentation.strength must be a whole number of pixels for random_crop_pad");
        return out;
    }

    friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

struct CriticSpec {
    CriticKind kind = CriticKind::joint_mlp;
    int hidden_width = 256;
    int depth = 2;

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (hidden_width < 1) out.emplace_back("critic.hidden_width must be positive");
        if (depth < 1) out.emplace_back("critic.depth must be positive");
        return out;
    }

    friend bool operator==(const CriticSpec&, const CriticSpec&) = default;
};

/// A scalar MI lower-bound value in nats.
struct MIEstimate {
    double value = 0.0;
    BoundKind bound = BoundKind::infonce;
    std::size_t n = 0;
    double stderr_nats = 0.0;
};

/// n x d matrix of encoder outputs tagged with the head that produced it.
/// Construction checks finiteness and, for the uniform head, the unit-cube range.
class EmbeddingBatch {
public:
    EmbeddingBatch() = default;

    EmbeddingBatch(Matrix values, HeadKind head) : values_(std::move(values)), head_(head) {
        detail::require(values_.cols() >= 1, "embedding batch needs d >= 1");
        detail::require(values_.allFinite(), "embedding batch has non-finite entries");
        if (head_ == HeadKind::uniform_head)
            detail::require(values_.size() == 0 || (values_.minCoeff() >= 0.0 && values_.maxCoeff() <= 1.0),
                            "uniform-head embeddings must lie in [0,1]");
    }

    const Matrix& values() const noexcept { return values_; }
    HeadKind head() const noexcept { return head_; }
    Eigen::Index n() const noexcept { return values_.rows(); }
    Eigen::Index d() const noexcept { return values_.cols(); }

private:
    Matrix values_;
    HeadKind head_ = HeadKind::raw;
};

} // namespace dimdm
