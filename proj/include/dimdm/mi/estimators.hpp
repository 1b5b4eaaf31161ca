#pragma once

// Variational MI lower bounds evaluated on critic scores, in nats.
//
//   DV       mean T(x_i, y_i) - log mean exp T(x_i, y_pi(i))
//   NWJ      mean T(x_i, y_i) - mean exp(T(x_i, y_pi(i)) - 1)
//   InfoNCE  mean_i [ S_ii - log mean_j exp S_ij ]
//
// Sums run over sorted copies so that every estimate is exactly invariant to
// the order of the samples.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dimdm/core/error.hpp"
#include "dimdm/core/types.hpp"

namespace dimdm::mi {

/// Critic values on positive pairs (joint) and mismatched pairs (marginal).
struct CriticScores {
    Vector joint;
    Vector marginal;
};

/// d(bound)/d(score) for the pair-based bounds.
struct ScoreGradient {
    Vector joint;
    Vector marginal;
};

namespace detail {

inline double sorted_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return std::accumulate(v.begin(), v.end(), 0.0);
}

/// Mean computed as s + mean(v - s) around the sorted median s, so that a
/// constant vector returns its value exactly.
inline double shifted_mean(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double s = v[v.size() / 2];
    for (auto& x : v) x -= s;
    return s + std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline double sample_variance(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    std::vector<double> sq(v.size());
    std::transform(v.begin(), v.end(), sq.begin(), [mean](double x) { return (x - mean) * (x - mean); });
    return sorted_sum(std::move(sq)) / static_cast<double>(v.size() - 1);
}

inline void check_scores(const CriticScores& s) {
    dimdm::detail::require(s.joint.size() > 0 && s.marginal.size() > 0, "estimator needs non-empty joint and marginal scores");
    dimdm::detail::require(s.joint.allFinite() && s.marginal.allFinite(), "critic scores must be finite");
}

/// log(mean(exp(v))) with max subtraction.
inline double log_mean_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    std::vector<double> e(v.size());
    std::transform(v.begin(), v.end(), e.begin(), [m](double x) { return std::exp(x - m); });
    return m + std::log(sorted_sum(std::move(e)) / static_cast<double>(v.size()));
}

} // namespace detail

inline MIEstimate dv_estimate(const CriticScores& s) {
    detail::check_scores(s);
    const auto j = detail::to_std(s.joint);
    const auto m = detail::to_std(s.marginal);
    const double nj = static_cast<double>(j.size());
    const double nm = static_cast<double>(m.size());
    const double mean_j = detail::shifted_mean(j);
    const double lme = detail::log_mean_exp(m);

    // delta method on log of the mean of e = exp(m - max)
    const double mx = *std::max_element(m.begin(), m.end());
    std::vector<double> e(m.size());
    std::transform(m.begin(), m.end(), e.begin(), [mx](double x) { return std::exp(x - mx); });
    const double mean_e = detail::sorted_sum(e) / nm;
    const double var = detail::sample_variance(j, mean_j) / nj + detail::sample_variance(e, mean_e) / (nm * mean_e * mean_e);
    return {mean_j - lme, BoundKind::dv, j.size(), std::sqrt(var)};
}

inline MIEstimate nwj_estimate(const CriticScores& s) {
    detail::check_scores(s);
    const auto j = detail::to_std(s.joint);
    std::vector<double> e(static_cast<std::size_t>(s.marginal.size()));
    std::transform(s.marginal.begin(), s.marginal.end(), e.begin(), [](double x) { return std::exp(x - 1.0); });
    const double nj = static_cast<double>(j.size());
    const double nm = static_cast<double>(e.size());
    const double mean_j = detail::shifted_mean(j);
    const double mean_e = detail::sorted_sum(e) / nm;
    const double var = detail::sample_variance(j, mean_j) / nj + detail::sample_variance(e, mean_e) / nm;
    return {mean_j - mean_e, BoundKind::nwj, j.size(), std::sqrt(var)};
}

/// Per-row InfoNCE terms S_ii - log mean_j exp S_ij; each is <= log n.
inline std::vector<double> infonce_row_terms(const Matrix& scores) {
    dimdm::detail::require(scores.rows() == scores.cols(), "InfoNCE needs a square score matrix");
    dimdm::detail::require(scores.rows() >= 2, "InfoNCE needs n >= 2");
    dimdm::detail::require(scores.allFinite(), "critic scores must be finite");
    const Eigen::Index n = scores.rows();
    std::vector<double> terms(static_cast<std::size_t>(n));
    const double log_n = std::log(static_cast<double>(n));
    std::vector<double> row(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = scores(i, j);
        // (S_ii - max) - log(sum) is <= 0 in floating point because the sum
        // contains exp(0) = 1, so adding log n last keeps every term <= log n.
        const double mx = *std::max_element(row.begin(), row.end());
        for (auto& v : row) v = std::exp(v - mx);
        terms[static_cast<std::size_t>(i)] = ((scores(i, i) - mx) - std::log(detail::sorted_sum(row))) + log_n;
    }
    return terms;
}

inline MIEstimate infonce_estimate(const Matrix& scores) {
    auto terms = infonce_row_terms(scores);
    const double n = static_cast<double>(terms.size());
    // the mean cannot exceed the largest term; clamp away the rounding
    const double mean = std::min(detail::shifted_mean(terms), *std::max_element(terms.begin(), terms.end()));
    const double se = std::sqrt(detail::sample_variance(terms, mean) / n);
    return {mean, BoundKind::infonce, terms.size(), se};
}

inline ScoreGradient dv_gradient(const CriticScores& s) {
    detail::check_scores(s);
    ScoreGradient g;
    g.joint = Vector::Constant(s.joint.size(), 1.0 / static_cast<double>(s.joint.size()));
    const double mx = s.marginal.maxCoeff();
    Vector e = (s.marginal.array() - mx).exp();
    g.marginal = -e / e.sum();
    return g;
}

inline ScoreGradient nwj_gradient(const CriticScores& s) {
    detail::check_scores(s);
    ScoreGradient g;
    g.joint = Vector::Constant(s.joint.size(), 1.0 / static_cast<double>(s.joint.size()));
    g.marginal = -(s.marginal.array() - 1.0).exp() / static_cast<double>(s.marginal.size());
    return g;
}

/// d(InfoNCE)/dS = (I - softmax_rows(S)) / n.
inline Matrix infonce_gradient(const Matrix& scores) {
    dimdm::detail::require(scores.rows() == scores.cols() && scores.rows() >= 2, "InfoNCE needs a square matrix, n >= 2");
    const Eigen::Index n = scores.rows();
    Matrix g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = scores.row(i).maxCoeff();
        Eigen::RowVectorXd e = (scores.row(i).array() - mx).exp();
        g.row(i) = -e / e.sum();
        g(i, i) += 1.0;
    }
    return g / static_cast<double>(n);
}

} // namespace dimdm::mi
