#pragma once

// Univariate distribution helpers shared by the audit battery.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "dimdm/core/error.hpp"

namespace dimdm::metrics {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

/// Upper tail of the standard normal.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Kolmogorov limiting survival function Q(l) = 2 sum_k (-1)^(k-1) exp(-2 k^2 l^2).
inline double kolmogorov_sf(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0, sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against U(0, 1), with the
/// small-sample corrected asymptotic p-value (Stephens).
inline KsResult ks_uniform(std::vector<double> u) {
    dimdm::detail::require(!u.empty(), "KS test needs at least one sample");
    std::sort(u.begin(), u.end());
    const double n = static_cast<double>(u.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double f = std::clamp(u[i], 0.0, 1.0);
        d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)};
}

/// Ranks 1..n with ties given their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

struct CorrelationResult {
    double rho = 0.0;
    double p_value = 1.0; // two-sided
};

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// Spearman rank correlation; the p-value uses the t approximation with
/// n - 2 degrees of freedom.
inline CorrelationResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
    dimdm::detail::require(x.size() == y.size(), "spearman: length mismatch");
    dimdm::detail::require(x.size() >= 3, "spearman needs at least three pairs");
    const double rho = pearson(average_ranks(x), average_ranks(y));
    const double df = static_cast<double>(x.size()) - 2.0;
    if (std::abs(rho) >= 1.0) return {rho, 0.0};
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    const boost::math::students_t_distribution<double> dist(df);
    return {rho, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)))};
}

} // namespace dimdm::metrics
