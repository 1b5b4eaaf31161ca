#pragma once

// Normality tests: D'Agostino-Pearson K^2, Shapiro-Wilk (Royston's
// approximation, 3 <= n <= 5000), Henze-Zirkler, and their averaged
// application to random one-dimensional projections.

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string_view>
#include <vector>

#include <boost/math/distributions/lognormal.hpp>

#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/metrics/stats.hpp"

namespace dimdm::metrics {

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

enum class UnivariateTest { dagostino_pearson, shapiro_wilk };

inline std::string_view to_string(UnivariateTest t) {
    return t == UnivariateTest::dagostino_pearson ? "dagostino_pearson" : "shapiro_wilk";
}

namespace detail {

inline std::array<double, 3> central_moments(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double mean = 0;
    for (double v : x) mean += v;
    mean /= n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double v : x) {
        const double c = v - mean, c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
    }
    return {m2 / n, m3 / n, m4 / n};
}

inline double poly(const double* c, int n, double x) {
    double r = c[n - 1];
    for (int i = n - 2; i >= 0; --i) r = r * x + c[i];
    return r;
}

/// Half of the Shapiro-Wilk coefficient vector (largest-magnitude first).
inline std::vector<double> shapiro_coefficients(std::size_t n) {
    static const double c1[] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static const double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const std::size_t half = n / 2;
    std::vector<double> a(half);
    if (n == 3) {
        a[0] = std::sqrt(0.5);
        return a;
    }
    const double an = static_cast<double>(n);
    std::vector<double> m(half);
    double summ2 = 0;
    for (std::size_t i = 0; i < half; ++i) {
        m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
        summ2 += m[i] * m[i];
    }
    summ2 *= 2;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, 6, rsn) - m[0] / ssumm2;
    std::size_t first;
    double fac;
    if (n > 5) {
        first = 2;
        const double a2 = -m[1] / ssumm2 + poly(c2, 6, rsn);
        fac = std::sqrt((summ2 - 2 * m[0] * m[0] - 2 * m[1] * m[1]) / (1 - 2 * a1 * a1 - 2 * a2 * a2));
        a[1] = a2;
    } else {
        first = 1;
        fac = std::sqrt((summ2 - 2 * m[0] * m[0]) / (1 - 2 * a1 * a1));
    }
    a[0] = a1;
    for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
    return a;
}

inline const std::vector<double>& cached_shapiro_coefficients(std::size_t n) {
    static std::mutex mu;
    static std::map<std::size_t, std::vector<double>> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, shapiro_coefficients(n)).first;
    return it->second;
}

} // namespace detail

/// Omnibus K^2 = Z(skewness)^2 + Z(kurtosis)^2 with a chi-squared(2) p-value.
inline TestResult dagostino_pearson(const std::vector<double>& x) {
    dimdm::detail::require(x.size() >= 8, "D'Agostino-Pearson test needs n >= 8");
    const double n = static_cast<double>(x.size());
    const auto [m2, m3, m4] = detail::central_moments(x);
    dimdm::detail::require(m2 > 0, "D'Agostino-Pearson test needs non-constant data");

    const double b1 = m3 / std::pow(m2, 1.5);
    double y = b1 * std::sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)));
    const double beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2) * (n + 5) * (n + 7) * (n + 9));
    const double w2 = -1 + std::sqrt(2 * (beta2 - 1));
    const double delta = 1 / std::sqrt(0.5 * std::log(w2));
    const double alpha = std::sqrt(2 / (w2 - 1));
    if (y == 0) y = 1;
    const double zs = delta * std::log(y / alpha + std::sqrt((y / alpha) * (y / alpha) + 1));

    const double b2 = m4 / (m2 * m2);
    const double e = 3.0 * (n - 1) / (n + 1);
    const double varb2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) * (n + 1) * (n + 3) * (n + 5));
    const double xk = (b2 - e) / std::sqrt(varb2);
    const double sqrtbeta1 =
        6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9)) * std::sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)));
    const double a = 6 + 8 / sqrtbeta1 * (2 / sqrtbeta1 + std::sqrt(1 + 4 / (sqrtbeta1 * sqrtbeta1)));
    const double term1 = 1 - 2 / (9 * a);
    const double denom = 1 + xk * std::sqrt(2 / (a - 4));
    const double term2 = (denom < 0 ? -1.0 : 1.0) * std::cbrt((1 - 2 / a) / std::abs(denom));
    const double zk = (term1 - term2) / std::sqrt(2 / (9 * a));

    const double k2 = zs * zs + zk * zk;
    return {k2, std::exp(-0.5 * k2)};
}

/// Shapiro-Wilk W with Royston's normalising transformation for the p-value.
inline TestResult shapiro_wilk(std::vector<double> x) {
    const std::size_t n = x.size();
    dimdm::detail::require(n >= 3 && n <= 5000, "Shapiro-Wilk test needs 3 <= n <= 5000");
    std::sort(x.begin(), x.end());
    const double range = x.back() - x.front();
    dimdm::detail::require(range > 0, "Shapiro-Wilk test needs non-constant data");
    const auto& a = detail::cached_shapiro_coefficients(n);

    double mean = 0;
    for (double v : x) mean += v / range;
    mean /= static_cast<double>(n);
    double num = 0, ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i] / range;
        ss += (xi - mean) * (xi - mean);
        if (i < n / 2) num -= a[i] * xi;
        else if (n - 1 - i < n / 2) num += a[n - 1 - i] * xi;
    }
    double asq = 0;
    for (double v : a) asq += 2 * v * v;
    const double w = std::min(1.0, num * num / (asq * ss));

    if (n == 3) {
        const double p = 6 / std::numbers::pi * (std::asin(std::sqrt(w)) - std::numbers::pi / 3);
        return {w, std::clamp(p, 0.0, 1.0)};
    }
    static const double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
    static const double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
    static const double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
    static const double c6[] = {-0.4803, -0.082676, 0.0030302};
    static const double g[] = {-2.273, 0.459};
    const double an = static_cast<double>(n);
    double w1 = std::log(1 - w);
    double m, s;
    if (n <= 11) {
        const double gamma = detail::poly(g, 2, an);
        if (w1 >= gamma) return {w, 1e-99};
        w1 = -std::log(gamma - w1);
        m = detail::poly(c3, 4, an);
        s = std::exp(detail::poly(c4, 4, an));
    } else {
        const double ln = std::log(an);
        m = detail::poly(c5, 4, ln);
        s = std::exp(detail::poly(c6, 3, ln));
    }
    return {w, std::clamp(normal_sf((w1 - m) / s), 0.0, 1.0)};
}

inline TestResult univariate_test(UnivariateTest t, const std::vector<double>& x) {
    return t == UnivariateTest::dagostino_pearson ? dagostino_pearson(x) : shapiro_wilk(x);
}

/// Henze-Zirkler statistic with the usual smoothing
/// beta = ((n (2d + 1)) / 4)^(1 / (d + 4)) / sqrt(2), maximum-likelihood
/// covariance, and the log-normal approximation of its null distribution.
inline TestResult henze_zirkler(const Matrix& x) {
    const Eigen::Index n = x.rows(), d = x.cols();
    dimdm::detail::require(d >= 1 && n > d, "Henze-Zirkler test needs n > d");
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Matrix c = x.rowwise() - mean;
    const Matrix cov = c.transpose() * c / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const double max_ev = es.eigenvalues().maxCoeff();
    dimdm::detail::require(max_ev > 0 && es.eigenvalues().minCoeff() > 1e-12 * max_ev,
                           "Henze-Zirkler test: sample covariance is singular");
    // whitened data: Mahalanobis distances become Euclidean
    const Matrix wmat = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal();
    const Matrix z = c * wmat;

    const double dd = static_cast<double>(d), nn = static_cast<double>(n);
    const double beta = std::pow(nn * (2 * dd + 1) / 4, 1 / (dd + 4)) / std::sqrt(2.0);
    const double b2 = beta * beta;
    const Eigen::VectorXd sq = z.rowwise().squaredNorm();

    double pair = 0;
    const Eigen::Index block = 256;
    for (Eigen::Index i0 = 0; i0 < n; i0 += block) {
        const Eigen::Index m = std::min(block, n - i0);
        Matrix dist = -2.0 * z.middleRows(i0, m) * z.transpose();
        dist.colwise() += sq.segment(i0, m);
        dist.rowwise() += sq.transpose();
        pair += (-0.5 * b2 * dist.array().max(0.0)).exp().sum();
    }
    double single = 0;
    for (Eigen::Index i = 0; i < n; ++i) single += std::exp(-b2 / (2 * (1 + b2)) * sq(i));
    const double hz = pair / nn - 2 * std::pow(1 + b2, -dd / 2) * single + nn * std::pow(1 + 2 * b2, -dd / 2);

    const double a = 1 + 2 * b2;
    const double w = (1 + b2) * (1 + 3 * b2);
    const double b4 = b2 * b2, b8 = b4 * b4;
    const double mu = 1 - std::pow(a, -dd / 2) * (1 + dd * b2 / a + dd * (dd + 2) * b4 / (2 * a * a));
    const double var = 2 * std::pow(1 + 4 * b2, -dd / 2) +
                       2 * std::pow(a, -dd) * (1 + 2 * dd * b4 / (a * a) + 3 * dd * (dd + 2) * b8 / (4 * std::pow(a, 4))) -
                       4 * std::pow(w, -dd / 2) * (1 + 3 * dd * b4 / (2 * w) + dd * (dd + 2) * b8 / (2 * w * w));
    const double plog_mu = std::log(mu * mu / std::sqrt(var + mu * mu));
    const double plog_sd = std::sqrt(std::log((var + mu * mu) / (mu * mu)));
    const boost::math::lognormal_distribution<double> dist(plog_mu, plog_sd);
    const double p = hz <= 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, hz));
    return {hz, p};
}

/// `count` i.i.d. directions uniform on the unit sphere in R^d, one per row.
inline Matrix random_projectors(int d, int count, Rng& rng) {
    dimdm::detail::require(d >= 1, "random projectors need d >= 1");
    dimdm::detail::require(count >= 1, "random projectors need count >= 1");
    Matrix p(count, d);
    for (int i = 0; i < count; ++i) {
        double norm = 0;
        do {
            for (int j = 0; j < d; ++j) p(i, j) = rng.normal();
            norm = p.row(i).norm();
        } while (norm < 1e-300);
        p.row(i) /= norm;
    }
    return p;
}

struct ProjectionSettings {
    int n_projections = 64;
    int subsample_size = 500;
    int n_bootstrap = 16;
};

namespace detail {

/// Row indices of a subsample drawn without replacement (partial Fisher-Yates).
inline std::vector<Eigen::Index> subsample_rows(Eigen::Index n, Eigen::Index m, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(m));
    return idx;
}

/// Projection x_i . p_k summed over value-sorted products, so that
/// permuting coordinates of both x and p leaves the result bit-identical.
inline double canonical_dot(const Matrix& x, Eigen::Index i, const Matrix& p, Eigen::Index k, std::vector<double>& terms) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) terms[static_cast<std::size_t>(j)] = x(i, j) * p(k, j);
    std::sort(terms.begin(), terms.end());
    double sum = 0;
    for (double t : terms) sum += t;
    return sum;
}

inline void check_projection_settings(Eigen::Index n, const ProjectionSettings& s) {
    dimdm::detail::require(s.n_projections >= 1 && s.n_bootstrap >= 1, "projection and bootstrap counts must be positive");
    dimdm::detail::require(s.subsample_size >= 20, "subsample size must be >= 20");
    dimdm::detail::require(s.subsample_size <= 5000, "subsample size must be <= 5000 (Shapiro-Wilk validity)");
    dimdm::detail::require(n >= s.subsample_size, "need at least subsample_size samples");
}

} // namespace detail

/// Grand mean of univariate p-values over the given projectors and
/// `n_bootstrap` subsamples per projector (drawn from `rng`).
inline double projected_normality(const Matrix& x, const Matrix& projectors, UnivariateTest test,
                                  const ProjectionSettings& s, Rng& rng) {
    detail::check_projection_settings(x.rows(), s);
    dimdm::detail::require(projectors.cols() == x.cols(), "projector dimension differs from the embedding dimension");
    double sum = 0;
    std::vector<double> v(static_cast<std::size_t>(s.subsample_size));
    std::vector<double> terms(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index p = 0; p < projectors.rows(); ++p)
        for (int b = 0; b < s.n_bootstrap; ++b) {
            const auto idx = detail::subsample_rows(x.rows(), s.subsample_size, rng);
            for (std::size_t i = 0; i < idx.size(); ++i) v[i] = detail::canonical_dot(x, idx[i], projectors, p, terms);
            sum += univariate_test(test, v).p_value;
        }
    return sum / static_cast<double>(projectors.rows() * s.n_bootstrap);
}

/// Projectors from rng.fork(0), subsamples from rng.fork(1).
inline double projected_normality(const Matrix& x, UnivariateTest test, const ProjectionSettings& s, Rng& rng) {
    detail::check_projection_settings(x.rows(), s);
    auto proj_rng = rng.fork(0), boot_rng = rng.fork(1);
    const Matrix p = random_projectors(static_cast<int>(x.cols()), s.n_projections, proj_rng);
    return projected_normality(x, p, test, s, boot_rng);
}

inline double projected_normality(const EmbeddingBatch& emb, UnivariateTest test, const ProjectionSettings& s, Rng& rng) {
    return projected_normality(emb.values(), test, s, rng);
}

inline TestResult henze_zirkler(const EmbeddingBatch& emb) { return henze_zirkler(emb.values()); }

/// Henze-Zirkler p-value averaged over `n_bootstrap` subsamples.
inline double bootstrapped_henze_zirkler(const Matrix& x, const ProjectionSettings& s, Rng& rng) {
    detail::check_projection_settings(x.rows(), s);
    double sum = 0;
    Matrix sub(s.subsample_size, x.cols());
    for (int b = 0; b < s.n_bootstrap; ++b) {
        const auto idx = detail::subsample_rows(x.rows(), s.subsample_size, rng);
        for (std::size_t i = 0; i < idx.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
        sum += henze_zirkler(sub).p_value;
    }
    return sum / s.n_bootstrap;
}

} // namespace dimdm::metrics
