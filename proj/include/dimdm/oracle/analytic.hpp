#pragma once

// Closed-form entropies, capacities and divergences, all in nats.

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "dimdm/core/error.hpp"
#include "dimdm/core/types.hpp"

namespace dimdm::oracle {

namespace detail {

inline Vector spd_eigenvalues(const Matrix& cov) {
    dimdm::detail::require(cov.rows() == cov.cols() && cov.rows() > 0, "covariance must be a non-empty square matrix");
    dimdm::detail::require(cov.allFinite(), "covariance has non-finite entries");
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    dimdm::detail::require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, "covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
    dimdm::detail::require(eig.info() == Eigen::Success, "eigendecomposition failed");
    dimdm::detail::require(eig.eigenvalues().minCoeff() > 0.0, "covariance is not positive definite");
    return eig.eigenvalues();
}

} // namespace detail

/// Differential entropy of N(mean, cov): 0.5 * log((2 pi e)^d det cov).
inline double gaussian_entropy(const Vector& mean, const Matrix& cov) {
    dimdm::detail::require(mean.size() == cov.rows(), "mean and covariance dimensions differ");
    const Vector lambda = detail::spd_eigenvalues(cov);
    const double d = static_cast<double>(cov.rows());
    return 0.5 * (d * std::log(2.0 * std::numbers::pi * std::numbers::e) + lambda.array().log().sum());
}

/// Entropy of the uniform distribution on a set of Lebesgue measure `measure`.
inline double uniform_entropy(double measure) {
    dimdm::detail::require(measure > 0.0 && std::isfinite(measure), "uniform_entropy needs a positive finite measure");
    return std::log(measure);
}

/// (d/2) log(1 + 1/sigma^2): ceiling of I(f(X'); f(X)+Z) for a
/// moment-normalized encoder with Gaussian noise of std sigma.
inline double gaussian_channel_capacity(int d, double sigma) {
    dimdm::detail::require(d >= 1, "d must be positive");
    dimdm::detail::require(sigma > 0.0 && std::isfinite(sigma), "sigma must be positive");
    return 0.5 * d * std::log1p(1.0 / (sigma * sigma));
}

/// d log(1 + 1/(2 eps)): ceiling for a unit-cube encoder with U[-eps, eps] noise.
inline double uniform_channel_capacity(int d, double epsilon) {
    dimdm::detail::require(d >= 1, "d must be positive");
    dimdm::detail::require(epsilon > 0.0 && std::isfinite(epsilon), "epsilon must be positive");
    return d * std::log1p(1.0 / (2.0 * epsilon));
}

/// d (eps - log 2 eps): exact MI for f(X) ~ U([0,1]^d) through U[-eps, eps] noise.
inline double uniform_channel_exact_mi(int d, double epsilon) {
    dimdm::detail::require(d >= 1, "d must be positive");
    dimdm::detail::require(epsilon > 0.0 && epsilon < 0.5, "uniform_channel_exact_mi needs 0 < epsilon < 1/2");
    return d * (epsilon - std::log(2.0 * epsilon));
}

/// Entropy of a uniform label over num_classes classes.
inline double min_label_capacity(int num_classes) {
    dimdm::detail::require(num_classes >= 2, "min_label_capacity needs at least two classes");
    return std::log(static_cast<double>(num_classes));
}

/// KL( N(mean, cov) || N(0, I) ) = 0.5 (tr cov + |mean|^2 - d - log det cov),
/// evaluated on the spectrum of cov.
inline double kl_gaussian_vs_standard(const Vector& mean, const Matrix& cov) {
    dimdm::detail::require(mean.size() == cov.rows(), "mean and covariance dimensions differ");
    const Vector lambda = detail::spd_eigenvalues(cov);
    // lambda - 1 - log(lambda) >= 0 term by term; summing it this way keeps the
    // identity case at exactly zero.
    double acc = 0.0;
    for (double l : lambda) acc += (l - 1.0) - std::log(l);
    return 0.5 * (acc + mean.squaredNorm());
}

/// MI of a bivariate Gaussian with correlation rho.
inline double gaussian_mi_from_correlation(double rho) {
    dimdm::detail::require(std::abs(rho) < 1.0, "|rho| must be < 1");
    return -0.5 * std::log1p(-rho * rho);
}

} // namespace dimdm::oracle
