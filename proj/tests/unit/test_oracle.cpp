#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dimdm/core/rng.hpp"
#include "dimdm/oracle/analytic.hpp"
#include "dimdm/oracle/ksg.hpp"

using namespace dimdm;
using namespace dimdm::oracle;
using Catch::Approx;

namespace {

Matrix normals(Rng& rng, Eigen::Index n, Eigen::Index d) {
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
    return m;
}

Matrix uniforms(Rng& rng, Eigen::Index n, Eigen::Index d, double lo, double hi) {
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

Matrix random_spd(Rng& rng, Eigen::Index d) {
    const Matrix a = normals(rng, d, d);
    return a * a.transpose() + 0.1 * Matrix::Identity(d, d);
}

} // namespace

TEST_CASE("gaussian_entropy") {
    CHECK(gaussian_entropy(Vector::Zero(1), Matrix::Identity(1, 1)) == Approx(1.41894).margin(1e-5));
    CHECK(gaussian_entropy(Vector::Zero(2), Matrix::Identity(2, 2)) == Approx(2.83788).margin(1e-5));

    Matrix cov = Matrix::Zero(2, 2);
    cov(0, 0) = 1.0;
    cov(1, 1) = 4.0;
    const double h = gaussian_entropy(Vector::Zero(2), cov);
    CHECK(h == Approx(3.53102).margin(1e-5));

    // Monte-Carlo entropy -E log p(X) on 10^6 draws from the same Gaussian.
    auto rng = make_rng(7);
    const int n = 1000000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = rng.normal(), b = 2.0 * rng.normal();
        acc += std::log(2.0 * std::numbers::pi * 2.0) + 0.5 * (a * a + b * b / 4.0);
    }
    CHECK(std::abs(acc / n - h) < 0.01);
}

TEST_CASE("gaussian_entropy rejects non-PD covariance") {
    Matrix cov(2, 2);
    cov << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(gaussian_entropy(Vector::Zero(2), cov), DomainError);
    cov << 1.0, 0.5, 0.0, 1.0;
    CHECK_THROWS_AS(gaussian_entropy(Vector::Zero(2), cov), DomainError);
}

TEST_CASE("uniform_entropy") {
    CHECK(uniform_entropy(1.0) == 0.0);
    CHECK(uniform_entropy(std::pow(2.0 * 0.25, 1)) == Approx(-0.69315).margin(1e-5));
    CHECK(uniform_entropy(std::pow(1.0 + 2.0 * 0.25, 2)) == Approx(0.81093).margin(1e-5));
    CHECK_THROWS_AS(uniform_entropy(0.0), DomainError);
    CHECK_THROWS_AS(uniform_entropy(-1.0), DomainError);
}

TEST_CASE("gaussian_channel_capacity") {
    CHECK(gaussian_channel_capacity(2, 1.0) == Approx(0.69315).margin(1e-5));
    CHECK(gaussian_channel_capacity(2, 0.1) == Approx(4.61512).margin(1e-5));
    CHECK_THROWS_AS(gaussian_channel_capacity(2, 0.0), DomainError);

    // identity encoder on N(0,1) through unit-variance noise
    auto rng = make_rng(11);
    const Matrix y = normals(rng, 1000000, 1);
    const Matrix z = normals(rng, 1000000, 1);
    CHECK(std::abs(ksg_mi(y, y + z) - 0.34657) < 0.01);
}

TEST_CASE("uniform_channel_capacity") {
    CHECK(uniform_channel_capacity(1, 0.5) == Approx(0.69315).margin(1e-5));
    CHECK(uniform_channel_capacity(2, 0.25) == Approx(2.19722).margin(1e-5));

    // equality case: f(X) uniform on {0, 1}, noise U[-1/2, 1/2]
    auto rng = make_rng(12);
    const Eigen::Index n = 100000;
    Matrix x(n, 1), y(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = static_cast<double>(rng.below(2));
        y(i, 0) = x(i, 0) + rng.uniform(-0.5, 0.5);
    }
    CHECK(std::abs(ksg_mi(x, y) - std::log(2.0)) < 0.02);
}

TEST_CASE("uniform_channel_exact_mi") {
    CHECK(uniform_channel_exact_mi(1, 0.25) == Approx(0.94315).margin(1e-5));
    CHECK(uniform_channel_exact_mi(2, 0.05) == Approx(4.70517).margin(1e-5));
    CHECK_THROWS_AS(uniform_channel_exact_mi(1, 0.5), DomainError);
    CHECK_THROWS_AS(uniform_channel_exact_mi(1, 0.0), DomainError);

    auto rng = make_rng(13);
    const Matrix x = uniforms(rng, 1000000, 1, 0.0, 1.0);
    const Matrix y = x + uniforms(rng, 1000000, 1, -0.25, 0.25);
    CHECK(std::abs(ksg_mi(x, y) - 0.94315) < 0.02);
}

TEST_CASE("min_label_capacity") {
    CHECK(min_label_capacity(10) == Approx(2.30259).margin(1e-5));
    CHECK(min_label_capacity(2) == Approx(0.69315).margin(1e-5));
    CHECK(min_label_capacity(100) == Approx(4.60517).margin(1e-5));
    CHECK_THROWS_AS(min_label_capacity(1), DomainError);
}

TEST_CASE("ksg_mi reference cases") {
    auto rng = make_rng(21);
    const Eigen::Index n = 100000;

    SECTION("independent normals") {
        const Matrix x = normals(rng, n, 1), y = normals(rng, n, 1);
        CHECK(ksg_mi(x, y) < 0.01);
    }
    SECTION("bivariate normal, rho = 0.9") {
        const Matrix a = normals(rng, n, 1), b = normals(rng, n, 1);
        const Matrix y = 0.9 * a + std::sqrt(1.0 - 0.81) * b;
        CHECK(std::abs(ksg_mi(a, y) - gaussian_mi_from_correlation(0.9)) < 0.02);
        CHECK(gaussian_mi_from_correlation(0.9) == Approx(-0.5 * std::log(0.19)).margin(1e-15));
        CHECK(gaussian_mi_from_correlation(0.9) == Approx(0.83037).margin(1e-5));
    }
    SECTION("(Y, Y + Z) with unit variances") {
        const Matrix y = normals(rng, n, 1), z = normals(rng, n, 1);
        CHECK(std::abs(ksg_mi(y, y + z) - gaussian_channel_capacity(1, 1.0)) < 0.02);
    }
    SECTION("n <= k is rejected") {
        const Matrix x = normals(rng, 5, 1);
        CHECK_THROWS_AS(ksg_mi(x, x, 5), DomainError);
    }
}

TEST_CASE("ksg_mi is invariant under monotone coordinate maps") {
    auto rng = make_rng(22);
    const Eigen::Index n = 100000;
    const Matrix x = normals(rng, n, 2);
    const Matrix y = x + 0.7 * normals(rng, n, 2);
    const double base = ksg_mi(x, y);
    Matrix xt = x;
    xt.col(0) = x.col(0).array().exp();
    xt.col(1) = x.col(1).array().cube() + 3.0 * x.col(1).array();
    CHECK(std::abs(ksg_mi(xt, y) - base) < 0.05);
    CHECK(ksg_mi(x, normals(rng, n, 2)) >= 0.0);
}

TEST_CASE("kl_gaussian_vs_standard") {
    CHECK(kl_gaussian_vs_standard(Vector::Zero(3), Matrix::Identity(3, 3)) == 0.0);
    CHECK(kl_gaussian_vs_standard(Vector::Ones(1), Matrix::Identity(1, 1)) == Approx(0.5).margin(1e-15));

    Matrix four(1, 1);
    four(0, 0) = 4.0;
    const double kl = kl_gaussian_vs_standard(Vector::Zero(1), four);
    CHECK(kl == Approx(0.80685).margin(1e-5));
    // numerical integral of p log(p/q) for p = N(0, 4), q = N(0, 1)
    auto integrand = [](double x) {
        const double lp = -0.5 * x * x / 4.0 - 0.5 * std::log(2.0 * std::numbers::pi * 4.0);
        const double lq = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
        return std::exp(lp) * (lp - lq);
    };
    const double quad = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -60.0, 60.0, 15, 1e-13);
    CHECK(kl == Approx(quad).margin(1e-9));

    Matrix bad(1, 1);
    bad(0, 0) = -1.0;
    CHECK_THROWS_AS(kl_gaussian_vs_standard(Vector::Zero(1), bad), DomainError);
}

TEST_CASE("kl_gaussian_vs_standard is positive away from the standard normal") {
    auto rng = make_rng(23);
    for (int t = 0; t < 200; ++t) {
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
        const Vector m = 0.1 * normals(rng, d, 1);
        CHECK(kl_gaussian_vs_standard(m, random_spd(rng, d)) > 0.0);
    }
}

TEST_CASE("capacities decrease in the noise scale and scale linearly in d") {
    auto rng = make_rng(24);
    for (int t = 0; t < 500; ++t) {
        const double s1 = rng.uniform(1e-3, 5.0), s2 = s1 * rng.uniform(1.001, 3.0);
        CHECK(gaussian_channel_capacity(1, s1) > gaussian_channel_capacity(1, s2));
        CHECK(uniform_channel_capacity(1, s1) > uniform_channel_capacity(1, s2));
        const int d = 1 + static_cast<int>(rng.below(16));
        CHECK(gaussian_channel_capacity(d, s1) == Approx(d * gaussian_channel_capacity(1, s1)).epsilon(1e-14));
        CHECK(uniform_channel_capacity(d, s1) == Approx(d * uniform_channel_capacity(1, s1)).epsilon(1e-14));
    }
}

TEST_CASE("exact uniform MI sits below capacity by log(1 + 2 eps) - eps per dimension") {
    auto rng = make_rng(25);
    for (int t = 0; t < 500; ++t) {
        const double eps = rng.uniform(1e-4, 0.4999);
        const int d = 1 + static_cast<int>(rng.below(8));
        const double gap = uniform_channel_capacity(d, eps) - uniform_channel_exact_mi(d, eps);
        CHECK(gap >= 0.0);
        CHECK(gap == Approx(d * (std::log1p(2.0 * eps) - eps)).margin(1e-12));
    }
}
