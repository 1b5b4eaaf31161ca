#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dimdm/core/rng.hpp"
#include "dimdm/mi/critics.hpp"
#include "dimdm/mi/estimators.hpp"
#include "dimdm/mi/pairing.hpp"
#include "dimdm/oracle/analytic.hpp"

using namespace dimdm;
using namespace dimdm::mi;
using Catch::Approx;
using MatD = nn::Mat<double>;

namespace {

MatD normals(Rng& rng, Eigen::Index n, Eigen::Index d) {
    MatD m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
    return m;
}

// x = Y, y = Y + sigma * Z with Y, Z standard normal.
struct Channel {
    MatD x, y;
};

Channel gaussian_channel(Rng& rng, Eigen::Index n, Eigen::Index d, double sigma) {
    Channel c{normals(rng, n, d), {}};
    c.y = c.x + sigma * normals(rng, n, d);
    return c;
}

double pmi_offset(Eigen::Index d, double sigma) { return oracle::gaussian_channel_capacity(static_cast<int>(d), sigma); }

CriticScores shifted(CriticScores s, double shift) {
    s.joint.array() += shift;
    s.marginal.array() += shift;
    return s;
}

std::vector<double> vec(std::initializer_list<double> v) { return v; }

} // namespace

TEST_CASE("closed_form_gaussian_critic examples") {
    const auto z = vec({0.0, 0.0});
    for (double s : {0.1, 1.0, 3.0}) CHECK(closed_form_gaussian_critic(z, z, s) == 0.0);
    CHECK(closed_form_gaussian_critic(vec({1.0}), vec({1.0}), 1.0) == Approx(0.25).margin(1e-15));
    CHECK(closed_form_gaussian_critic(vec({1.0}), vec({0.0}), 1.0) == Approx(-0.5).margin(1e-15));
    CHECK_THROWS_AS(closed_form_gaussian_critic(vec({1.0}), vec({1.0, 2.0}), 1.0), DomainError);
    CHECK_THROWS_AS(closed_form_gaussian_critic_inner(vec({1.0}), vec({1.0, 2.0}), 1.0), DomainError);
}

TEST_CASE("closed_form_gaussian_critic: both algebraic forms agree") {
    auto rng = make_rng(1);
    for (int t = 0; t < 10000; ++t) {
        const std::size_t d = 1 + rng.below(6);
        std::vector<double> x(d), y(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = 2.0 * rng.normal(), y[i] = 2.0 * rng.normal();
        const double s = rng.uniform(0.1, 3.0);
        REQUIRE(std::abs(closed_form_gaussian_critic(x, y, s) - closed_form_gaussian_critic_inner(x, y, s)) < 1e-9);
    }
}

TEST_CASE("closed-form critic matrix and pair scores match the scalar form") {
    auto rng = make_rng(2);
    const auto ch = gaussian_channel(rng, 7, 3, 0.4);
    ClosedFormGaussianCritic<double> critic(0.4);
    const Matrix s = critic.score_matrix(ch.x, ch.y);
    for (Eigen::Index i = 0; i < 7; ++i)
        for (Eigen::Index j = 0; j < 7; ++j) {
            const Vector xi = ch.x.row(i).transpose(), yj = ch.y.row(j).transpose();
            CHECK(s(i, j) == Approx(closed_form_gaussian_critic(std::span(xi.data(), 3), std::span(yj.data(), 3), 0.4)).margin(1e-12));
        }
    const auto p = marginal_pairing(7, rng);
    const auto ps = critic.pair_scores(ch.x, ch.y, p);
    for (Eigen::Index i = 0; i < 7; ++i) {
        CHECK(ps.joint(i) == Approx(s(i, i)).margin(1e-12));
        CHECK(ps.marginal(i) == Approx(s(i, static_cast<Eigen::Index>(p.perm[static_cast<std::size_t>(i)]))).margin(1e-12));
    }
}

TEST_CASE("mlp critic: zero parameters give a zero score") {
    auto rng = make_rng(3);
    MlpCritic<double> critic(2, 2, CriticSpec{CriticKind::joint_mlp, 16, 2}, rng);
    for (auto* p : critic.parameters()) p->value.setZero();
    CHECK(critic.score(vec({0.3, -1.0}), vec({2.0, 5.0})) == 0.0);
}

TEST_CASE("mlp critic: seeded parameters give reproducible scores") {
    auto r1 = make_rng(4), r2 = make_rng(4);
    MlpCritic<double> a(2, 2, CriticSpec{}, r1), b(2, 2, CriticSpec{}, r2);
    const auto x = vec({0.1, 0.2}), y = vec({-0.3, 0.4});
    CHECK(a.score(x, y) == b.score(x, y));
    CHECK_THROWS_AS(a.score(vec({0.1}), y), DomainError);
}

TEST_CASE("mlp critic: parameter gradient matches central differences") {
    auto rng = make_rng(5);
    MlpCritic<double> critic(2, 2, CriticSpec{CriticKind::joint_mlp, 8, 2}, rng);
    MatD x(1, 2), y(1, 2);
    x << 0.3, -0.7;
    y << 1.1, 0.2;
    // single positive pair: joint gradient 1, marginal 0 on a trivial pairing of two copies
    MatD x2(2, 2), y2(2, 2);
    x2 << x, x;
    y2 << y, y;
    const Pairing p{{1, 0}};
    ScoreGradient g{Vector::Zero(2), Vector::Zero(2)};
    g.joint(0) = 1.0;
    for (auto* q : critic.parameters()) q->grad.setZero();
    critic.backward_pairs(x2, y2, p, g);

    const auto xs = vec({0.3, -0.7}), ys = vec({1.1, 0.2});
    double worst = 0.0;
    for (auto* q : critic.parameters())
        for (Eigen::Index k = 0; k < q->value.size(); ++k) {
            const double keep = q->value.data()[k];
            q->value.data()[k] = keep + 1e-5;
            const double up = critic.score(xs, ys);
            q->value.data()[k] = keep - 1e-5;
            const double down = critic.score(xs, ys);
            q->value.data()[k] = keep;
            const double fd = (up - down) / 2e-5;
            const double an = q->grad.data()[k];
            worst = std::max(worst, std::abs(fd - an) / std::max(1e-3, std::abs(fd) + std::abs(an)));
        }
    CHECK(worst < 1e-4);
}

namespace {

// Checks d/d(x, y, params) of sum(G .* S) against central differences.
template <typename C>
void check_matrix_backward(C& critic, const MatD& x, const MatD& y, Rng& rng) {
    const Matrix g = normals(rng, x.rows(), y.rows());
    for (auto* q : critic.parameters()) q->grad.setZero();
    const auto grads = critic.backward_matrix(x, y, g);
    auto objective = [&](const MatD& a, const MatD& b) { return (g.array() * critic.score_matrix(a, b).array()).sum(); };
    double worst = 0.0;
    auto compare = [&](double fd, double an) {
        worst = std::max(worst, std::abs(fd - an) / std::max(1e-3, std::abs(fd) + std::abs(an)));
    };
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        MatD a = x, b = x;
        a.data()[k] += h, b.data()[k] -= h;
        compare((objective(a, y) - objective(b, y)) / (2 * h), grads.dx.data()[k]);
    }
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        MatD a = y, b = y;
        a.data()[k] += h, b.data()[k] -= h;
        compare((objective(x, a) - objective(x, b)) / (2 * h), grads.dy.data()[k]);
    }
    for (auto* q : critic.parameters())
        for (Eigen::Index k = 0; k < q->value.size(); ++k) {
            const double keep = q->value.data()[k];
            q->value.data()[k] = keep + h;
            const double up = objective(x, y);
            q->value.data()[k] = keep - h;
            const double down = objective(x, y);
            q->value.data()[k] = keep;
            compare((up - down) / (2 * h), q->grad.data()[k]);
        }
    CHECK(worst < 1e-4);
}

template <typename C>
void check_pair_backward(C& critic, const MatD& x, const MatD& y, Rng& rng) {
    const auto p = marginal_pairing(static_cast<std::size_t>(x.rows()), rng);
    ScoreGradient g{normals(rng, x.rows(), 1).col(0), normals(rng, x.rows(), 1).col(0)};
    for (auto* q : critic.parameters()) q->grad.setZero();
    const auto grads = critic.backward_pairs(x, y, p, g);
    auto objective = [&](const MatD& a, const MatD& b) {
        const auto s = critic.pair_scores(a, b, p);
        return g.joint.dot(s.joint) + g.marginal.dot(s.marginal);
    };
    double worst = 0.0;
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        MatD a = x, b = x;
        a.data()[k] += h, b.data()[k] -= h;
        const double fd = (objective(a, y) - objective(b, y)) / (2 * h);
        worst = std::max(worst, std::abs(fd - grads.dx.data()[k]) / std::max(1e-3, std::abs(fd) + std::abs(grads.dx.data()[k])));
    }
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        MatD a = y, b = y;
        a.data()[k] += h, b.data()[k] -= h;
        const double fd = (objective(x, a) - objective(x, b)) / (2 * h);
        worst = std::max(worst, std::abs(fd - grads.dy.data()[k]) / std::max(1e-3, std::abs(fd) + std::abs(grads.dy.data()[k])));
    }
    for (auto* q : critic.parameters())
        for (Eigen::Index k = 0; k < q->value.size(); ++k) {
            const double keep = q->value.data()[k];
            q->value.data()[k] = keep + h;
            const double up = objective(x, y);
            q->value.data()[k] = keep - h;
            const double down = objective(x, y);
            q->value.data()[k] = keep;
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(fd - q->grad.data()[k]) / std::max(1e-3, std::abs(fd) + std::abs(q->grad.data()[k])));
        }
    CHECK(worst < 1e-4);
}

} // namespace

TEST_CASE("critic backward passes match central differences") {
    auto rng = make_rng(6);
    const MatD x = normals(rng, 5, 3), y = normals(rng, 5, 3);
    SECTION("closed form") {
        ClosedFormGaussianCritic<double> c(0.7);
        check_matrix_backward(c, x, y, rng);
        check_pair_backward(c, x, y, rng);
    }
    SECTION("joint mlp") {
        MlpCritic<double> c(3, 3, CriticSpec{CriticKind::joint_mlp, 6, 2}, rng);
        check_matrix_backward(c, x, y, rng);
        check_pair_backward(c, x, y, rng);
    }
    SECTION("separable") {
        SeparableCritic<double> c(3, 3, CriticSpec{CriticKind::separable, 6, 1}, rng);
        check_matrix_backward(c, x, y, rng);
        check_pair_backward(c, x, y, rng);
    }
}

TEST_CASE("mlp critic score matrix agrees with single-pair scores") {
    auto rng = make_rng(7);
    MlpCritic<double> c(2, 2, CriticSpec{CriticKind::joint_mlp, 5, 3}, rng);
    const MatD x = normals(rng, 4, 2), y = normals(rng, 6, 2);
    const Matrix s = c.score_matrix(x, y);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 6; ++j) {
            const std::vector<double> a{x(i, 0), x(i, 1)}, b{y(j, 0), y(j, 1)};
            CHECK(s(i, j) == Approx(c.score(a, b)).margin(1e-12));
        }
}

TEST_CASE("separable critic with identity heads is the dot product") {
    auto c = SeparableCritic<double>::identity(2);
    CHECK(c.score(vec({1.0, 0.0}), vec({1.0, 0.0})) == 1.0);
    CHECK(c.score(vec({1.0, 0.0}), vec({0.0, 3.0})) == 0.0);
}

TEST_CASE("separable critic is linear in the projected query") {
    auto rng = make_rng(8);
    SeparableCritic<double> c(3, 3, CriticSpec{CriticKind::separable, 4, 2}, rng);
    for (int t = 0; t < 10; ++t) {
        const MatD q1 = normals(rng, 1, 3), q2 = normals(rng, 1, 3), k = normals(rng, 1, 3);
        const MatD p1 = c.project_q(q1), p2 = c.project_q(q2), pk = c.project_k(k);
        const double a = rng.normal(), b = rng.normal();
        CHECK(c.score_matrix(q1, k)(0, 0) == Approx(p1.row(0).dot(pk.row(0))).margin(1e-12));
        const MatD mix = a * p1 + b * p2;
        CHECK(mix.row(0).dot(pk.row(0)) == Approx(a * c.score_matrix(q1, k)(0, 0) + b * c.score_matrix(q2, k)(0, 0)).margin(1e-10));
    }
}

TEST_CASE("separable critic rejects heads of different output width") {
    auto rng = make_rng(9);
    nn::Sequential<double> phi, psi;
    phi.add(nn::Dense<double>(2, 3, rng));
    psi.add(nn::Dense<double>(2, 4, rng));
    CHECK_THROWS_AS(SeparableCritic<double>(phi, psi, 2, 2), DomainError);
}

TEST_CASE("dv_estimate") {
    SECTION("constant critic gives exactly zero") {
        for (double c : {-3.7, 0.0, 0.1, 12.5}) {
            CriticScores s{Vector::Constant(101, c), Vector::Constant(101, c)};
            CHECK(dv_estimate(s).value == 0.0);
        }
    }
    SECTION("closed-form critic on the d=2, sigma=1 channel") {
        auto rng = make_rng(10);
        const auto ch = gaussian_channel(rng, 100000, 2, 1.0);
        ClosedFormGaussianCritic<double> c(1.0);
        const auto est = dv_estimate(c.pair_scores(ch.x, ch.y, marginal_pairing(100000, rng)));
        CHECK(std::abs(est.value - 0.693) < 0.02);
        CHECK(est.bound == BoundKind::dv);
        CHECK(est.n == 100000);
        CHECK(est.stderr_nats > 0.0);
    }
    SECTION("independent pairs stay near zero") {
        auto rng = make_rng(11);
        const MatD x = normals(rng, 100000, 2), y = normals(rng, 100000, 2);
        ClosedFormGaussianCritic<double> c(1.0);
        CHECK(dv_estimate(c.pair_scores(x, y, marginal_pairing(100000, rng))).value <= 0.02);
    }
    SECTION("empty input is rejected") {
        CHECK_THROWS_AS(dv_estimate(CriticScores{Vector(0), Vector::Ones(3)}), DomainError);
    }
}

TEST_CASE("nwj_estimate") {
    SECTION("constant critic 1 gives exactly zero") {
        CHECK(nwj_estimate(CriticScores{Vector::Ones(50), Vector::Ones(50)}).value == 0.0);
    }
    SECTION("shifted PMI critic on the d=1, sigma=1 channel") {
        auto rng = make_rng(12);
        const auto ch = gaussian_channel(rng, 100000, 1, 1.0);
        ClosedFormGaussianCritic<double> c(1.0);
        const auto pmi = shifted(c.pair_scores(ch.x, ch.y, marginal_pairing(100000, rng)), pmi_offset(1, 1.0));
        const double tight = nwj_estimate(shifted(pmi, 1.0)).value;
        const double loose = nwj_estimate(pmi).value;
        CHECK(std::abs(tight - 0.347) < 0.02);
        CHECK(loose < tight);
        // I + alpha - e^(alpha - 1) at alpha = 0
        CHECK(std::abs((tight - loose) - std::exp(-1.0)) < 0.02);
    }
    SECTION("empty input is rejected") {
        CHECK_THROWS_AS(nwj_estimate(CriticScores{Vector::Ones(2), Vector(0)}), DomainError);
    }
}

TEST_CASE("DV is shift invariant while NWJ peaks at shift 1") {
    auto rng = make_rng(13);
    const auto ch = gaussian_channel(rng, 100000, 1, 1.0);
    ClosedFormGaussianCritic<double> c(1.0);
    const auto pmi = shifted(c.pair_scores(ch.x, ch.y, marginal_pairing(100000, rng)), pmi_offset(1, 1.0));
    const double capacity = oracle::gaussian_channel_capacity(1, 1.0);
    double best_alpha = -1, best = -1e9;
    for (double alpha : {0.0, 1.0, 2.0}) {
        const auto s = shifted(pmi, alpha);
        CHECK(std::abs(dv_estimate(s).value - capacity) < 0.02);
        const double nwj = nwj_estimate(s).value;
        CHECK(std::abs(nwj - (capacity + alpha - std::exp(alpha - 1.0))) < 0.02);
        if (nwj > best) best = nwj, best_alpha = alpha;
    }
    CHECK(best_alpha == 1.0);
}

TEST_CASE("infonce_estimate") {
    SECTION("equal scores give exactly zero") {
        CHECK(infonce_estimate(Matrix::Constant(9, 9, 2.5)).value == 0.0);
    }
    SECTION("dominant diagonal saturates at log n") {
        Matrix s = Matrix::Zero(8, 8);
        s.diagonal().setConstant(100.0);
        const double v = infonce_estimate(s).value;
        CHECK(v <= std::log(8.0));
        CHECK(std::log(8.0) - v < 1e-3);
    }
    SECTION("closed-form critic on the d=2, sigma=1 channel, n=1024") {
        auto rng = make_rng(14);
        const auto ch = gaussian_channel(rng, 1024, 2, 1.0);
        ClosedFormGaussianCritic<double> c(1.0);
        const auto est = infonce_estimate(c.score_matrix(ch.x, ch.y));
        CHECK(std::abs(est.value - 0.693) < 0.03);
        CHECK(est.value < std::log(1024.0));
    }
    SECTION("non-square input is rejected") {
        CHECK_THROWS_AS(infonce_estimate(Matrix::Zero(3, 4)), DomainError);
        CHECK_THROWS_AS(infonce_estimate(Matrix::Zero(1, 1)), DomainError);
    }
}

TEST_CASE("infonce never exceeds log n") {
    auto rng = make_rng(15);
    for (int t = 0; t < 300; ++t) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(40));
        const double scale = std::pow(10.0, rng.uniform(-2.0, 3.0));
        const Matrix s = scale * normals(rng, n, n);
        CHECK(infonce_estimate(s).value <= std::log(static_cast<double>(n)));
        for (double v : infonce_row_terms(s)) CHECK(v <= std::log(static_cast<double>(n)));
    }
}

TEST_CASE("estimators are exactly permutation invariant") {
    auto rng = make_rng(16);
    const Eigen::Index n = 257;
    const CriticScores s{normals(rng, n, 1).col(0), normals(rng, n, 1).col(0)};
    const Matrix m = normals(rng, n, n);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CriticScores ps{Vector(n), Vector(n)};
    Matrix pm(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        ps.joint(i) = s.joint(perm[static_cast<std::size_t>(i)]);
        ps.marginal(i) = s.marginal(perm[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < n; ++j) pm(i, j) = m(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    CHECK(dv_estimate(s).value == dv_estimate(ps).value);
    CHECK(nwj_estimate(s).value == nwj_estimate(ps).value);
    CHECK(infonce_estimate(m).value == infonce_estimate(pm).value);
}

TEST_CASE("estimates at the optimal critic converge with n") {
    double err_small = 0.0, err_large = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        for (Eigen::Index n : {Eigen::Index{1000}, Eigen::Index{100000}}) {
            auto rng = make_rng(100 + seed);
            const auto ch = gaussian_channel(rng, n, 2, 1.0);
            ClosedFormGaussianCritic<double> c(1.0);
            const double v = dv_estimate(c.pair_scores(ch.x, ch.y, marginal_pairing(static_cast<std::size_t>(n), rng))).value;
            (n == 1000 ? err_small : err_large) += std::abs(v - oracle::gaussian_channel_capacity(2, 1.0)) / 5.0;
        }
    }
    CHECK(err_large < err_small);
}

TEST_CASE("bound gradients match central differences") {
    auto rng = make_rng(17);
    const Eigen::Index n = 6;
    const CriticScores s{normals(rng, n, 1).col(0), normals(rng, n, 1).col(0)};
    const double h = 1e-6;
    for (int which = 0; which < 2; ++which) {
        auto f = [&](const CriticScores& t) { return which == 0 ? dv_estimate(t).value : nwj_estimate(t).value; };
        const auto g = which == 0 ? dv_gradient(s) : nwj_gradient(s);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto a = s, b = s;
            a.joint(i) += h, b.joint(i) -= h;
            CHECK(g.joint(i) == Approx((f(a) - f(b)) / (2 * h)).margin(1e-7));
            a = s, b = s;
            a.marginal(i) += h, b.marginal(i) -= h;
            CHECK(g.marginal(i) == Approx((f(a) - f(b)) / (2 * h)).margin(1e-7));
        }
    }
    const Matrix m = normals(rng, n, n);
    const Matrix g = infonce_gradient(m);
    for (Eigen::Index k = 0; k < m.size(); ++k) {
        Matrix a = m, b = m;
        a.data()[k] += h, b.data()[k] -= h;
        CHECK(g.data()[k] == Approx((infonce_estimate(a).value - infonce_estimate(b).value) / (2 * h)).margin(1e-7));
    }
}

TEST_CASE("marginal_pairing") {
    auto rng = make_rng(18);
    SECTION("n = 2 is the swap") {
        const auto p = marginal_pairing(2, rng);
        CHECK(p.perm == std::vector<std::size_t>{1, 0});
    }
    SECTION("n = 1000 has no fixed point") {
        const auto p = marginal_pairing(1000, rng);
        auto sorted = p.perm;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < 1000; ++i) {
            REQUIRE(p.perm[i] != i);
            REQUIRE(sorted[i] == i);
        }
    }
    SECTION("two seeds give distant permutations") {
        auto a = make_rng(1), b = make_rng(2);
        const auto pa = marginal_pairing(1000, a), pb = marginal_pairing(1000, b);
        int hamming = 0;
        for (std::size_t i = 0; i < 1000; ++i) hamming += pa.perm[i] != pb.perm[i];
        CHECK(hamming > 900);
    }
    SECTION("n < 2 and mismatched rows are rejected") {
        CHECK_THROWS_AS(marginal_pairing(1, rng), DomainError);
        CHECK_THROWS_AS(marginal_pairing(Matrix::Zero(3, 2), Matrix::Zero(4, 2), rng), DomainError);
    }
}
