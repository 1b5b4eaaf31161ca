#include <catch_amalgamated.hpp>

#include <cmath>

#include "dimdm/core/rng.hpp"
#include "dimdm/nn/sequential.hpp"

using namespace dimdm;
using namespace dimdm::nn;
using MatD = Mat<double>;

namespace {

MatD normals(Rng& rng, Eigen::Index n, Eigen::Index d) {
    MatD m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
    return m;
}

// Worst relative error between back-propagated and central-difference
// gradients of sum(W .* net(x)) with respect to x and every parameter.
double gradient_error(Sequential<double>& net, const MatD& x, Rng& rng) {
    Tape<double> tape;
    const MatD out = net.forward(x, Mode::train, &tape, false);
    const MatD w = normals(rng, out.rows(), out.cols());
    zero_grad(net.parameters());
    const MatD dx = net.backward(tape, w, true);

    auto objective = [&](const MatD& in) { return (w.array() * net.forward(in, Mode::train, nullptr, false).array()).sum(); };
    double worst = 0.0;
    auto compare = [&](double fd, double an) {
        worst = std::max(worst, std::abs(fd - an) / std::max(1e-4, std::abs(fd) + std::abs(an)));
    };
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        MatD a = x, b = x;
        a.data()[k] += h, b.data()[k] -= h;
        compare((objective(a) - objective(b)) / (2 * h), dx.data()[k]);
    }
    for (auto* p : net.parameters())
        for (Eigen::Index k = 0; k < p->value.size(); ++k) {
            const double keep = p->value.data()[k];
            p->value.data()[k] = keep + h;
            const double up = objective(x);
            p->value.data()[k] = keep - h;
            const double down = objective(x);
            p->value.data()[k] = keep;
            compare((up - down) / (2 * h), p->grad.data()[k]);
        }
    return worst;
}

} // namespace

TEST_CASE("dense and activations back-propagate correctly") {
    auto rng = make_rng(1);
    Sequential<double> net;
    net.add(Dense<double>(4, 5, rng)).add(LeakyRelu<double>(0.01)).add(Dense<double>(5, 3, rng)).add(Sigmoid<double>());
    CHECK(gradient_error(net, normals(rng, 6, 4), rng) < 1e-5);
}

TEST_CASE("conv, pooling and batch norm back-propagate correctly") {
    auto rng = make_rng(2);
    const ImageShape in{7, 7, 2};
    Conv2d<double> conv(in, 3, 3, rng);
    MaxPool2d<double> pool(conv.output_shape());
    const ImageShape p = {conv.output_shape().height / 2, conv.output_shape().width / 2, 3};
    Sequential<double> net;
    net.add(conv).add(pool).add(BatchNorm<double>(3, true, 0.9, 1e-5)).add(LeakyRelu<double>(0.01));
    net.add(Dense<double>(p.size(), 2, rng));
    CHECK(gradient_error(net, normals(rng, 4, in.size()), rng) < 1e-5);
}

TEST_CASE("affine-free batch norm back-propagates correctly") {
    auto rng = make_rng(3);
    Sequential<double> net;
    net.add(Dense<double>(3, 2, rng)).add(BatchNorm<double>(2, false, 0.99, 1e-9));
    CHECK(gradient_error(net, normals(rng, 5, 3), rng) < 1e-5);
}

TEST_CASE("conv matches a direct convolution") {
    auto rng = make_rng(4);
    const ImageShape in{5, 4, 2};
    Conv2d<double> conv(in, 3, 3, rng);
    const MatD x = normals(rng, 2, in.size());
    const MatD y = conv.forward(x, nullptr);
    const auto o = conv.output_shape();
    const auto& w = Dense<double>{}.weight(); // unused; keeps the Param type in scope
    (void)w;
    std::vector<Param<double>*> ps;
    conv.collect(ps);
    for (Eigen::Index n = 0; n < 2; ++n)
        for (int oy = 0; oy < o.height; ++oy)
            for (int ox = 0; ox < o.width; ++ox)
                for (int co = 0; co < 3; ++co) {
                    double acc = ps[1]->value(0, co);
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx)
                            for (int c = 0; c < 2; ++c)
                                acc += ps[0]->value(co, (ky * 3 + kx) * 2 + c) *
                                       x(n, ((oy + ky) * in.width + (ox + kx)) * in.channels + c);
                    CHECK(y(n, (oy * o.width + ox) * 3 + co) == Catch::Approx(acc).margin(1e-12));
                }
}

TEST_CASE("max pool picks the window maximum and floors odd sizes") {
    const ImageShape in{3, 5, 1};
    MaxPool2d<double> pool(in);
    MatD x(1, 15);
    for (int i = 0; i < 15; ++i) x(0, i) = static_cast<double>((i * 7) % 15);
    const MatD y = pool.forward(x, nullptr);
    REQUIRE(y.cols() == 2);
    CHECK(y(0, 0) == std::max({x(0, 0), x(0, 1), x(0, 5), x(0, 6)}));
    CHECK(y(0, 1) == std::max({x(0, 2), x(0, 3), x(0, 7), x(0, 8)}));
}

TEST_CASE("batch norm: exact batch moments in train mode, running moments in eval mode") {
    auto rng = make_rng(5);
    BatchNorm<double> bn(3, false, 0.99, 1e-9);
    MatD x = 3.0 * normals(rng, 64, 3);
    x.col(1).array() += 5.0;
    const MatD y = bn.forward(x, Mode::train, nullptr, true);
    for (Eigen::Index c = 0; c < 3; ++c) {
        const double mean = y.col(c).mean();
        const double var = (y.col(c).array() - mean).square().mean();
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
    CHECK(bn.running_mean()(1) == Catch::Approx(0.01 * x.col(1).mean()).margin(1e-12));
    CHECK_THROWS_AS(bn.forward(normals(rng, 1, 3), Mode::train, nullptr, true), DomainError);
    const MatD e = bn.forward(normals(rng, 1, 3), Mode::eval, nullptr, false);
    CHECK(e.allFinite());
}

TEST_CASE("adam: zero learning rate leaves parameters bit-exact") {
    auto rng = make_rng(6);
    Dense<double> layer(3, 2, rng);
    std::vector<Param<double>*> ps;
    layer.collect(ps);
    const MatD before = ps[0]->value;
    ps[0]->grad = normals(rng, 2, 3);
    Adam<double> opt(0.0);
    opt.step(ps);
    CHECK((ps[0]->value.array() == before.array()).all());
}

TEST_CASE("adam: first step moves every coordinate by about lr against the gradient") {
    auto rng = make_rng(7);
    Param<double> p("p", 1, 4);
    p.grad << 0.5, -2.0, 1e-3, -7.0;
    Adam<double> opt(1e-2);
    opt.step({&p});
    for (int i = 0; i < 4; ++i) CHECK(p.value(0, i) == Catch::Approx(-1e-2 * (p.grad(0, i) > 0 ? 1 : -1)).epsilon(1e-4));
}
