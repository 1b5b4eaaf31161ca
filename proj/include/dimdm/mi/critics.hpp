#pragma once

#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/mi/estimators.hpp"
#include "dimdm/mi/pairing.hpp"
#include "dimdm/nn/sequential.hpp"

namespace dimdm::mi {

using nn::Mat;

/// Closed-form critic of the Gaussian channel, difference form:
///   T(x, y) = |y|^2 / (2 (1 + s^2)) - |y - x|^2 / (2 s^2)
/// It equals PMI(x, y) - (d/2) log(1 + 1/s^2) for Y ~ N(0, I), Z ~ N(0, s^2 I).
inline double closed_form_gaussian_critic(std::span<const double> x, std::span<const double> y, double sigma) {
    dimdm::detail::require(x.size() == y.size(), "closed-form critic: dimension mismatch");
    dimdm::detail::require(sigma > 0.0, "closed-form critic: sigma must be positive");
    const double s2 = sigma * sigma;
    double yy = 0.0, dd = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        yy += y[i] * y[i];
        dd += (y[i] - x[i]) * (y[i] - x[i]);
    }
    return yy / (2.0 * (1.0 + s2)) - dd / (2.0 * s2);
}

/// Same critic in inner-product form:
///   T(x, y) = (<x, y> - (|x|^2 + |y|^2 / (1 + s^2)) / 2) / s^2
inline double closed_form_gaussian_critic_inner(std::span<const double> x, std::span<const double> y, double sigma) {
    dimdm::detail::require(x.size() == y.size(), "closed-form critic: dimension mismatch");
    dimdm::detail::require(sigma > 0.0, "closed-form critic: sigma must be positive");
    const double s2 = sigma * sigma;
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xy += x[i] * y[i];
        xx += x[i] * x[i];
        yy += y[i] * y[i];
    }
    return (xy - 0.5 * (xx + yy / (1.0 + s2))) / s2;
}

/// Input gradients of a critic evaluated on a batch.
template <typename S>
struct CriticInputGrad {
    Mat<S> dx;
    Mat<S> dy;
};

namespace detail {

template <typename S>
CriticScores gather_pairs(const Matrix& joint_and_marginal, Eigen::Index n) {
    CriticScores s;
    s.joint = joint_and_marginal.col(0).head(n);
    s.marginal = joint_and_marginal.col(0).tail(n);
    return s;
}

/// Stacks [x_i, y_i] and [x_i, y_perm(i)] rows: 2n x (dx + dy).
template <typename S>
Mat<S> pair_inputs(const Mat<S>& x, const Mat<S>& y, const Pairing& pairing) {
    const Eigen::Index n = x.rows();
    dimdm::detail::require(y.rows() == n && static_cast<Eigen::Index>(pairing.perm.size()) == n, "pair inputs: size mismatch");
    Mat<S> z(2 * n, x.cols() + y.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        z.row(i) << x.row(i), y.row(i);
        z.row(n + i) << x.row(i), y.row(static_cast<Eigen::Index>(pairing.perm[static_cast<std::size_t>(i)]));
    }
    return z;
}

template <typename S>
CriticInputGrad<S> split_pair_grad(const Mat<S>& dz, Eigen::Index dx_cols, const Pairing& pairing) {
    const Eigen::Index n = dz.rows() / 2;
    const Eigen::Index dy_cols = dz.cols() - dx_cols;
    CriticInputGrad<S> g{Mat<S>::Zero(n, dx_cols), Mat<S>::Zero(n, dy_cols)};
    for (Eigen::Index i = 0; i < n; ++i) {
        g.dx.row(i) += dz.row(i).head(dx_cols) + dz.row(n + i).head(dx_cols);
        g.dy.row(i) += dz.row(i).tail(dy_cols);
        g.dy.row(static_cast<Eigen::Index>(pairing.perm[static_cast<std::size_t>(i)])) += dz.row(n + i).tail(dy_cols);
    }
    return g;
}

template <typename S>
Mat<S> pair_score_grad(const ScoreGradient& g) {
    const Eigen::Index n = g.joint.size();
    Mat<S> out(2 * n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        out(i, 0) = static_cast<S>(g.joint(i));
        out(n + i, 0) = static_cast<S>(g.marginal(i));
    }
    return out;
}

} // namespace detail

/// Parameter-free critic T*(x, y) of the Gaussian channel with noise std sigma.
template <typename S>
class ClosedFormGaussianCritic {
public:
    explicit ClosedFormGaussianCritic(double sigma) : sigma_(sigma) {
        dimdm::detail::require(sigma > 0.0, "closed-form critic: sigma must be positive");
    }

    double sigma() const { return sigma_; }

    /// S_ij = T(x_i, y_j).
    Matrix score_matrix(const Mat<S>& x, const Mat<S>& y) const {
        dimdm::detail::require(x.cols() == y.cols(), "closed-form critic: dimension mismatch");
        const Matrix xd = x.template cast<double>();
        const Matrix yd = y.template cast<double>();
        const double s2 = sigma_ * sigma_;
        Matrix s = xd * yd.transpose();
        s.colwise() -= 0.5 * xd.rowwise().squaredNorm();
        s.rowwise() -= (0.5 / (1.0 + s2)) * yd.rowwise().squaredNorm().transpose();
        return s / s2;
    }

    CriticScores pair_scores(const Mat<S>& x, const Mat<S>& y, const Pairing& pairing) const {
        const Eigen::Index n = x.rows();
        CriticScores out{Vector(n), Vector(n)};
        std::vector<double> a(static_cast<std::size_t>(x.cols())), b(a.size()), c(a.size());
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto j = static_cast<Eigen::Index>(pairing.perm[static_cast<std::size_t>(i)]);
            for (Eigen::Index k = 0; k < x.cols(); ++k) {
                a[static_cast<std::size_t>(k)] = x(i, k);
                b[static_cast<std::size_t>(k)] = y(i, k);
                c[static_cast<std::size_t>(k)] = y(j, k);
            }
            out.joint(i) = closed_form_gaussian_critic_inner(a, b, sigma_);
            out.marginal(i) = closed_form_gaussian_critic_inner(a, c, sigma_);
        }
        return out;
    }

    /// Given G = d(bound)/dS, returns d(bound)/dx and d(bound)/dy.
    CriticInputGrad<S> backward_matrix(const Mat<S>& x, const Mat<S>& y, const Matrix& g) const {
        const Matrix xd = x.template cast<double>();
        const Matrix yd = y.template cast<double>();
        const double s2 = sigma_ * sigma_;
        Matrix dx = g * yd;
        dx -= g.rowwise().sum().asDiagonal() * xd;
        Matrix dy = g.transpose() * xd;
        dy -= (g.colwise().sum().transpose() / (1.0 + s2)).asDiagonal() * yd;
        return {(dx / s2).template cast<S>(), (dy / s2).template cast<S>()};
    }

    CriticInputGrad<S> backward_pairs(const Mat<S>& x, const Mat<S>& y, const Pairing& pairing,
                                      const ScoreGradient& g) const {
        const Eigen::Index n = x.rows();
        const double s2 = sigma_ * sigma_;
        Matrix dx = Matrix::Zero(n, x.cols()), dy = Matrix::Zero(n, y.cols());
        auto add = [&](Eigen::Index i, Eigen::Index j, double w) {
            const Eigen::RowVectorXd xi = x.row(i).template cast<double>();
            const Eigen::RowVectorXd yj = y.row(j).template cast<double>();
            dx.row(i) += w * (yj - xi) / s2;
            dy.row(j) += w * (xi - yj / (1.0 + s2)) / s2;
        };
        for (Eigen::Index i = 0; i < n; ++i) {
            add(i, i, g.joint(i));
            add(i, static_cast<Eigen::Index>(pairing.perm[static_cast<std::size_t>(i)]), g.marginal(i));
        }
        return {dx.template cast<S>(), dy.template cast<S>()};
    }

    std::vector<nn::Param<S>*> parameters() { return {}; }

private:
    double sigma_;
};

/// Joint critic T(x, y) = MLP([x; y]): Dense(dx+dy, w), LeakyReLU, then
/// (depth-1) x [Dense(w, w), LeakyReLU], then Dense(w, 1).
template <typename S>
class MlpCritic {
public:
    MlpCritic() = default;
    MlpCritic(Eigen::Index dx, Eigen::Index dy, const CriticSpec& spec, Rng& rng) : dx_(dx), dy_(dy) {
        dimdm::detail::require(spec.hidden_width >= 1 && spec.depth >= 1, "mlp critic: invalid spec");
        first_ = nn::Dense<S>(dx + dy, spec.hidden_width, rng, "critic.0");
        rest_.add(nn::LeakyRelu<S>(0.01));
        for (int l = 1; l < spec.depth; ++l) {
            rest_.add(nn::Dense<S>(spec.hidden_width, spec.hidden_width, rng, "critic." + std::to_string(l)));
            rest_.add(nn::LeakyRelu<S>(0.01));
        }
        rest_.add(nn::Dense<S>(spec.hidden_width, 1, rng, "critic.out"));
    }

    Eigen::Index width() const { return first_.out_features(); }

    /// Single-pair score.
    double score(std::span<const double> x, std::span<const double> y) {
        dimdm::detail::require(static_cast<Eigen::Index>(x.size()) == dx_ && static_cast<Eigen::Index>(y.size()) == dy_,
                               "mlp critic: input dimension mismatch");
        Mat<S> z(1, dx_ + dy_);
        for (Eigen::Index i = 0; i < dx_; ++i) z(0, i) = static_cast<S>(x[static_cast<std::size_t>(i)]);
        for (Eigen::Index i = 0; i < dy_; ++i) z(0, dx_ + i) = static_cast<S>(y[static_cast<std::size_t>(i)]);
        return static_cast<double>(forward_rows(z, nullptr, nullptr)(0, 0));
    }

    Matrix score_matrix(const Mat<S>& x, const Mat<S>& y) {
        check(x, y);
        const Eigen::Index n = x.rows(), m = y.rows();
        const auto [a, b] = first_layer_parts(x, y);
        Matrix s(n, m);
        for (Eigen::Index r0 = 0; r0 < n; r0 += block_rows(m)) {
            const Eigen::Index rb = std::min(block_rows(m), n - r0);
            const Mat<S> out = rest_.forward(block_pre(a, b, r0, rb), nn::Mode::train, nullptr);
            for (Eigen::Index i = 0; i < rb; ++i)
                for (Eigen::Index j = 0; j < m; ++j) s(r0 + i, j) = static_cast<double>(out(i * m + j, 0));
        }
        return s;
    }

    CriticScores pair_scores(const Mat<S>& x, const Mat<S>& y, const Pairing& pairing) {
        check(x, y);
        const Mat<S> out = forward_rows(detail::pair_inputs(x, y, pairing), nullptr, nullptr);
        return detail::gather_pairs<S>(out.template cast<double>(), x.rows());
    }

    /// Accumulates parameter gradients of sum_ij G_ij S_ij and returns the input
    /// gradients. Rows are recomputed block by block to bound memory.
    CriticInputGrad<S> backward_matrix(const Mat<S>& x, const Mat<S>& y, const Matrix& g) {
        check(x, y);
        const Eigen::Index n = x.rows(), m = y.rows();
        const Eigen::Index w = width();
        const auto [a, b] = first_layer_parts(x, y);
        Mat<S> da = Mat<S>::Zero(n, w), db = Mat<S>::Zero(m, w);
        nn::Tape<S> tape;
        for (Eigen::Index r0 = 0; r0 < n; r0 += block_rows(m)) {
            const Eigen::Index rb = std::min(block_rows(m), n - r0);
            rest_.forward(block_pre(a, b, r0, rb), nn::Mode::train, &tape);
            Mat<S> dout(rb * m, 1);
            for (Eigen::Index i = 0; i < rb; ++i)
                for (Eigen::Index j = 0; j < m; ++j) dout(i * m + j, 0) = static_cast<S>(g(r0 + i, j));
            const Mat<S> dpre = rest_.backward(tape, dout, true);
            for (Eigen::Index i = 0; i < rb; ++i) {
                const auto blk = dpre.middleRows(i * m, m);
                da.row(r0 + i) += blk.colwise().sum();
                db += blk;
            }
        }
        auto& W = first_.weight();
        W.grad.leftCols(dx_).noalias() += da.transpose() * x;
        W.grad.rightCols(dy_).noalias() += db.transpose() * y;
        first_.bias().grad.row(0) += db.colwise().sum();
        return {da * W.value.leftCols(dx_), db * W.value.rightCols(dy_)};
    }

    CriticInputGrad<S> backward_pairs(const Mat<S>& x, const Mat<S>& y, const Pairing& pairing, const ScoreGradient& g) {
        check(x, y);
        nn::Tape<S> tape;
        typename nn::Dense<S>::Cache first_cache;
        forward_rows(detail::pair_inputs(x, y, pairing), &first_cache, &tape);
        const Mat<S> dh = rest_.backward(tape, detail::pair_score_grad<S>(g), true);
        const Mat<S> dz = first_.backward(dh, first_cache, true);
        return detail::split_pair_grad(dz, dx_, pairing);
    }

    std::vector<nn::Param<S>*> parameters() {
        std::vector<nn::Param<S>*> out;
        first_.collect(out);
        for (auto* p : rest_.parameters()) out.push_back(p);
        return out;
    }

private:
    void check(const Mat<S>& x, const Mat<S>& y) const {
        dimdm::detail::require(x.cols() == dx_ && y.cols() == dy_, "mlp critic: input dimension mismatch");
    }

    Mat<S> forward_rows(const Mat<S>& z, typename nn::Dense<S>::Cache* first_cache, nn::Tape<S>* tape) {
        return rest_.forward(first_.forward(z, first_cache), nn::Mode::train, tape);
    }

    // First layer split as W [x; y] + b = (x Wx^T) + (y Wy^T + b).
    std::pair<Mat<S>, Mat<S>> first_layer_parts(const Mat<S>& x, const Mat<S>& y) const {
        const auto& W = first_.weight().value;
        Mat<S> a = x * W.leftCols(dx_).transpose();
        Mat<S> b = y * W.rightCols(dy_).transpose();
        b.rowwise() += first_.bias().value.row(0);
        return {std::move(a), std::move(b)};
    }

    Mat<S> block_pre(const Mat<S>& a, const Mat<S>& b, Eigen::Index r0, Eigen::Index rb) const {
        const Eigen::Index m = b.rows();
        Mat<S> pre(rb * m, b.cols());
        for (Eigen::Index i = 0; i < rb; ++i) pre.middleRows(i * m, m) = b.rowwise() + a.row(r0 + i);
        return pre;
    }

    Eigen::Index block_rows(Eigen::Index m) const {
        constexpr Eigen::Index budget = Eigen::Index{1} << 22; // activations per block
        return std::max<Eigen::Index>(1, budget / std::max<Eigen::Index>(1, m * width()));
    }

    Eigen::Index dx_ = 0, dy_ = 0;
    nn::Dense<S> first_;
    nn::Sequential<S> rest_;
};

/// T(q, k) = <phi(q), psi(k)> with MLP projection heads, or plain dot
/// product when both heads are the identity.
template <typename S>
class SeparableCritic {
public:
    static SeparableCritic identity(Eigen::Index d) {
        SeparableCritic c;
        c.dq_ = c.dk_ = d;
        return c;
    }

    SeparableCritic() = default;
    SeparableCritic(Eigen::Index dq, Eigen::Index dk, const CriticSpec& spec, Rng& rng) : dq_(dq), dk_(dk) {
        phi_ = make_head(dq, spec, rng, "phi");
        psi_ = make_head(dk, spec, rng, "psi");
    }

    /// Builds a critic from explicit heads; output widths must agree.
    SeparableCritic(nn::Sequential<S> phi, nn::Sequential<S> psi, Eigen::Index dq, Eigen::Index dk)
        : dq_(dq), dk_(dk), phi_(std::move(phi)), psi_(std::move(psi)) {
        Mat<S> q = Mat<S>::Zero(1, dq), k = Mat<S>::Zero(1, dk);
        dimdm::detail::require(phi_->forward(q, nn::Mode::eval, nullptr).cols() == psi_->forward(k, nn::Mode::eval, nullptr).cols(),
                               "separable critic: head output dimensions differ");
    }

    bool is_identity() const { return !phi_.has_value(); }

    double score(std::span<const double> q, std::span<const double> k) {
        Mat<S> qm(1, static_cast<Eigen::Index>(q.size())), km(1, static_cast<Eigen::Index>(k.size()));
        for (std::size_t i = 0; i < q.size(); ++i) qm(0, static_cast<Eigen::Index>(i)) = static_cast<S>(q[i]);
        for (std::size_t i = 0; i < k.size(); ++i) km(0, static_cast<Eigen::Index>(i)) = static_cast<S>(k[i]);
        return score_matrix(qm, km)(0, 0);
    }

    Mat<S> project_q(const Mat<S>& q, nn::Tape<S>* tape = nullptr) {
        dimdm::detail::require(q.cols() == dq_, "separable critic: query dimension mismatch");
        return phi_ ? phi_->forward(q, nn::Mode::train, tape) : q;
    }

    Mat<S> project_k(const Mat<S>& k, nn::Tape<S>* tape = nullptr) {
        dimdm::detail::require(k.cols() == dk_, "separable critic: key dimension mismatch");
        return psi_ ? psi_->forward(k, nn::Mode::train, tape) : k;
    }

    Matrix score_matrix(const Mat<S>& q, const Mat<S>& k) {
        const Mat<S> pq = project_q(q), pk = project_k(k);
        dimdm::detail::require(pq.cols() == pk.cols(), "separable critic: head output dimensions differ");
        return (pq.template cast<double>() * pk.template cast<double>().transpose());
    }

    CriticScores pair_scores(const Mat<S>& q, const Mat<S>& k, const Pairing& pairing) {
        const Matrix pq = project_q(q).template cast<double>();
        const Matrix pk = project_k(k).template cast<double>();
        const Eigen::Index n = q.rows();
        CriticScores out{Vector(n), Vector(n)};
        for (Eigen::Index i = 0; i < n; ++i) {
            out.joint(i) = pq.row(i).dot(pk.row(i));
            out.marginal(i) = pq.row(i).dot(pk.row(static_cast<Eigen::Index>(pairing.perm[static_cast<std::size_t>(i)])));
        }
        return out;
    }

    CriticInputGrad<S> backward_matrix(const Mat<S>& q, const Mat<S>& k, const Matrix& g) {
        nn::Tape<S> tq, tk;
        const Mat<S> pq = project_q(q, &tq), pk = project_k(k, &tk);
        const Mat<S> gs = g.template cast<S>();
        return finish(tq, tk, gs * pk, gs.transpose() * pq);
    }

    CriticInputGrad<S> backward_pairs(const Mat<S>& q, const Mat<S>& k, const Pairing& pairing, const ScoreGradient& g) {
        nn::Tape<S> tq, tk;
        const Mat<S> pq = project_q(q, &tq), pk = project_k(k, &tk);
        Mat<S> dpq = Mat<S>::Zero(pq.rows(), pq.cols()), dpk = Mat<S>::Zero(pk.rows(), pk.cols());
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            const auto j = static_cast<Eigen::Index>(pairing.perm[static_cast<std::size_t>(i)]);
            dpq.row(i) += static_cast<S>(g.joint(i)) * pk.row(i) + static_cast<S>(g.marginal(i)) * pk.row(j);
            dpk.row(i) += static_cast<S>(g.joint(i)) * pq.row(i);
            dpk.row(j) += static_cast<S>(g.marginal(i)) * pq.row(i);
        }
        return finish(tq, tk, dpq, dpk);
    }

    std::vector<nn::Param<S>*> parameters() {
        std::vector<nn::Param<S>*> out;
        if (phi_)
            for (auto* p : phi_->parameters()) out.push_back(p);
        if (psi_)
            for (auto* p : psi_->parameters()) out.push_back(p);
        return out;
    }

private:
    static nn::Sequential<S> make_head(Eigen::Index d, const CriticSpec& spec, Rng& rng, const std::string& name) {
        nn::Sequential<S> head;
        Eigen::Index in = d;
        for (int l = 0; l < spec.depth; ++l) {
            head.add(nn::Dense<S>(in, spec.hidden_width, rng, name + "." + std::to_string(l)));
            head.add(nn::LeakyRelu<S>(0.01));
            in = spec.hidden_width;
        }
        head.add(nn::Dense<S>(in, spec.hidden_width, rng, name + ".out"));
        return head;
    }

    CriticInputGrad<S> finish(const nn::Tape<S>& tq, const nn::Tape<S>& tk, const Mat<S>& dpq, const Mat<S>& dpk) {
        if (!phi_) return {dpq, dpk};
        return {phi_->backward(tq, dpq, true), psi_->backward(tk, dpk, true)};
    }

    Eigen::Index dq_ = 0, dk_ = 0;
    std::optional<nn::Sequential<S>> phi_, psi_;
};

template <typename S>
using Critic = std::variant<ClosedFormGaussianCritic<S>, MlpCritic<S>, SeparableCritic<S>>;

/// Critic for embeddings of width d under the given noise.
template <typename S>
Critic<S> make_critic(const CriticSpec& spec, Eigen::Index d, const NoiseSpec& noise, Rng& rng) {
    switch (spec.kind) {
    case CriticKind::closed_form_gaussian:
        dimdm::detail::require(noise.kind == NoiseKind::gaussian, "closed_form_gaussian critic requires gaussian noise");
        return ClosedFormGaussianCritic<S>(noise.scale);
    case CriticKind::joint_mlp: return MlpCritic<S>(d, d, spec, rng);
    case CriticKind::separable: return SeparableCritic<S>(d, d, spec, rng);
    }
    throw DomainError("unknown critic kind");
}

} // namespace dimdm::mi
