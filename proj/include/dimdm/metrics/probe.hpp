#pragma once

// Downstream quality of embeddings: held-out accuracy of simple classifiers
// and the silhouette score of the labelled clusters.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string_view>
#include <vector>

#include "dimdm/core/config.hpp"
#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/nn/sequential.hpp"

namespace dimdm::metrics {

enum class ProbeMethod { gnb, knn, mlp };

inline std::string_view to_string(ProbeMethod m) {
    switch (m) {
    case ProbeMethod::gnb: return "gnb";
    case ProbeMethod::knn: return "knn";
    case ProbeMethod::mlp: return "mlp";
    }
    return "?";
}

inline std::optional<ProbeMethod> parse_probe_method(std::string_view s) {
    for (auto m : {ProbeMethod::gnb, ProbeMethod::knn, ProbeMethod::mlp})
        if (to_string(m) == s) return m;
    return std::nullopt;
}

inline constexpr int knn_k = 5;
inline constexpr double gnb_variance_floor = 1e-9;
inline constexpr int mlp_probe_hidden = 64;
inline constexpr int mlp_probe_epochs = 200;
inline constexpr int mlp_probe_batch = 128;
inline constexpr double mlp_probe_learning_rate = 1e-3;

struct Split {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
};

namespace detail {

inline std::map<int, std::vector<Eigen::Index>> by_class(const std::vector<int>& labels) {
    std::map<int, std::vector<Eigen::Index>> out;
    for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(static_cast<Eigen::Index>(i));
    return out;
}

inline Matrix rows(const Matrix& x, const std::vector<Eigen::Index>& idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    return out;
}

inline std::vector<int> pick(const std::vector<int>& v, const std::vector<Eigen::Index>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
    return out;
}

} // namespace detail

/// Stratified 80/20 split: each class contributes round(0.2 n_c) random
/// members to the test side, keeping at least one on the training side.
inline Split stratified_split(const std::vector<int>& labels, Rng& rng, double test_fraction = 0.2) {
    const auto classes = detail::by_class(labels);
    dimdm::detail::require(classes.size() >= 2, "probe needs labels from at least two classes");
    Split s;
    for (auto [label, members] : classes) {
        for (std::size_t i = members.size(); i-- > 1;) std::swap(members[i], members[rng.below(i + 1)]);
        const auto nc = members.size();
        const auto nt = std::min<std::size_t>(nc - 1, static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(nc))));
        s.test.insert(s.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(nt));
        s.train.insert(s.train.end(), members.begin() + static_cast<std::ptrdiff_t>(nt), members.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    dimdm::detail::require(!s.test.empty(), "stratified split left no test samples");
    return s;
}

/// Gaussian naive Bayes with per-class diagonal covariances; equal
/// posteriors resolve to the smaller label.
inline std::vector<int> gnb_predict(const Matrix& xtr, const std::vector<int>& ytr, const Matrix& xte) {
    const auto classes = detail::by_class(ytr);
    const Eigen::Index d = xtr.cols();
    std::vector<int> ids;
    std::vector<Eigen::RowVectorXd> mean, var;
    std::vector<double> log_prior;
    for (const auto& [label, members] : classes) {
        const Matrix xc = detail::rows(xtr, members);
        const Eigen::RowVectorXd mu = xc.colwise().mean();
        Eigen::RowVectorXd v = (xc.rowwise() - mu).array().square().colwise().mean();
        v = v.cwiseMax(gnb_variance_floor);
        ids.push_back(label);
        mean.push_back(mu);
        var.push_back(v);
        log_prior.push_back(std::log(static_cast<double>(members.size()) / static_cast<double>(ytr.size())));
    }
    std::vector<int> out(static_cast<std::size_t>(xte.rows()));
    for (Eigen::Index i = 0; i < xte.rows(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < ids.size(); ++c) {
            double ll = log_prior[c];
            for (Eigen::Index j = 0; j < d; ++j) {
                const double diff = xte(i, j) - mean[c](j);
                ll -= 0.5 * (std::log(2 * std::numbers::pi * var[c](j)) + diff * diff / var[c](j));
            }
            if (ll > best) {
                best = ll;
                out[static_cast<std::size_t>(i)] = ids[c];
            }
        }
    }
    return out;
}

/// k-nearest-neighbour vote under Euclidean distance. Neighbours are ordered
/// by (distance, index); training points tied with the k-th distance all
/// vote, so an equal-distance shell is never split arbitrarily. A tied vote
/// goes to the class whose nearest member comes first in that order.
inline std::vector<int> knn_predict(const Matrix& xtr, const std::vector<int>& ytr, const Matrix& xte, int k = knn_k) {
    dimdm::detail::require(k >= 1, "knn needs k >= 1");
    const Eigen::Index ntr = xtr.rows();
    const auto kk = static_cast<std::size_t>(std::min<Eigen::Index>(k, ntr));
    const Eigen::VectorXd trsq = xtr.rowwise().squaredNorm();
    std::vector<int> out(static_cast<std::size_t>(xte.rows()));
    std::vector<std::pair<double, Eigen::Index>> cand(static_cast<std::size_t>(ntr));
    const Eigen::Index block = 256;
    for (Eigen::Index b0 = 0; b0 < xte.rows(); b0 += block) {
        const Eigen::Index m = std::min(block, xte.rows() - b0);
        // squared distances of the block to every training point
        Matrix dist = -2.0 * xte.middleRows(b0, m) * xtr.transpose();
        dist.rowwise() += trsq.transpose();
        dist.colwise() += xte.middleRows(b0, m).rowwise().squaredNorm();
        for (Eigen::Index r = 0; r < m; ++r) {
            for (Eigen::Index j = 0; j < ntr; ++j) cand[static_cast<std::size_t>(j)] = {std::max(0.0, dist(r, j)), j};
            std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk - 1), cand.end());
            const double radius = cand[kk - 1].first;
            std::vector<std::pair<double, Eigen::Index>> shell;
            for (const auto& c : cand)
                if (c.first <= radius) shell.push_back(c);
            std::sort(shell.begin(), shell.end());
            std::map<int, std::pair<int, std::size_t>> votes; // label -> (count, first position)
            for (std::size_t p = 0; p < shell.size(); ++p) {
                auto [it, fresh] = votes.try_emplace(ytr[static_cast<std::size_t>(shell[p].second)], 0, p);
                ++it->second.first;
            }
            int best = 0;
            std::pair<int, std::size_t> best_vote{-1, 0};
            for (const auto& [label, v] : votes)
                if (v.first > best_vote.first || (v.first == best_vote.first && v.second < best_vote.second)) {
                    best = label;
                    best_vote = v;
                }
            out[static_cast<std::size_t>(b0 + r)] = best;
        }
    }
    return out;
}

/// One hidden layer of rectified units trained with softmax cross-entropy
/// and Adam on standardised inputs.
inline std::vector<int> mlp_predict(const Matrix& xtr, const std::vector<int>& ytr, const Matrix& xte, Rng& rng,
                                    int epochs = mlp_probe_epochs) {
    const auto classes = detail::by_class(ytr);
    std::vector<int> ids;
    std::map<int, int> col;
    for (const auto& [label, members] : classes) {
        col[label] = static_cast<int>(ids.size());
        ids.push_back(label);
    }
    const Eigen::RowVectorXd mu = xtr.colwise().mean();
    Eigen::RowVectorXd sd = ((xtr.rowwise() - mu).array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < sd.size(); ++j)
        if (!(sd(j) > 0)) sd(j) = 1;
    const Matrix ztr = (xtr.rowwise() - mu).array().rowwise() / sd.array();
    const Matrix zte = (xte.rowwise() - mu).array().rowwise() / sd.array();

    auto init_rng = rng.fork(0), order_rng = rng.fork(1);
    nn::Sequential<double> net;
    net.add(nn::Dense<double>(ztr.cols(), mlp_probe_hidden, init_rng, "probe.fc0"));
    net.add(nn::LeakyRelu<double>(0.0));
    net.add(nn::Dense<double>(mlp_probe_hidden, static_cast<Eigen::Index>(ids.size()), init_rng, "probe.fc1"));
    nn::Adam<double> opt(mlp_probe_learning_rate);
    auto params = net.parameters();

    const auto n = static_cast<std::size_t>(ztr.rows());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    nn::Tape<double> tape;
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[order_rng.below(i + 1)]);
        for (std::size_t b = 0; b < n; b += mlp_probe_batch) {
            const std::size_t m = std::min<std::size_t>(mlp_probe_batch, n - b);
            Matrix xb(static_cast<Eigen::Index>(m), ztr.cols());
            for (std::size_t i = 0; i < m; ++i) xb.row(static_cast<Eigen::Index>(i)) = ztr.row(order[b + i]);
            Matrix logits = net.forward(xb, nn::Mode::train, &tape);
            for (Eigen::Index i = 0; i < logits.rows(); ++i) {
                const double mx = logits.row(i).maxCoeff();
                logits.row(i) = (logits.row(i).array() - mx).exp();
                logits.row(i) /= logits.row(i).sum();
                logits(i, col[ytr[static_cast<std::size_t>(order[b + static_cast<std::size_t>(i)])]]) -= 1.0;
            }
            nn::zero_grad(params);
            net.backward(tape, logits / static_cast<double>(m));
            opt.step(params);
        }
    }
    const Matrix logits = net.forward(zte, nn::Mode::eval, nullptr);
    std::vector<int> out(static_cast<std::size_t>(zte.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index c;
        logits.row(i).maxCoeff(&c);
        out[static_cast<std::size_t>(i)] = ids[static_cast<std::size_t>(c)];
    }
    return out;
}

/// Mean silhouette coefficient under Euclidean distance. A point whose own
/// and nearest-other mean distances are both 0 scores 0.
inline double silhouette(const Matrix& x, const std::vector<int>& labels) {
    dimdm::detail::require(static_cast<Eigen::Index>(labels.size()) == x.rows(), "silhouette: one label per sample required");
    const auto classes = detail::by_class(labels);
    dimdm::detail::require(classes.size() >= 2, "silhouette needs at least two classes");
    std::map<int, int> col;
    std::vector<double> size;
    for (const auto& [label, members] : classes) {
        dimdm::detail::require(members.size() >= 2, "silhouette needs at least two members per class");
        col[label] = static_cast<int>(size.size());
        size.push_back(static_cast<double>(members.size()));
    }
    const Eigen::Index n = x.rows();
    const auto nc = static_cast<Eigen::Index>(size.size());
    Matrix onehot = Matrix::Zero(n, nc);
    for (Eigen::Index i = 0; i < n; ++i) onehot(i, col[labels[static_cast<std::size_t>(i)]]) = 1.0;
    const Eigen::VectorXd sq = x.rowwise().squaredNorm();

    double total = 0;
    const Eigen::Index block = 256;
    for (Eigen::Index b0 = 0; b0 < n; b0 += block) {
        const Eigen::Index m = std::min(block, n - b0);
        Matrix dist = -2.0 * x.middleRows(b0, m) * x.transpose();
        dist.rowwise() += sq.transpose();
        dist.colwise() += sq.segment(b0, m);
        dist = dist.array().max(0.0).sqrt();
        const Matrix sums = dist * onehot; // m x classes
        for (Eigen::Index r = 0; r < m; ++r) {
            const int own = col[labels[static_cast<std::size_t>(b0 + r)]];
            const double a = sums(r, own) / (size[static_cast<std::size_t>(own)] - 1);
            double b = std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < nc; ++c)
                if (c != own) b = std::min(b, sums(r, c) / size[static_cast<std::size_t>(c)]);
            const double denom = std::max(a, b);
            total += denom > 0 ? (b - a) / denom : 0.0;
        }
    }
    return std::clamp(total / static_cast<double>(n), -1.0, 1.0);
}

inline double silhouette(const EmbeddingBatch& emb, const std::vector<int>& labels) { return silhouette(emb.values(), labels); }

struct ProbeReport {
    ProbeMethod method = ProbeMethod::knn;
    double accuracy = 0.0;
    double silhouette = 0.0;

    /// Flat `key = value` lines in field order.
    std::string to_text() const {
        return "method = " + std::string(to_string(method)) + "\naccuracy = " + dimdm::detail::format_double(accuracy) +
               "\nsilhouette = " + dimdm::detail::format_double(silhouette) + "\n";
    }
};

/// Held-out accuracy of the probe on a stratified 80/20 split (split from
/// rng.fork(0), classifier randomness from rng.fork(1)) plus the silhouette
/// of the full labelled embedding.
inline ProbeReport downstream_probe(const EmbeddingBatch& emb, const std::vector<int>& labels, ProbeMethod method, Rng& rng) {
    const Matrix& x = emb.values();
    dimdm::detail::require(static_cast<Eigen::Index>(labels.size()) == x.rows(), "probe: one label per sample required");
    auto split_rng = rng.fork(0), model_rng = rng.fork(1);
    const Split s = stratified_split(labels, split_rng);
    const Matrix xtr = detail::rows(x, s.train), xte = detail::rows(x, s.test);
    const auto ytr = detail::pick(labels, s.train), yte = detail::pick(labels, s.test);
    std::vector<int> pred;
    switch (method) {
    case ProbeMethod::gnb: pred = gnb_predict(xtr, ytr, xte); break;
    case ProbeMethod::knn: pred = knn_predict(xtr, ytr, xte); break;
    case ProbeMethod::mlp: pred = mlp_predict(xtr, ytr, xte, model_rng); break;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == yte[i] ? 1 : 0;
    ProbeReport r;
    r.method = method;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    r.silhouette = silhouette(x, labels);
    return r;
}

} // namespace dimdm::metrics
