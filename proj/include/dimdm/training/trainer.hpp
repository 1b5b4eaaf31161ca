#pragma once

// InfoMax training on the chain f(X) + Z <- f(X) <- X -> X' -> f(X'):
// the encoder and critic ascend a lower bound on I(f(X'); f(X) + Z).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dimdm/core/config.hpp"
#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/io/dataset.hpp"
#include "dimdm/mi/critics.hpp"
#include "dimdm/mi/estimators.hpp"
#include "dimdm/mi/pairing.hpp"
#include "dimdm/oracle/analytic.hpp"
#include "dimdm/training/augment.hpp"
#include "dimdm/training/encoder.hpp"
#include "dimdm/training/log.hpp"
#include "dimdm/training/noise.hpp"

namespace dimdm::training {

/// Probability that a sample's augmentation is replaced by the identity.
inline constexpr double default_identity_prob = 0.1;

/// Ceiling of the objective for the configured noise.
inline double channel_capacity(const TrainConfig& cfg) {
    return cfg.noise.kind == NoiseKind::gaussian ? oracle::gaussian_channel_capacity(cfg.d, cfg.noise.scale)
                                                 : oracle::uniform_channel_capacity(cfg.d, cfg.noise.scale);
}

template <typename S>
struct TrainState {
    TrainConfig config;
    Encoder<S> encoder;
    mi::Critic<S> critic;
    nn::Adam<S> optimizer;
    std::uint64_t step = 0;

    /// Encoder parameters followed by critic parameters.
    std::vector<nn::Param<S>*> parameters() {
        auto out = encoder.parameters();
        for (auto* p : std::visit([](auto& c) { return c.parameters(); }, critic)) out.push_back(p);
        return out;
    }
};

/// Fresh state: encoder from `spec` (its d and head must agree with cfg),
/// critic from cfg.critic, Adam at cfg.learning_rate.
template <typename S>
TrainState<S> make_state(const TrainConfig& cfg, const EncoderSpec& spec, Rng& rng) {
    dimdm::detail::require(spec.d == cfg.d, "encoder d differs from config d");
    dimdm::detail::require(spec.head == cfg.head(), "encoder head does not match the configured noise");
    for (auto& v : cfg.critic.violations()) throw DomainError(v);
    auto enc_rng = rng.fork(0), critic_rng = rng.fork(1);
    TrainState<S> st{cfg, Encoder<S>(spec, enc_rng), mi::make_critic<S>(cfg.critic, cfg.d, cfg.noise, critic_rng),
                     nn::Adam<S>(cfg.learning_rate), 0};
    return st;
}

struct StepOptions {
    double identity_prob = default_identity_prob;
    ImageShape shape{1, 1, 1};
    std::size_t epoch = 0;
    /// Replace X' by X (no augmentation at all).
    bool skip_augmentation = false;
};

struct StepResult {
    MIEstimate estimate;
    double loss = 0.0;
};

/// Evaluates the configured bound on one batch and accumulates
/// d(bound)/d(theta) into every parameter gradient (gradients are zeroed
/// first). Streams are forked from `rng`: 1 noise, 2 augmentation, 3 pairing.
template <typename S>
MIEstimate bound_and_gradient(TrainState<S>& st, const Mat<S>& batch, Rng& rng, const StepOptions& opt) {
    const TrainConfig& cfg = st.config;
    dimdm::detail::require(batch.rows() >= 2, "train step needs a batch of at least two samples");
    check_noise_head(cfg.noise, st.encoder.head());
    auto noise_rng = rng.fork(1), aug_rng = rng.fork(2), pair_rng = rng.fork(3);
    nn::zero_grad(st.parameters());

    typename Encoder<S>::Tape clean_tape, aug_tape;
    Mat<S> y = st.encoder.forward(batch, Mode::train, &clean_tape, true);
    add_noise(y, cfg.noise, noise_rng);

    const ImageShape shape = opt.shape.size() == batch.cols() ? opt.shape : ImageShape{1, static_cast<int>(batch.cols()), 1};
    const Mat<S> xa = opt.skip_augmentation ? batch : augment_mixed(batch, cfg.augmentation, opt.identity_prob, aug_rng, shape);
    // running statistics follow the clean view only
    const Mat<S> x = st.encoder.forward(xa, Mode::train, &aug_tape, false);

    MIEstimate est;
    mi::CriticInputGrad<S> g;
    std::visit(
        [&](auto& critic) {
            if (cfg.bound == BoundKind::infonce) {
                const Matrix scores = critic.score_matrix(x, y);
                est = mi::infonce_estimate(scores);
                g = critic.backward_matrix(x, y, mi::infonce_gradient(scores));
            } else {
                const auto pairing = mi::marginal_pairing(static_cast<std::size_t>(x.rows()), pair_rng);
                const auto scores = critic.pair_scores(x, y, pairing);
                est = cfg.bound == BoundKind::dv ? mi::dv_estimate(scores) : mi::nwj_estimate(scores);
                g = critic.backward_pairs(x, y, pairing, cfg.bound == BoundKind::dv ? mi::dv_gradient(scores) : mi::nwj_gradient(scores));
            }
        },
        st.critic);
    st.encoder.backward(aug_tape, g.dx);
    st.encoder.backward(clean_tape, g.dy); // d(f(X) + Z)/d f(X) = I
    return est;
}

/// One ascent step on the bound; returns the bound and loss = -bound.
template <typename S>
StepResult train_step(TrainState<S>& st, const Mat<S>& batch, Rng& rng, const StepOptions& opt = {}) {
    MIEstimate est;
    try {
        est = bound_and_gradient(st, batch, rng, opt);
    } catch (const DomainError& e) {
        // non-finite critic scores surface as domain errors from the estimators
        throw TrainingError(std::string("training step failed: ") + e.what(), opt.epoch, st.step);
    }
    if (!std::isfinite(est.value)) throw TrainingError("non-finite loss", opt.epoch, st.step);
    if (st.config.bound == BoundKind::infonce && est.value > std::log(static_cast<double>(batch.rows())) + 1e-9)
        throw TrainingError("InfoNCE estimate above log(batch size)", opt.epoch, st.step);

    auto params = st.parameters();
    for (auto* p : params) {
        if (!p->grad.allFinite()) throw TrainingError("non-finite gradient in " + p->name, opt.epoch, st.step);
        p->grad = -p->grad; // descend on the loss
    }
    st.optimizer.step(params);
    ++st.step;
    return {est, -est.value};
}

struct TrainOptions {
    std::optional<BackboneKind> backbone; // default: convnet for images, mlp otherwise
    std::vector<int> mlp_hidden{128, 128};
    double identity_prob = default_identity_prob;
    std::string checkpoint_path; // empty: no checkpoint
    std::function<void(const EpochRecord&)> on_epoch;
    /// Called after every optimisation step with the batch estimate.
    std::function<void(const MIEstimate&)> on_batch;
};

template <typename S>
struct TrainResult {
    TrainState<S> state;
    TrainLog log;
};

/// Encoder spec implied by the dataset and config.
inline EncoderSpec encoder_spec_for(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opt) {
    EncoderSpec spec;
    spec.backbone = opt.backbone.value_or(data.is_image() ? BackboneKind::convnet : BackboneKind::mlp);
    spec.input = data.shape;
    spec.d = cfg.d;
    spec.head = cfg.head();
    spec.hidden = opt.mlp_hidden;
    return spec;
}

template <typename S>
Mat<S> rows_of(const Mat<S>& all, const std::vector<Eigen::Index>& idx, std::size_t begin, std::size_t end) {
    Mat<S> out(static_cast<Eigen::Index>(end - begin), all.cols());
    for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = all.row(idx[i]);
    return out;
}

/// Eval-mode embeddings of every sample, computed in chunks of 1024.
template <typename S>
EmbeddingBatch embed_dataset(Encoder<S>& enc, const Dataset& data) {
    const Mat<S> x = data.inputs.template cast<S>();
    Matrix emb(x.rows(), enc.spec().d);
    for (Eigen::Index b = 0; b < x.rows(); b += 1024) {
        const Eigen::Index m = std::min<Eigen::Index>(1024, x.rows() - b);
        emb.middleRows(b, m) = enc.forward(x.middleRows(b, m), Mode::eval, nullptr, false).template cast<double>();
    }
    return EmbeddingBatch(std::move(emb), enc.head());
}

/// Eval-mode per-dimension moments of the embeddings of `data`.
template <typename S>
EmbeddingMoments eval_moments(Encoder<S>& enc, const Dataset& data) {
    const Matrix emb = embed_dataset(enc, data).values();
    EmbeddingMoments out;
    out.mean = emb.colwise().mean().transpose();
    out.variance = ((emb.rowwise() - out.mean.transpose()).array().square().colwise().sum() /
                    static_cast<double>(std::max<Eigen::Index>(1, emb.rows() - 1)))
                       .transpose();
    return out;
}

template <typename S>
void save_checkpoint(TrainState<S>& st, const std::string& path);

/// Full run: cfg.epochs passes over shuffled data in batches of
/// cfg.batch_size (the last partial batch is dropped; a dataset smaller than
/// one batch is used whole). Every epoch is checked against the capacity
/// ceiling; a violation fails the run.
template <typename S = float>
TrainResult<S> train(const TrainConfig& cfg, const Dataset& data, const TrainOptions& opt = {}) {
    ensure_valid(cfg);
    data.validate();
    dimdm::detail::require(data.n() >= 2, "training needs at least two samples");

    auto root = make_rng(cfg.seed);
    auto init_rng = root.fork(0);
    TrainResult<S> res{make_state<S>(cfg, encoder_spec_for(cfg, data, opt), init_rng), {}};
    TrainState<S>& st = res.state;
    TrainLog& log = res.log;
    log.capacity_nats = channel_capacity(cfg);

    const Mat<S> inputs = data.inputs.template cast<S>();
    const auto n = static_cast<std::size_t>(data.n());
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
    const std::size_t steps = n / bs;
    std::vector<Eigen::Index> order(n);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        auto epoch_rng = root.fork(1000 + static_cast<std::uint64_t>(epoch));
        auto shuffle_rng = epoch_rng.fork(0);
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.below(i + 1)]);

        std::vector<double> values, variances;
        for (std::size_t s = 0; s < steps; ++s) {
            auto step_rng = epoch_rng.fork(1 + s);
            StepOptions so{opt.identity_prob, data.shape, static_cast<std::size_t>(epoch), false};
            const auto r = train_step(st, rows_of(inputs, order, s * bs, (s + 1) * bs), step_rng, so);
            if (opt.on_batch) opt.on_batch(r.estimate);
            values.push_back(r.estimate.value);
            variances.push_back(r.estimate.stderr_nats * r.estimate.stderr_nats);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.bound_nats = mi::detail::sorted_sum(values) / static_cast<double>(steps);
        rec.stderr_nats = std::sqrt(mi::detail::sorted_sum(variances)) / static_cast<double>(steps);
        rec.capacity_nats = log.capacity_nats;
        rec.loss = -rec.bound_nats;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.epochs.push_back(rec);
        if (opt.on_epoch) opt.on_epoch(rec);
        if (rec.bound_nats > rec.capacity_nats + 3.0 * rec.stderr_nats)
            throw TrainingError("bound estimate " + std::to_string(rec.bound_nats) + " exceeds capacity " +
                                    std::to_string(rec.capacity_nats) + " + 3 stderr",
                                static_cast<std::size_t>(epoch), st.step);
    }
    if (cfg.epochs > 0 && st.encoder.head() == HeadKind::gaussian_head) log.eval_moments = eval_moments(st.encoder, data);
    if (!opt.checkpoint_path.empty()) {
        save_checkpoint(st, opt.checkpoint_path);
        log.checkpoint = opt.checkpoint_path;
    }
    return res;
}

/// Bound on one batch without updating anything (train-mode normalisation,
/// running statistics untouched). With `augment` false, X' = X.
template <typename S>
MIEstimate estimate_bound(TrainState<S>& st, const Mat<S>& batch, Rng& rng, bool augment, ImageShape shape,
                          double identity_prob = 0.0) {
    const TrainConfig& cfg = st.config;
    auto noise_rng = rng.fork(1), aug_rng = rng.fork(2), pair_rng = rng.fork(3);
    Mat<S> y = st.encoder.forward(batch, Mode::train, nullptr, false);
    add_noise(y, cfg.noise, noise_rng);
    const Mat<S> xa = augment ? augment_mixed(batch, cfg.augmentation, identity_prob, aug_rng, shape) : batch;
    const Mat<S> x = st.encoder.forward(xa, Mode::train, nullptr, false);
    return std::visit(
        [&](auto& critic) {
            if (cfg.bound == BoundKind::infonce) return mi::infonce_estimate(critic.score_matrix(x, y));
            const auto pairing = mi::marginal_pairing(static_cast<std::size_t>(x.rows()), pair_rng);
            const auto scores = critic.pair_scores(x, y, pairing);
            return cfg.bound == BoundKind::dv ? mi::dv_estimate(scores) : mi::nwj_estimate(scores);
        },
        st.critic);
}

} // namespace dimdm::training

#include "dimdm/training/checkpoint.hpp"
