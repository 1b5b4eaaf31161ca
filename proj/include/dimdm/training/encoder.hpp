#pragma once

#include <string>
#include <variant>
#include <vector>

#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/nn/sequential.hpp"

namespace dimdm::training {

using nn::ImageShape;
using nn::Mat;
using nn::Mode;

enum class BackboneKind { convnet, mlp, none };

inline std::string_view to_string(BackboneKind k) {
    switch (k) {
    case BackboneKind::convnet: return "convnet";
    case BackboneKind::mlp: return "mlp";
    case BackboneKind::none: return "none";
    }
    return "?";
}

inline std::optional<BackboneKind> parse_backbone_kind(std::string_view s) {
    for (auto k : {BackboneKind::convnet, BackboneKind::mlp, BackboneKind::none})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

struct EncoderSpec {
    BackboneKind backbone = BackboneKind::convnet;
    ImageShape input{24, 24, 1};
    int d = 2;
    HeadKind head = HeadKind::gaussian_head;
    std::vector<int> hidden{128, 128}; // mlp backbone only

    friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

/// Momentum of the Gaussian head's running statistics.
inline constexpr double head_momentum = 0.99;
/// Variance floor of the Gaussian head; small so that train-mode outputs have
/// unit variance to well below 1e-5 even for low-variance backbone outputs.
inline constexpr double head_eps = 1e-9;

/// Backbone followed by the distribution-matching head:
///   gaussian_head  batch normalisation without affine terms (zero mean, unit variance)
///   uniform_head   logistic squashing onto (0, 1)
///   raw            backbone output unchanged
template <typename S>
class Encoder {
public:
    struct Tape {
        nn::Tape<S> backbone;
        std::variant<std::monostate, typename nn::BatchNorm<S>::Cache, typename nn::Sigmoid<S>::Cache> head;
    };

    Encoder() = default;
    Encoder(const EncoderSpec& spec, Rng& rng) : spec_(spec) {
        dimdm::detail::require(spec.d >= 1, "encoder: d must be positive");
        switch (spec.backbone) {
        case BackboneKind::convnet: build_convnet(rng); break;
        case BackboneKind::mlp: build_mlp(rng); break;
        case BackboneKind::none:
            dimdm::detail::require(spec.input.size() == spec.d, "encoder: without a backbone d must equal the input width");
            break;
        }
        if (spec.head == HeadKind::gaussian_head) head_bn_ = nn::BatchNorm<S>(spec.d, false, head_momentum, head_eps, "head.bn");
    }

    const EncoderSpec& spec() const { return spec_; }
    HeadKind head() const { return spec_.head; }
    nn::Sequential<S>& backbone() { return backbone_; }
    nn::BatchNorm<S>& head_norm() { return head_bn_; }
    const nn::BatchNorm<S>& head_norm() const { return head_bn_; }

    /// Pre-head backbone output.
    Mat<S> features(const Mat<S>& x, Mode mode, nn::Tape<S>* tape, bool update_running) {
        dimdm::detail::require(x.cols() == spec_.input.size(), "encoder: input width does not match the encoder input shape");
        return backbone_.forward(x, mode, tape, update_running);
    }

    Mat<S> forward(const Mat<S>& x, Mode mode, Tape* tape = nullptr, bool update_running = true) {
        Mat<S> h = features(x, mode, tape ? &tape->backbone : nullptr, update_running);
        switch (spec_.head) {
        case HeadKind::gaussian_head: {
            typename nn::BatchNorm<S>::Cache c;
            h = head_bn_.forward(h, mode, tape ? &c : nullptr, update_running && mode == Mode::train);
            if (tape) tape->head = std::move(c);
            return h;
        }
        case HeadKind::uniform_head: {
            typename nn::Sigmoid<S>::Cache c;
            h = nn::Sigmoid<S>{}.forward(h, tape ? &c : nullptr);
            if (tape) tape->head = std::move(c);
            return h;
        }
        case HeadKind::raw:
            if (tape) tape->head = std::monostate{};
            return h;
        }
        return h;
    }

    /// Accumulates parameter gradients for dy = d(objective)/d(output).
    void backward(const Tape& tape, const Mat<S>& dy) {
        Mat<S> g = dy;
        if (auto* c = std::get_if<typename nn::BatchNorm<S>::Cache>(&tape.head)) g = head_bn_.backward(g, *c);
        else if (auto* s = std::get_if<typename nn::Sigmoid<S>::Cache>(&tape.head)) g = nn::Sigmoid<S>{}.backward(g, *s);
        if (backbone_.size() > 0) backbone_.backward(tape.backbone, g, false);
    }

    std::vector<nn::Param<S>*> parameters() { return backbone_.parameters(); }

    /// Every batch-norm layer whose running statistics are part of the state,
    /// backbone first, head last.
    std::vector<nn::BatchNorm<S>*> batch_norms() {
        auto out = backbone_.batch_norms();
        if (spec_.head == HeadKind::gaussian_head) out.push_back(&head_bn_);
        return out;
    }

private:
    void build_convnet(Rng& rng) {
        ImageShape s = spec_.input;
        int block = 0;
        for (int ch : {32, 64, 128}) {
            const std::string name = "conv" + std::to_string(block++);
            nn::Conv2d<S> conv(s, ch, 3, rng, name);
            const ImageShape c = conv.output_shape();
            dimdm::detail::require(c.height >= 2 && c.width >= 2, "encoder: input image too small for the convnet");
            backbone_.add(std::move(conv));
            backbone_.add(nn::MaxPool2d<S>(c));
            s = {c.height / 2, c.width / 2, ch};
            backbone_.add(nn::BatchNorm<S>(ch, true, 0.9, 1e-5, name + ".bn"));
            backbone_.add(nn::LeakyRelu<S>(0.01));
        }
        backbone_.add(nn::Dense<S>(s.size(), 128, rng, "fc0"));
        backbone_.add(nn::LeakyRelu<S>(0.01));
        backbone_.add(nn::Dense<S>(128, spec_.d, rng, "fc1"));
    }

    void build_mlp(Rng& rng) {
        Eigen::Index in = spec_.input.size();
        int layer = 0;
        for (int h : spec_.hidden) {
            backbone_.add(nn::Dense<S>(in, h, rng, "fc" + std::to_string(layer++)));
            backbone_.add(nn::LeakyRelu<S>(0.01));
            in = h;
        }
        backbone_.add(nn::Dense<S>(in, spec_.d, rng, "fc" + std::to_string(layer)));
    }

    EncoderSpec spec_;
    nn::Sequential<S> backbone_;
    nn::BatchNorm<S> head_bn_;
};

/// Encoder output as an embedding batch (double precision copy).
template <typename S>
EmbeddingBatch encode(Encoder<S>& encoder, const Mat<S>& batch, Mode mode) {
    const Mat<S> h = encoder.forward(batch, mode, nullptr, false);
    return EmbeddingBatch(h.template cast<double>(), encoder.head());
}

} // namespace dimdm::training
