#pragma once

#include <type_traits>
#include <variant>
#include <vector>

#include "dimdm/nn/layers.hpp"

namespace dimdm::nn {

template <typename S>
using Layer = std::variant<Dense<S>, Conv2d<S>, MaxPool2d<S>, BatchNorm<S>, LeakyRelu<S>, Sigmoid<S>>;

/// Per-forward-pass activation record. Several passes (e.g. the clean and the
/// augmented view) can be alive at once and back-propagated independently;
/// parameter gradients accumulate.
template <typename S>
struct Tape {
    using Entry = std::variant<typename Dense<S>::Cache, typename Conv2d<S>::Cache, typename MaxPool2d<S>::Cache,
                               typename BatchNorm<S>::Cache, typename LeakyRelu<S>::Cache, typename Sigmoid<S>::Cache>;
    std::vector<Entry> entries;
};

template <typename S>
class Sequential {
public:
    Sequential() = default;

    template <typename L>
    Sequential& add(L layer) {
        layers_.emplace_back(std::move(layer));
        return *this;
    }

    std::size_t size() const { return layers_.size(); }
    std::vector<Layer<S>>& layers() { return layers_; }
    const std::vector<Layer<S>>& layers() const { return layers_; }

    Mat<S> forward(const Mat<S>& x, Mode mode, Tape<S>* tape, bool update_running = true) {
        if (tape) tape->entries.clear();
        Mat<S> h = x;
        for (auto& layer : layers_) {
            h = std::visit(
                [&](auto& l) -> Mat<S> {
                    using L = std::decay_t<decltype(l)>;
                    typename L::Cache cache;
                    Mat<S> out;
                    if constexpr (std::is_same_v<L, BatchNorm<S>>)
                        out = l.forward(h, mode, tape ? &cache : nullptr, update_running && mode == Mode::train);
                    else
                        out = l.forward(h, tape ? &cache : nullptr);
                    if (tape) tape->entries.emplace_back(std::move(cache));
                    return out;
                },
                layer);
        }
        return h;
    }

    /// Back-propagates dy through a recorded pass. The input gradient is only
    /// formed when `need_input_grad` (the first layer of an encoder skips it).
    Mat<S> backward(const Tape<S>& tape, const Mat<S>& dy, bool need_input_grad = false) {
        detail::require(tape.entries.size() == layers_.size(), "backward: tape does not match the network");
        Mat<S> g = dy;
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const bool first = i == 0;
            g = std::visit(
                [&](auto& l) -> Mat<S> {
                    using L = std::decay_t<decltype(l)>;
                    const auto& cache = std::get<typename L::Cache>(tape.entries[i]);
                    if constexpr (std::is_same_v<L, Dense<S>> || std::is_same_v<L, Conv2d<S>>)
                        return l.backward(g, cache, !first || need_input_grad);
                    else
                        return l.backward(g, cache);
                },
                layers_[i]);
        }
        return g;
    }

    std::vector<Param<S>*> parameters() {
        std::vector<Param<S>*> out;
        for (auto& layer : layers_)
            std::visit(
                [&](auto& l) {
                    using L = std::decay_t<decltype(l)>;
                    if constexpr (requires { l.collect(out); }) l.collect(out);
                    (void)sizeof(L);
                },
                layer);
        return out;
    }

    /// Running statistics of every batch-norm layer, in layer order.
    std::vector<BatchNorm<S>*> batch_norms() {
        std::vector<BatchNorm<S>*> out;
        for (auto& layer : layers_)
            if (auto* bn = std::get_if<BatchNorm<S>>(&layer)) out.push_back(bn);
        return out;
    }

private:
    std::vector<Layer<S>> layers_;
};

} // namespace dimdm::nn
