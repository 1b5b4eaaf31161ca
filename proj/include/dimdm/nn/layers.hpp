#pragma once

// Minimal layer set for the encoder, critics and probes. Activations are
// row-major matrices with one sample per row; image tensors are stored
// channels-last (H, W, C) inside each row so that a batch of N images is
// also an (N*H*W) x C matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"

namespace dimdm::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

enum class Mode { train, eval };

template <typename S>
struct Param {
    std::string name;
    Mat<S> value;
    Mat<S> grad;

    Param() = default;
    Param(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for weights and biases.
template <typename S>
void init_fan_in(Param<S>& p, Eigen::Index fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
}

struct ImageShape {
    int height = 1;
    int width = 1;
    int channels = 1;

    Eigen::Index size() const { return static_cast<Eigen::Index>(height) * width * channels; }
    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

template <typename S>
class Dense {
public:
    struct Cache {
        Mat<S> input;
    };

    Dense() = default;
    Dense(Eigen::Index in, Eigen::Index out, Rng& rng, std::string name = "dense")
        : weight_(name + ".weight", out, in), bias_(name + ".bias", 1, out) {
        init_fan_in(weight_, in, rng);
        init_fan_in(bias_, in, rng);
    }

    Eigen::Index in_features() const { return weight_.value.cols(); }
    Eigen::Index out_features() const { return weight_.value.rows(); }

    Mat<S> forward(const Mat<S>& x, Cache* cache) const {
        detail::require(x.cols() == in_features(), "dense layer: input width mismatch");
        if (cache) cache->input = x;
        Mat<S> y = x * weight_.value.transpose();
        y.rowwise() += bias_.value.row(0);
        return y;
    }

    Mat<S> backward(const Mat<S>& dy, const Cache& cache, bool need_input_grad) {
        weight_.grad.noalias() += dy.transpose() * cache.input;
        bias_.grad.row(0) += dy.colwise().sum();
        if (!need_input_grad) return {};
        return dy * weight_.value;
    }

    void collect(std::vector<Param<S>*>& out) {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    Param<S>& weight() { return weight_; }
    Param<S>& bias() { return bias_; }
    const Param<S>& weight() const { return weight_; }
    const Param<S>& bias() const { return bias_; }

private:
    Param<S> weight_;
    Param<S> bias_;
};

/// Valid (unpadded) stride-1 convolution via im2col + GEMM. The batch is
/// processed in chunks of images so the column buffer stays cache-sized; the
/// backward pass rebuilds columns from the cached input instead of storing them.
template <typename S>
class Conv2d {
public:
    struct Cache {
        Mat<S> input;
    };

    Conv2d() = default;
    Conv2d(ImageShape in, int out_channels, int kernel, Rng& rng, std::string name = "conv")
        : in_(in), out_channels_(out_channels), kernel_(kernel),
          weight_(name + ".weight", out_channels, static_cast<Eigen::Index>(kernel) * kernel * in.channels),
          bias_(name + ".bias", 1, out_channels) {
        detail::require(in.height >= kernel && in.width >= kernel, "conv layer: kernel larger than input");
        init_fan_in(weight_, weight_.value.cols(), rng);
        init_fan_in(bias_, weight_.value.cols(), rng);
    }

    ImageShape input_shape() const { return in_; }
    ImageShape output_shape() const { return {in_.height - kernel_ + 1, in_.width - kernel_ + 1, out_channels_}; }

    Mat<S> forward(const Mat<S>& x, Cache* cache) const {
        detail::require(x.cols() == in_.size(), "conv layer: input size mismatch");
        const Eigen::Index n = x.rows();
        const Eigen::Index positions = output_shape().size() / out_channels_;
        Mat<S> y(n, positions * out_channels_);
        Mat<S> cols;
        for (Eigen::Index b = 0; b < n; b += chunk()) {
            const Eigen::Index m = std::min(chunk(), n - b);
            im2col(x, b, m, cols);
            Eigen::Map<Mat<S>> flat(y.row(b).data(), m * positions, out_channels_);
            flat.noalias() = cols.topRows(m * positions) * weight_.value.transpose();
            flat.rowwise() += bias_.value.row(0);
        }
        if (cache) cache->input = x;
        return y;
    }

    Mat<S> backward(const Mat<S>& dy, const Cache& cache, bool need_input_grad) {
        const Eigen::Index n = cache.input.rows();
        const Eigen::Index positions = output_shape().size() / out_channels_;
        Mat<S> dx;
        if (need_input_grad) dx = Mat<S>::Zero(n, in_.size());
        Mat<S> cols, dcols;
        for (Eigen::Index b = 0; b < n; b += chunk()) {
            const Eigen::Index m = std::min(chunk(), n - b);
            Eigen::Map<const Mat<S>> flat(dy.row(b).data(), m * positions, out_channels_);
            im2col(cache.input, b, m, cols);
            weight_.grad.noalias() += flat.transpose() * cols.topRows(m * positions);
            bias_.grad.row(0) += flat.colwise().sum();
            if (!need_input_grad) continue;
            dcols.noalias() = flat * weight_.value;
            col2im_add(dcols, b, m, dx);
        }
        return dx;
    }

    void collect(std::vector<Param<S>*>& out) {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

private:
    Eigen::Index chunk() const { return 32; }

    void im2col(const Mat<S>& x, Eigen::Index first, Eigen::Index count, Mat<S>& cols) const {
        const ImageShape o = output_shape();
        const Eigen::Index positions = static_cast<Eigen::Index>(o.height) * o.width;
        const Eigen::Index c = in_.channels;
        if (cols.rows() < count * positions || cols.cols() != weight_.value.cols()) cols.resize(chunk() * positions, weight_.value.cols());
        for (Eigen::Index s = 0; s < count; ++s) {
            const S* img = x.row(first + s).data();
            for (int oy = 0; oy < o.height; ++oy)
                for (int ox = 0; ox < o.width; ++ox) {
                    S* dst = cols.row(s * positions + oy * o.width + ox).data();
                    for (int ky = 0; ky < kernel_; ++ky) {
                        const S* src = img + ((oy + ky) * in_.width + ox) * c;
                        std::copy(src, src + kernel_ * c, dst);
                        dst += kernel_ * c;
                    }
                }
        }
    }

    void col2im_add(const Mat<S>& dcols, Eigen::Index first, Eigen::Index count, Mat<S>& dx) const {
        const ImageShape o = output_shape();
        const Eigen::Index positions = static_cast<Eigen::Index>(o.height) * o.width;
        const Eigen::Index c = in_.channels;
        for (Eigen::Index s = 0; s < count; ++s) {
            S* img = dx.row(first + s).data();
            for (int oy = 0; oy < o.height; ++oy)
                for (int ox = 0; ox < o.width; ++ox) {
                    const S* src = dcols.row(s * positions + oy * o.width + ox).data();
                    for (int ky = 0; ky < kernel_; ++ky) {
                        S* dst = img + ((oy + ky) * in_.width + ox) * c;
                        for (Eigen::Index t = 0; t < kernel_ * c; ++t) dst[t] += src[t];
                        src += kernel_ * c;
                    }
                }
        }
    }

    ImageShape in_;
    int out_channels_ = 0;
    int kernel_ = 3;
    Param<S> weight_;
    Param<S> bias_;
};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
template <typename S>
class MaxPool2d {
public:
    struct Cache {
        std::vector<std::int32_t> argmax;
        Eigen::Index batch = 0;
    };

    MaxPool2d() = default;
    explicit MaxPool2d(ImageShape in) : in_(in) {
        detail::require(in.height >= 2 && in.width >= 2, "max pool: input smaller than the window");
    }

    ImageShape output_shape() const { return {in_.height / 2, in_.width / 2, in_.channels}; }

    Mat<S> forward(const Mat<S>& x, Cache* cache) const {
        detail::require(x.cols() == in_.size(), "max pool: input size mismatch");
        const ImageShape o = output_shape();
        const Eigen::Index n = x.rows();
        const int c = in_.channels;
        Mat<S> y(n, o.size());
        if (cache) {
            cache->argmax.resize(static_cast<std::size_t>(n * o.size()));
            cache->batch = n;
        }
        const Eigen::Index row = static_cast<Eigen::Index>(in_.width) * c;
        for (Eigen::Index s = 0; s < n; ++s) {
            const S* img = x.row(s).data();
            S* out = y.row(s).data();
            std::int32_t* arg = cache ? cache->argmax.data() + s * o.size() : nullptr;
            for (int oy = 0; oy < o.height; ++oy)
                for (int ox = 0; ox < o.width; ++ox) {
                    const auto base = static_cast<std::int32_t>(2 * oy * row + 2 * ox * c);
                    const std::int32_t cand[4] = {base, base + c, base + static_cast<std::int32_t>(row),
                                                  base + static_cast<std::int32_t>(row) + c};
                    const Eigen::Index o_idx = (static_cast<Eigen::Index>(oy) * o.width + ox) * c;
                    for (int ch = 0; ch < c; ++ch) {
                        std::int32_t best = cand[0] + ch;
                        for (int k = 1; k < 4; ++k)
                            if (img[cand[k] + ch] > img[best]) best = cand[k] + ch;
                        out[o_idx + ch] = img[best];
                        if (arg) arg[o_idx + ch] = best;
                    }
                }
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& dy, const Cache& cache) const {
        const Eigen::Index per = output_shape().size();
        Mat<S> dx = Mat<S>::Zero(cache.batch, in_.size());
        for (Eigen::Index s = 0; s < cache.batch; ++s)
            for (Eigen::Index j = 0; j < per; ++j) dx(s, cache.argmax[static_cast<std::size_t>(s * per + j)]) += dy(s, j);
        return dx;
    }

private:
    ImageShape in_;
};

/// Batch normalisation over the rows of an (M x channels) view. With
/// `affine=false` the train-mode output has exact zero mean and unit variance
/// per channel (up to eps), which is what the Gaussian embedding head needs.
template <typename S>
class BatchNorm {
public:
    struct Cache {
        Mat<S> normalized; // x-hat, (rows, channels) view flattened like the input
        RowVec<S> inv_std;
        Mode mode = Mode::train;
    };

    BatchNorm() = default;
    BatchNorm(Eigen::Index channels, bool affine, double momentum, double eps, std::string name = "bn")
        : channels_(channels), affine_(affine), momentum_(momentum), eps_(eps),
          running_mean_(RowVec<S>::Zero(channels)), running_var_(RowVec<S>::Ones(channels)) {
        if (affine_) {
            gamma_ = Param<S>(name + ".gamma", 1, channels);
            gamma_.value.setOnes();
            beta_ = Param<S>(name + ".beta", 1, channels);
        }
    }

    Eigen::Index channels() const { return channels_; }
    bool affine() const { return affine_; }
    double momentum() const { return momentum_; }
    RowVec<S>& running_mean() { return running_mean_; }
    RowVec<S>& running_var() { return running_var_; }
    const RowVec<S>& running_mean() const { return running_mean_; }
    const RowVec<S>& running_var() const { return running_var_; }

    /// Train mode normalises with batch statistics and, when `update_running`,
    /// folds them into the running estimates (momentum on the old value).
    Mat<S> forward(const Mat<S>& x, Mode mode, Cache* cache, bool update_running) {
        detail::require(x.size() % channels_ == 0, "batch norm: input width is not a multiple of channels");
        const Eigen::Index rows = x.size() / channels_;
        Eigen::Map<const Mat<S>> view(x.data(), rows, channels_);
        Mat<S> y(x.rows(), x.cols());
        Eigen::Map<Mat<S>> out(y.data(), rows, channels_);

        RowVec<S> inv_std(channels_);
        if (mode == Mode::train) {
            detail::require(rows >= 2, "batch norm: train mode needs at least two rows per channel");
            Eigen::Array<double, 1, Eigen::Dynamic> sum = Eigen::Array<double, 1, Eigen::Dynamic>::Zero(channels_);
            Eigen::Array<double, 1, Eigen::Dynamic> ss = sum;
            for (Eigen::Index r = 0; r < rows; ++r) sum += view.row(r).array().template cast<double>();
            const Eigen::Array<double, 1, Eigen::Dynamic> mean = sum / static_cast<double>(rows);
            for (Eigen::Index r = 0; r < rows; ++r) ss += (view.row(r).array().template cast<double>() - mean).square();
            const Eigen::Array<double, 1, Eigen::Dynamic> is = ((ss / static_cast<double>(rows)) + eps_).rsqrt();
            inv_std = is.template cast<S>().matrix();
            const RowVec<S> mean_s = mean.template cast<S>().matrix();
            for (Eigen::Index r = 0; r < rows; ++r)
                out.row(r) = ((view.row(r) - mean_s).array() * inv_std.array()).matrix();
            if (update_running)
                for (Eigen::Index c = 0; c < channels_; ++c) {
                    const double unbiased = ss(c) / static_cast<double>(rows - 1);
                    running_mean_(c) = static_cast<S>(momentum_ * running_mean_(c) + (1.0 - momentum_) * mean(c));
                    running_var_(c) = static_cast<S>(momentum_ * running_var_(c) + (1.0 - momentum_) * unbiased);
                }
        } else {
            for (Eigen::Index c = 0; c < channels_; ++c) {
                inv_std(c) = static_cast<S>(1.0 / std::sqrt(static_cast<double>(running_var_(c)) + eps_));
                out.col(c) = (view.col(c).array() - running_mean_(c)) * inv_std(c);
            }
        }
        if (cache) {
            cache->normalized = y;
            cache->inv_std = inv_std;
            cache->mode = mode;
        }
        if (affine_) {
            out.array().rowwise() *= gamma_.value.row(0).array();
            out.array().rowwise() += beta_.value.row(0).array();
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& dy, const Cache& cache) {
        const Eigen::Index rows = dy.size() / channels_;
        Eigen::Map<const Mat<S>> g(dy.data(), rows, channels_);
        Eigen::Map<const Mat<S>> xhat(cache.normalized.data(), rows, channels_);
        Mat<S> dx(dy.rows(), dy.cols());
        Eigen::Map<Mat<S>> out(dx.data(), rows, channels_);

        Mat<S> dxhat = g;
        if (affine_) {
            gamma_.grad.row(0) += (g.array() * xhat.array()).colwise().sum().matrix();
            beta_.grad.row(0) += g.colwise().sum();
            dxhat.array().rowwise() *= gamma_.value.row(0).array();
        }
        if (cache.mode == Mode::eval) {
            out = dxhat.array().rowwise() * cache.inv_std.array();
            return dx;
        }
        Eigen::Array<double, 1, Eigen::Dynamic> sd = Eigen::Array<double, 1, Eigen::Dynamic>::Zero(channels_);
        Eigen::Array<double, 1, Eigen::Dynamic> sdx = sd;
        for (Eigen::Index r = 0; r < rows; ++r) {
            sd += dxhat.row(r).array().template cast<double>();
            sdx += (dxhat.row(r).array() * xhat.row(r).array()).template cast<double>();
        }
        const double m = static_cast<double>(rows);
        const RowVec<S> mean_d = (sd / m).template cast<S>().matrix();
        const RowVec<S> mean_dx = (sdx / m).template cast<S>().matrix();
        for (Eigen::Index r = 0; r < rows; ++r)
            out.row(r) = ((dxhat.row(r).array() - mean_d.array() - xhat.row(r).array() * mean_dx.array()) * cache.inv_std.array()).matrix();
        return dx;
    }

    void collect(std::vector<Param<S>*>& out) {
        if (!affine_) return;
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }

private:
    Eigen::Index channels_ = 0;
    bool affine_ = true;
    double momentum_ = 0.9;
    double eps_ = 1e-5;
    Param<S> gamma_;
    Param<S> beta_;
    RowVec<S> running_mean_;
    RowVec<S> running_var_;
};

template <typename S>
class LeakyRelu {
public:
    struct Cache {
        Mat<S> input;
    };

    explicit LeakyRelu(double slope = 0.01) : slope_(static_cast<S>(slope)) {}

    Mat<S> forward(const Mat<S>& x, Cache* cache) const {
        if (cache) cache->input = x;
        return (x.array() > S(0)).select(x, slope_ * x);
    }

    Mat<S> backward(const Mat<S>& dy, const Cache& cache) const {
        return (cache.input.array() > S(0)).select(dy, slope_ * dy);
    }

    double slope() const { return static_cast<double>(slope_); }

private:
    S slope_;
};

template <typename S>
class Sigmoid {
public:
    struct Cache {
        Mat<S> output;
    };

    Mat<S> forward(const Mat<S>& x, Cache* cache) const {
        Mat<S> y = x.unaryExpr([](S v) {
            // split by sign so exp never overflows
            return v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
        });
        if (cache) cache->output = y;
        return y;
    }

    Mat<S> backward(const Mat<S>& dy, const Cache& cache) const {
        return (dy.array() * cache.output.array() * (S(1) - cache.output.array())).matrix();
    }
};

/// Adam with bias correction. Moments are allocated lazily per parameter.
template <typename S>
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Param<S>*>& params) {
        if (m_.size() != params.size()) {
            m_.clear();
            v_.clear();
            for (auto* p : params) {
                m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
                v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        const S step = static_cast<S>(lr_ / c1);
        const S sc2 = static_cast<S>(1.0 / std::sqrt(c2));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& g = params[i]->grad;
            m_[i] = static_cast<S>(beta1_) * m_[i] + static_cast<S>(1.0 - beta1_) * g;
            v_[i] = static_cast<S>(beta2_) * v_[i] + static_cast<S>(1.0 - beta2_) * g.cwiseAbs2();
            params[i]->value.array() -=
                step * m_[i].array() / (v_[i].array().sqrt() * sc2 + static_cast<S>(eps_));
        }
    }

    double learning_rate() const { return lr_; }
    std::uint64_t steps() const { return t_; }
    std::vector<Mat<S>>& first_moments() { return m_; }
    std::vector<Mat<S>>& second_moments() { return v_; }
    void set_steps(std::uint64_t t) { t_ = t; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Mat<S>> m_, v_;
};

template <typename S>
void zero_grad(const std::vector<Param<S>*>& params) {
    for (auto* p : params) p->grad.setZero();
}

} // namespace dimdm::nn
