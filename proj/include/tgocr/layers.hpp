#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tgocr/rng.hpp"
#include "tgocr/tensor.hpp"

namespace tgocr {

enum class Mode { train, eval };

// Parameters of one layer together with gradient buffers and the Adadelta
// state (decayed averages of squared gradients and squared updates). Gradient
// buffers always shape-match their parameters.
template <class T>
struct ParamSet {
    Tensor<T> weights;
    Tensor<T> bias;
    Tensor<T> grad_weights;
    Tensor<T> grad_bias;
    Tensor<T> accum_grad_w;
    Tensor<T> accum_update_w;
    Tensor<T> accum_grad_b;
    Tensor<T> accum_update_b;
    bool grads_ready = false;

    void allocate(Shape weight_shape, Shape bias_shape) {
        weights = Tensor<T>(weight_shape);
        bias = Tensor<T>(bias_shape);
        grad_weights = Tensor<T>(weight_shape);
        grad_bias = Tensor<T>(bias_shape);
        accum_grad_w = Tensor<T>(weight_shape);
        accum_update_w = Tensor<T>(weight_shape);
        accum_grad_b = Tensor<T>(bias_shape);
        accum_update_b = Tensor<T>(bias_shape);
    }
};

// Glorot-uniform fill: limit sqrt(6 / (fan_in + fan_out)), bias left at zero.
template <class T>
void glorot_uniform(Tensor<T>& weights, index_t fan_in, index_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : weights.values()) {
        v = static_cast<T>(rng.uniform(-limit, limit));
    }
}

// Uniform forward/backward contract for every layer of the two
// architectures. backward may only follow a train-mode forward with a
// matching shape; eval-mode forwards mutate nothing.
template <class T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    virtual Tensor<T> forward(const Tensor<T>& input, Mode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;
    virtual ParamSet<T>* params() { return nullptr; }
    const ParamSet<T>* params() const { return const_cast<Layer*>(this)->params(); }

    index_t param_count() const {
        const ParamSet<T>* p = params();
        return p ? p->weights.size() + p->bias.size() : 0;
    }

    // Per-sample output shape; throws ShapeError when the layer cannot accept
    // the given per-sample input shape.
    virtual Shape output_shape(const Shape& input) const = 0;
};

// ---------------------------------------------------------------------------
// Dense: y = x W^T + b with weights stored as (n_out, n_in)
// ---------------------------------------------------------------------------

template <class T>
class DenseLayer final : public Layer<T> {
public:
    DenseLayer(index_t n_in, index_t n_out) : n_in_(n_in), n_out_(n_out) {
        ps_.allocate(Shape{n_out, n_in}, Shape{n_out});
    }

    DenseLayer(index_t n_in, index_t n_out, Rng& rng) : DenseLayer(n_in, n_out) {
        glorot_uniform(ps_.weights, n_in, n_out, rng);
    }

    std::string kind() const override { return "dense"; }
    index_t fan_in() const { return n_in_; }
    index_t fan_out() const { return n_out_; }
    ParamSet<T>* params() override { return &ps_; }

    Shape output_shape(const Shape& input) const override {
        if (input.rank() != 1 || input[0] != n_in_) {
            throw ShapeError("dense layer expects width " + std::to_string(n_in_) + ", got " +
                             input.str());
        }
        return Shape{n_out_};
    }

    Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
        if (input.shape().rank() != 2 || input.shape()[1] != n_in_) {
            throw ShapeError("dense layer expects (batch, " + std::to_string(n_in_) + "), got " +
                             input.shape().str());
        }
        if (mode == Mode::train) {
            cached_input_ = input;
            has_cache_ = true;
        }
        Tensor<T> out = matmul(input, transpose(ps_.weights));
        const index_t batch = out.shape()[0];
        for (index_t i = 0; i < batch; ++i) {
            T* row = out.data() + i * n_out_;
            for (index_t j = 0; j < n_out_; ++j) {
                row[j] += ps_.bias(j);
            }
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_output) override {
        if (!has_cache_) {
            throw StateError("dense backward called without a train-mode forward");
        }
        if (grad_output.shape() != Shape{cached_input_.shape()[0], n_out_}) {
            throw ShapeError("dense grad_output shape " + grad_output.shape().str() +
                             " does not match forward batch");
        }
        ps_.grad_weights = matmul(transpose(grad_output), cached_input_);
        ps_.grad_bias = Tensor<T>(Shape{n_out_});
        const index_t batch = grad_output.shape()[0];
        for (index_t i = 0; i < batch; ++i) {
            const T* row = grad_output.data() + i * n_out_;
            for (index_t j = 0; j < n_out_; ++j) {
                ps_.grad_bias(j) += row[j];
            }
        }
        ps_.grads_ready = true;
        return matmul(grad_output, ps_.weights);
    }

private:
    index_t n_in_;
    index_t n_out_;
    ParamSet<T> ps_;
    Tensor<T> cached_input_;
    bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// Conv2d: valid cross-correlation, square kernels, stride 1
// ---------------------------------------------------------------------------

template <class T>
class Conv2dLayer final : public Layer<T> {
public:
    Conv2dLayer(index_t in_channels, index_t out_channels, index_t kernel)
        : in_ch_(in_channels), out_ch_(out_channels), k_(kernel) {
        ps_.allocate(Shape{out_ch_, in_ch_, k_, k_}, Shape{out_ch_});
    }

    Conv2dLayer(index_t in_channels, index_t out_channels, index_t kernel, Rng& rng)
        : Conv2dLayer(in_channels, out_channels, kernel) {
        glorot_uniform(ps_.weights, in_ch_ * k_ * k_, out_ch_ * k_ * k_, rng);
    }

    std::string kind() const override { return "conv"; }
    index_t in_channels() const { return in_ch_; }
    index_t out_channels() const { return out_ch_; }
    index_t kernel() const { return k_; }
    ParamSet<T>* params() override { return &ps_; }

    Shape output_shape(const Shape& input) const override {
        if (input.rank() != 3 || input[0] != in_ch_ || input[1] < k_ || input[2] < k_) {
            throw ShapeError("conv layer (" + std::to_string(in_ch_) + "->" +
                             std::to_string(out_ch_) + ", " + std::to_string(k_) + "x" +
                             std::to_string(k_) + ") cannot take input " + input.str());
        }
        return Shape{out_ch_, input[1] - k_ + 1, input[2] - k_ + 1};
    }

    Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
        check_batch_input(input);
        if (mode == Mode::train) {
            cached_input_ = input;
            has_cache_ = true;
        }
        const index_t B = input.shape()[0], H = input.shape()[2], W = input.shape()[3];
        const index_t OH = H - k_ + 1, OW = W - k_ + 1;
        Tensor<T> out(Shape{B, out_ch_, OH, OW});
        const index_t in_stride = in_ch_ * H * W;
        const index_t out_stride = out_ch_ * OH * OW;
        parallel_for(B, batch_grain(H, W), [&](index_t b0, index_t b1) {
            for (index_t b = b0; b < b1; ++b) {
                detail::conv2d_forward_core(input.data() + b * in_stride, in_ch_, H, W,
                                            ps_.weights.data(), out_ch_, k_, k_, ps_.bias.data(),
                                            out.data() + b * out_stride);
            }
        });
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_output) override {
        if (!has_cache_) {
            throw StateError("conv backward called without a train-mode forward");
        }
        const index_t B = cached_input_.shape()[0];
        const index_t H = cached_input_.shape()[2], W = cached_input_.shape()[3];
        const index_t OH = H - k_ + 1, OW = W - k_ + 1;
        if (grad_output.shape() != Shape{B, out_ch_, OH, OW}) {
            throw ShapeError("conv grad_output shape " + grad_output.shape().str() +
                             " does not match forward output");
        }
        Tensor<T> grad_input(cached_input_.shape());
        const index_t in_stride = in_ch_ * H * W;
        const index_t out_stride = out_ch_ * OH * OW;

        // Per-chunk weight/bias accumulators reduced in chunk order keep the
        // result independent of scheduling for a fixed thread cap.
        auto ranges = split_ranges(B, batch_grain(H, W));
        std::vector<Tensor<T>> gw(ranges.size(), Tensor<T>(ps_.weights.shape()));
        std::vector<Tensor<T>> gb(ranges.size(), Tensor<T>(ps_.bias.shape()));
        run_ranges(ranges, [&](std::size_t chunk, index_t b0, index_t b1) {
            for (index_t b = b0; b < b1; ++b) {
                const T* gout = grad_output.data() + b * out_stride;
                detail::conv2d_backward_input_core(gout, out_ch_, OH, OW, ps_.weights.data(),
                                                   in_ch_, k_, k_, grad_input.data() + b * in_stride,
                                                   H, W);
                detail::conv2d_backward_kernels_core(cached_input_.data() + b * in_stride, in_ch_,
                                                     H, W, gout, out_ch_, OH, OW, k_, k_,
                                                     gw[chunk].data());
                detail::conv2d_backward_bias_core(gout, out_ch_, OH, OW, gb[chunk].data());
            }
        });
        ps_.grad_weights = Tensor<T>(ps_.weights.shape());
        ps_.grad_bias = Tensor<T>(ps_.bias.shape());
        for (std::size_t c = 0; c < ranges.size(); ++c) {
            for (index_t i = 0; i < ps_.grad_weights.size(); ++i) {
                ps_.grad_weights(i) += gw[c](i);
            }
            for (index_t i = 0; i < ps_.grad_bias.size(); ++i) {
                ps_.grad_bias(i) += gb[c](i);
            }
        }
        ps_.grads_ready = true;
        return grad_input;
    }

private:
    void check_batch_input(const Tensor<T>& input) const {
        if (input.shape().rank() != 4 || input.shape()[1] != in_ch_ || input.shape()[2] < k_ ||
            input.shape()[3] < k_) {
            throw ShapeError("conv layer expects (batch, " + std::to_string(in_ch_) +
                             ", H, W) with H, W >= " + std::to_string(k_) + ", got " +
                             input.shape().str());
        }
    }

    index_t batch_grain(index_t H, index_t W) const {
        const index_t per_sample = in_ch_ * out_ch_ * k_ * k_ * H * W;
        return std::max<index_t>(1, (index_t{1} << 16) / std::max<index_t>(1, per_sample));
    }

    index_t in_ch_;
    index_t out_ch_;
    index_t k_;
    ParamSet<T> ps_;
    Tensor<T> cached_input_;
    bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// MaxPool 2x2, stride 2
// ---------------------------------------------------------------------------

template <class T>
class MaxPool2x2Layer final : public Layer<T> {
public:
    std::string kind() const override { return "maxpool"; }

    Shape output_shape(const Shape& input) const override {
        if (input.rank() != 3 || input[1] % 2 != 0 || input[2] % 2 != 0) {
            throw ShapeError("maxpool layer needs (C, H, W) with even H and W, got " + input.str());
        }
        return Shape{input[0], input[1] / 2, input[2] / 2};
    }

    Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
        if (input.shape().rank() != 4 || input.shape()[2] % 2 != 0 || input.shape()[3] % 2 != 0) {
            throw ShapeError("maxpool layer expects (batch, C, H, W) with even H and W, got " +
                             input.shape().str());
        }
        const index_t B = input.shape()[0], C = input.shape()[1];
        const index_t H = input.shape()[2], W = input.shape()[3];
        Tensor<T> out(Shape{B, C, H / 2, W / 2});
        Tensor<std::int32_t> argmax(out.shape());
        const index_t in_stride = C * H * W;
        const index_t out_stride = C * (H / 2) * (W / 2);
        for (index_t b = 0; b < B; ++b) {
            detail::maxpool2x2_core(input.data() + b * in_stride, C, H, W,
                                    out.data() + b * out_stride,
                                    argmax.data() + b * out_stride);
        }
        if (mode == Mode::train) {
            cached_argmax_ = std::move(argmax);
            cached_input_shape_ = input.shape();
            has_cache_ = true;
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_output) override {
        if (!has_cache_) {
            throw StateError("maxpool backward called without a train-mode forward");
        }
        if (grad_output.shape() != cached_argmax_.shape()) {
            throw ShapeError("maxpool grad_output shape " + grad_output.shape().str() +
                             " does not match forward output " + cached_argmax_.shape().str());
        }
        const index_t B = cached_input_shape_[0];
        const index_t in_stride = cached_input_shape_[1] * cached_input_shape_[2] *
                                  cached_input_shape_[3];
        const index_t out_stride = grad_output.size() / B;
        Tensor<T> gin(cached_input_shape_);
        for (index_t b = 0; b < B; ++b) {
            detail::maxpool2x2_backward_core(cached_argmax_.data() + b * out_stride,
                                             grad_output.data() + b * out_stride, out_stride,
                                             gin.data() + b * in_stride);
        }
        return gin;
    }

private:
    Tensor<std::int32_t> cached_argmax_;
    Shape cached_input_shape_;
    bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// Dropout, inverted: train-time survivors scale by 1/(1-rate), eval is the
// identity. Each layer owns a seeded stream advanced once per train forward.
// ---------------------------------------------------------------------------

template <class T>
class DropoutLayer final : public Layer<T> {
public:
    DropoutLayer(double rate, std::uint64_t stream_seed) : rate_(rate), stream_seed_(stream_seed) {
        if (!(rate >= 0.0 && rate < 1.0)) {
            throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
        }
    }

    std::string kind() const override { return "dropout"; }
    double rate() const { return rate_; }

    Shape output_shape(const Shape& input) const override { return input; }

    Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
        if (mode == Mode::eval) {
            return input;
        }
        if (rate_ == 0.0) {
            has_cache_ = true;
            identity_ = true;
            return input;
        }
        Rng rng(derive_seed(stream_seed_, calls_++));
        const T scale = static_cast<T>(1.0 / (1.0 - rate_));
        mask_ = Tensor<T>(input.shape());
        Tensor<T> out(input.shape());
        for (index_t i = 0; i < input.size(); ++i) {
            const bool keep = rng.uniform() >= rate_;
            mask_(i) = keep ? T{1} : T{0};
            out(i) = keep ? input(i) * scale : T{};
        }
        has_cache_ = true;
        identity_ = false;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_output) override {
        if (!has_cache_) {
            throw StateError("dropout backward called without a train-mode forward");
        }
        if (identity_) {
            return grad_output;
        }
        if (grad_output.shape() != mask_.shape()) {
            throw ShapeError("dropout grad_output shape " + grad_output.shape().str() +
                             " does not match forward input " + mask_.shape().str());
        }
        const T scale = static_cast<T>(1.0 / (1.0 - rate_));
        Tensor<T> gin(grad_output.shape());
        for (index_t i = 0; i < gin.size(); ++i) {
            gin(i) = grad_output(i) * mask_(i) * scale;
        }
        return gin;
    }

    const Tensor<T>& last_mask() const { return mask_; }

private:
    double rate_;
    std::uint64_t stream_seed_;
    std::uint64_t calls_ = 0;
    Tensor<T> mask_;
    bool has_cache_ = false;
    bool identity_ = false;
};

// ---------------------------------------------------------------------------
// Flatten: (batch, C, H, W) -> (batch, C*H*W), row-major
// ---------------------------------------------------------------------------

template <class T>
class FlattenLayer final : public Layer<T> {
public:
    std::string kind() const override { return "flatten"; }

    Shape output_shape(const Shape& input) const override { return Shape{input.elements()}; }

    Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
        if (input.shape().rank() < 2) {
            throw ShapeError("flatten expects a batched tensor, got " + input.shape().str());
        }
        if (mode == Mode::train) {
            cached_shape_ = input.shape();
            has_cache_ = true;
        }
        const index_t B = input.shape()[0];
        return input.reshaped(Shape{B, input.size() / B});
    }

    Tensor<T> backward(const Tensor<T>& grad_output) override {
        if (!has_cache_) {
            throw StateError("flatten backward called without a train-mode forward");
        }
        return grad_output.reshaped(cached_shape_);
    }

private:
    Shape cached_shape_;
    bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <class T>
class ReluLayer final : public Layer<T> {
public:
    std::string kind() const override { return "relu"; }

    Shape output_shape(const Shape& input) const override { return input; }

    Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
        if (mode == Mode::train) {
            cached_input_ = input;
            has_cache_ = true;
        }
        return relu(input);
    }

    Tensor<T> backward(const Tensor<T>& grad_output) override {
        if (!has_cache_) {
            throw StateError("relu backward called without a train-mode forward");
        }
        return relu_backward(cached_input_, grad_output);
    }

private:
    Tensor<T> cached_input_;
    bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// Softmax output activation. Training uses the fused loss on logits instead;
// this layer exists for inference and architecture description.
// ---------------------------------------------------------------------------

template <class T>
class SoftmaxLayer final : public Layer<T> {
public:
    std::string kind() const override { return "softmax"; }

    Shape output_shape(const Shape& input) const override {
        if (input.rank() != 1) {
            throw ShapeError("softmax layer expects a rank-1 per-sample input, got " + input.str());
        }
        return input;
    }

    Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
        Tensor<T> p = softmax_rows(input);
        if (mode == Mode::train) {
            cached_output_ = p;
            has_cache_ = true;
        }
        return p;
    }

    Tensor<T> backward(const Tensor<T>& grad_output) override {
        if (!has_cache_) {
            throw StateError("softmax backward called without a train-mode forward");
        }
        if (grad_output.shape() != cached_output_.shape()) {
            throw ShapeError("softmax grad_output shape mismatch");
        }
        // J^T g with J = diag(p) - p p^T, row by row
        const index_t rows = cached_output_.shape()[0], cols = cached_output_.shape()[1];
        Tensor<T> gin(grad_output.shape());
        for (index_t i = 0; i < rows; ++i) {
            T dot{};
            for (index_t j = 0; j < cols; ++j) {
                dot += grad_output(i, j) * cached_output_(i, j);
            }
            for (index_t j = 0; j < cols; ++j) {
                gin(i, j) = cached_output_(i, j) * (grad_output(i, j) - dot);
            }
        }
        return gin;
    }

private:
    Tensor<T> cached_output_;
    bool has_cache_ = false;
};

} // namespace tgocr
