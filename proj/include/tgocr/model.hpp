#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tgocr/layers.hpp"
#include "tgocr/optim.hpp"

namespace tgocr {

// Ordered layer list plus architecture metadata. Shape compatibility across
// adjacent layers is validated at construction by walking the per-sample
// shape through every layer; the final layer must be a softmax whose width
// equals the class count.
template <class T>
class SequentialModel {
public:
    SequentialModel(std::string tag, Shape input_shape, int classes, std::uint64_t seed,
                    std::vector<std::unique_ptr<Layer<T>>> layers)
        : tag_(std::move(tag)),
          input_shape_(std::move(input_shape)),
          classes_(classes),
          seed_(seed),
          layers_(std::move(layers)) {
        if (layers_.empty()) {
            throw ConfigError("model needs at least one layer");
        }
        Shape s = input_shape_;
        for (const auto& layer : layers_) {
            s = layer->output_shape(s); // throws ShapeError on incompatibility
        }
        if (layers_.back()->kind() != "softmax") {
            throw ConfigError("model must end with a softmax output layer");
        }
        if (s.rank() != 1 || s[0] != classes_) {
            throw ShapeError("model output shape " + s.str() + " does not match class count " +
                             std::to_string(classes_));
        }
    }

    const std::string& tag() const { return tag_; }
    const Shape& input_shape() const { return input_shape_; }
    int classes() const { return classes_; }
    std::uint64_t seed() const { return seed_; }

    std::size_t layer_count() const { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }
    const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }

    index_t param_count() const {
        index_t total = 0;
        for (const auto& layer : layers_) {
            total += layer->param_count();
        }
        return total;
    }

    std::vector<ParamSet<T>*> param_sets() {
        std::vector<ParamSet<T>*> sets;
        for (auto& layer : layers_) {
            if (auto* p = layer->params()) {
                sets.push_back(p);
            }
        }
        return sets;
    }

    // Runs every layer up to (not including) the softmax output. Training
    // pairs this with the fused softmax cross-entropy on the logits.
    Tensor<T> forward_logits(const Tensor<T>& input, Mode mode) {
        Tensor<T> x = input;
        for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
            x = layers_[i]->forward(x, mode);
        }
        return x;
    }

    // Full forward including the softmax output; rows are probabilities.
    Tensor<T> forward(const Tensor<T>& input, Mode mode = Mode::eval) {
        return layers_.back()->forward(forward_logits(input, mode), mode);
    }

    // Backpropagates a gradient with respect to the logits through every
    // layer below the softmax output.
    Tensor<T> backward(const Tensor<T>& grad_logits) {
        Tensor<T> g = grad_logits;
        for (std::size_t i = layers_.size() - 1; i-- > 0;) {
            g = layers_[i]->backward(g);
        }
        return g;
    }

    struct LayerInfo {
        std::string kind;
        Shape output_shape; // per sample
        index_t params;
    };

    std::vector<LayerInfo> describe() const {
        std::vector<LayerInfo> rows;
        Shape s = input_shape_;
        for (const auto& layer : layers_) {
            s = layer->output_shape(s);
            rows.push_back({layer->kind(), s, layer->param_count()});
        }
        return rows;
    }

private:
    std::string tag_;
    Shape input_shape_;
    int classes_;
    std::uint64_t seed_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

namespace detail {

// Checked totals for the two reference architectures: the dense stack
// (1024*512+512) + (512*128+128) + (128*10+10) and the convolutional stack
// 30*(1*25+1) + 15*(30*9+1) + (540*128+128) + (128*10+10).
inline constexpr index_t kMlpParamCount = 591754;
inline constexpr index_t kCnnParamCount = 75383;

} // namespace detail

// 1024-512-128-10 fully connected classifier with ReLU activations and 25%
// dropout after each hidden activation.
template <class T = float>
SequentialModel<T> build_mlp(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::unique_ptr<Layer<T>>> layers;
    layers.push_back(std::make_unique<FlattenLayer<T>>());
    layers.push_back(std::make_unique<DenseLayer<T>>(1024, 512, rng));
    layers.push_back(std::make_unique<ReluLayer<T>>());
    layers.push_back(std::make_unique<DropoutLayer<T>>(0.25, derive_seed(seed, 100)));
    layers.push_back(std::make_unique<DenseLayer<T>>(512, 128, rng));
    layers.push_back(std::make_unique<ReluLayer<T>>());
    layers.push_back(std::make_unique<DropoutLayer<T>>(0.25, derive_seed(seed, 101)));
    layers.push_back(std::make_unique<DenseLayer<T>>(128, 10, rng));
    layers.push_back(std::make_unique<SoftmaxLayer<T>>());
    SequentialModel<T> model("mlp", Shape{1, 32, 32}, 10, seed, std::move(layers));
    if (model.param_count() != detail::kMlpParamCount) {
        throw Error("mlp parameter count drifted from " + std::to_string(detail::kMlpParamCount));
    }
    return model;
}

// Convolutional classifier: 30 5x5 maps, 2x2 pool, 15 3x3 maps, 2x2 pool,
// 25% dropout, flatten to 540, dense 128, 50% dropout, dense 10, softmax.
template <class T = float>
SequentialModel<T> build_cnn(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::unique_ptr<Layer<T>>> layers;
    layers.push_back(std::make_unique<Conv2dLayer<T>>(1, 30, 5, rng));
    layers.push_back(std::make_unique<ReluLayer<T>>());
    layers.push_back(std::make_unique<MaxPool2x2Layer<T>>());
    layers.push_back(std::make_unique<Conv2dLayer<T>>(30, 15, 3, rng));
    layers.push_back(std::make_unique<ReluLayer<T>>());
    layers.push_back(std::make_unique<MaxPool2x2Layer<T>>());
    layers.push_back(std::make_unique<DropoutLayer<T>>(0.25, derive_seed(seed, 100)));
    layers.push_back(std::make_unique<FlattenLayer<T>>());
    layers.push_back(std::make_unique<DenseLayer<T>>(540, 128, rng));
    layers.push_back(std::make_unique<ReluLayer<T>>());
    layers.push_back(std::make_unique<DropoutLayer<T>>(0.50, derive_seed(seed, 101)));
    layers.push_back(std::make_unique<DenseLayer<T>>(128, 10, rng));
    layers.push_back(std::make_unique<SoftmaxLayer<T>>());
    SequentialModel<T> model("cnn", Shape{1, 32, 32}, 10, seed, std::move(layers));
    if (model.param_count() != detail::kCnnParamCount) {
        throw Error("cnn parameter count drifted from " + std::to_string(detail::kCnnParamCount));
    }
    return model;
}

// Reduced architectures for finite-difference verification: 8x8 inputs, 2
// and 3 feature maps, dense widths 12 and 10, dropout disabled (rate 0).
// Small enough that differencing every parameter stays cheap while running
// the exact same layer kernels as the full models.
template <class T = double>
SequentialModel<T> build_small_mlp(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::unique_ptr<Layer<T>>> layers;
    layers.push_back(std::make_unique<FlattenLayer<T>>());
    layers.push_back(std::make_unique<DenseLayer<T>>(64, 12, rng));
    layers.push_back(std::make_unique<ReluLayer<T>>());
    layers.push_back(std::make_unique<DropoutLayer<T>>(0.0, derive_seed(seed, 100)));
    layers.push_back(std::make_unique<DenseLayer<T>>(12, 10, rng));
    layers.push_back(std::make_unique<SoftmaxLayer<T>>());
    return SequentialModel<T>("mlp-small", Shape{1, 8, 8}, 10, seed, std::move(layers));
}

template <class T = double>
SequentialModel<T> build_small_cnn(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::unique_ptr<Layer<T>>> layers;
    layers.push_back(std::make_unique<Conv2dLayer<T>>(1, 2, 3, rng));
    layers.push_back(std::make_unique<ReluLayer<T>>());
    layers.push_back(std::make_unique<Conv2dLayer<T>>(2, 3, 3, rng));
    layers.push_back(std::make_unique<ReluLayer<T>>());
    layers.push_back(std::make_unique<MaxPool2x2Layer<T>>());
    layers.push_back(std::make_unique<DropoutLayer<T>>(0.0, derive_seed(seed, 100)));
    layers.push_back(std::make_unique<FlattenLayer<T>>());
    layers.push_back(std::make_unique<DenseLayer<T>>(12, 12, rng));
    layers.push_back(std::make_unique<ReluLayer<T>>());
    layers.push_back(std::make_unique<DenseLayer<T>>(12, 10, rng));
    layers.push_back(std::make_unique<SoftmaxLayer<T>>());
    return SequentialModel<T>("cnn-small", Shape{1, 8, 8}, 10, seed, std::move(layers));
}

} // namespace tgocr
