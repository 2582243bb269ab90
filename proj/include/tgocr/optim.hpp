#pragma once

#include <cmath>
#include <string>

#include "tgocr/layers.hpp"
#include "tgocr/tensor.hpp"

namespace tgocr {

struct AdadeltaConfig {
    double learning_rate = 1.0;
    double rho = 0.95;
    double epsilon = 1e-6;

    void validate() const {
        if (!(rho > 0.0 && rho < 1.0)) {
            throw ConfigError("adadelta rho must lie in (0, 1), got " + std::to_string(rho));
        }
        if (!(epsilon > 0.0)) {
            throw ConfigError("adadelta epsilon must be positive, got " + std::to_string(epsilon));
        }
    }
};

template <class T>
struct LossResult {
    double mean_loss = 0.0;   // batch mean of -ln p(true class)
    Tensor<T> grad_logits;    // (softmax(logits) - targets) / batch
};

// Softmax fused with categorical cross-entropy. Targets must be one-hot
// rows; probabilities are clamped below at 1e-12 before the log so the loss
// stays finite even for confidently wrong predictions.
template <class T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets) {
    if (logits.shape().rank() != 2 || targets.shape() != logits.shape()) {
        throw ShapeError("softmax_cross_entropy expects matching rank-2 logits/targets, got " +
                         logits.shape().str() + " and " + targets.shape().str());
    }
    const index_t batch = logits.shape()[0];
    const index_t classes = logits.shape()[1];

    LossResult<T> result;
    result.grad_logits = Tensor<T>(logits.shape());
    double total = 0.0;
    const T inv_batch = static_cast<T>(1.0 / static_cast<double>(batch));

    for (index_t i = 0; i < batch; ++i) {
        index_t true_class = -1;
        for (index_t j = 0; j < classes; ++j) {
            const T t = targets(i, j);
            if (t == T{1} && true_class < 0) {
                true_class = j;
            } else if (t != T{0}) {
                throw DataError("target row " + std::to_string(i) + " is not one-hot");
            }
        }
        if (true_class < 0) {
            throw DataError("target row " + std::to_string(i) + " is not one-hot");
        }

        detail::softmax_row_core(logits.data() + i * classes,
                                 result.grad_logits.data() + i * classes, classes);
        const double p_true =
            std::max(static_cast<double>(result.grad_logits(i, true_class)), 1e-12);
        total += -std::log(p_true);
        for (index_t j = 0; j < classes; ++j) {
            result.grad_logits(i, j) =
                (result.grad_logits(i, j) - targets(i, j)) * inv_batch;
        }
    }
    result.mean_loss = total / static_cast<double>(batch);
    return result;
}

// One Adadelta update, in place, per parameter element:
//   accum_g <- rho * accum_g + (1 - rho) * g^2
//   delta   <- -(sqrt(accum_u + eps) / sqrt(accum_g + eps)) * g
//   accum_u <- rho * accum_u + (1 - rho) * delta^2
//   param   <- param + lr * delta
template <class T>
void adadelta_step(ParamSet<T>& ps, const AdadeltaConfig& cfg) {
    cfg.validate();
    if (!ps.grads_ready) {
        throw StateError("adadelta_step before gradients were populated by a backward pass");
    }
    const T rho = static_cast<T>(cfg.rho);
    const T one_minus_rho = static_cast<T>(1.0 - cfg.rho);
    const T eps = static_cast<T>(cfg.epsilon);
    const T lr = static_cast<T>(cfg.learning_rate);

    auto update = [&](Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& accum_g,
                      Tensor<T>& accum_u) {
        for (index_t i = 0; i < param.size(); ++i) {
            const T g = grad(i);
            accum_g(i) = rho * accum_g(i) + one_minus_rho * g * g;
            const T delta = -std::sqrt(accum_u(i) + eps) / std::sqrt(accum_g(i) + eps) * g;
            accum_u(i) = rho * accum_u(i) + one_minus_rho * delta * delta;
            param(i) += lr * delta;
        }
    };
    update(ps.weights, ps.grad_weights, ps.accum_grad_w, ps.accum_update_w);
    update(ps.bias, ps.grad_bias, ps.accum_grad_b, ps.accum_update_b);
}

} // namespace tgocr
