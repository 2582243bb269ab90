#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tgocr/error.hpp"
#include "tgocr/parallel.hpp"

namespace tgocr {

using index_t = std::int64_t;

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<index_t> dims) : dims_(dims) {}
    explicit Shape(std::vector<index_t> dims) : dims_(std::move(dims)) {}

    int rank() const { return static_cast<int>(dims_.size()); }
    index_t operator[](int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
    const std::vector<index_t>& dims() const { return dims_; }

    // Element count without validation; only meaningful on a checked shape.
    index_t elements() const {
        index_t n = 1;
        for (index_t d : dims_) n *= d;
        return n;
    }

    // Validates extents (>= 1, product fits the index type) and returns the
    // element count.
    index_t checked_elements() const {
        if (dims_.empty()) {
            throw SizeError("shape must have at least one extent");
        }
        index_t n = 1;
        for (index_t d : dims_) {
            if (d < 1) {
                throw SizeError("shape extent must be >= 1, got " + std::to_string(d) +
                                " in " + str());
            }
            if (n > std::numeric_limits<index_t>::max() / d) {
                throw SizeError("element count overflows in shape " + str());
            }
            n *= d;
        }
        return n;
    }

    bool operator==(const Shape&) const = default;

    std::string str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(dims_[i]);
        }
        s += ")";
        return s;
    }

private:
    std::vector<index_t> dims_;
};

// ---------------------------------------------------------------------------
// Tensor: dense row-major storage (last index fastest)
// ---------------------------------------------------------------------------

template <class T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{})
        : shape_(std::move(shape)),
          data_(static_cast<std::size_t>(shape_.checked_elements()), fill) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (shape_.checked_elements() != static_cast<index_t>(data_.size())) {
            throw SizeError("value count " + std::to_string(data_.size()) +
                            " does not match shape " + shape_.str());
        }
    }

    const Shape& shape() const { return shape_; }
    index_t size() const { return static_cast<index_t>(data_.size()); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    T& operator()(index_t i) { return data_[static_cast<std::size_t>(i)]; }
    T operator()(index_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& operator()(index_t i, index_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    T operator()(index_t i, index_t j) const {
        return data_[static_cast<std::size_t>(i * shape_[1] + j)];
    }

    T& operator()(index_t i, index_t j, index_t k) {
        return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    T operator()(index_t i, index_t j, index_t k) const {
        return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }

    T& operator()(index_t i, index_t j, index_t k, index_t l) {
        return data_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    T operator()(index_t i, index_t j, index_t k, index_t l) const {
        return data_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    // Same storage under a new shape with equal element count.
    Tensor reshaped(Shape s) const& {
        if (s.checked_elements() != size()) {
            throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
        }
        Tensor out;
        out.shape_ = std::move(s);
        out.data_ = data_;
        return out;
    }

    Tensor reshaped(Shape s) && {
        if (s.checked_elements() != size()) {
            throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
        }
        Tensor out;
        out.shape_ = std::move(s);
        out.data_ = std::move(data_);
        return out;
    }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <class T>
Tensor<T> tensor_new(Shape shape, T fill) {
    return Tensor<T>(std::move(shape), fill);
}

// ---------------------------------------------------------------------------
// Raw-pointer kernels. The public tensor operations below wrap these; layer
// code reuses them directly on per-sample slices of batch tensors.
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void matmul_core(const T* a, const T* b, T* c, index_t m, index_t k, index_t n) {
    std::fill(c, c + m * n, T{});
    const index_t grain = std::max<index_t>(1, (index_t{1} << 16) / std::max<index_t>(1, k * n));
    parallel_for(m, grain, [&](index_t r0, index_t r1) {
        for (index_t i = r0; i < r1; ++i) {
            const T* arow = a + i * k;
            T* crow = c + i * n;
            for (index_t p = 0; p < k; ++p) {
                const T av = arow[p];
                const T* brow = b + p * n;
                for (index_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    });
}

// valid cross-correlation: out[o][y][x] = bias[o] + sum_{c,r,s} in[c][y+r][x+s] * ker[o][c][r][s]
template <class T>
void conv2d_forward_core(const T* in, index_t C, index_t H, index_t W, const T* ker, index_t O,
                         index_t kh, index_t kw, const T* bias, T* out) {
    const index_t OH = H - kh + 1;
    const index_t OW = W - kw + 1;
    for (index_t o = 0; o < O; ++o) {
        T* oplane = out + o * OH * OW;
        std::fill(oplane, oplane + OH * OW, bias ? bias[o] : T{});
        for (index_t c = 0; c < C; ++c) {
            const T* iplane = in + c * H * W;
            const T* kplane = ker + (o * C + c) * kh * kw;
            for (index_t r = 0; r < kh; ++r) {
                for (index_t s = 0; s < kw; ++s) {
                    const T kv = kplane[r * kw + s];
                    for (index_t y = 0; y < OH; ++y) {
                        const T* irow = iplane + (y + r) * W + s;
                        T* orow = oplane + y * OW;
                        for (index_t x = 0; x < OW; ++x) {
                            orow[x] += kv * irow[x];
                        }
                    }
                }
            }
        }
    }
}

// gin[c][y+r][x+s] += gout[o][y][x] * ker[o][c][r][s]; gin must be zeroed by the caller
template <class T>
void conv2d_backward_input_core(const T* gout, index_t O, index_t OH, index_t OW, const T* ker,
                                index_t C, index_t kh, index_t kw, T* gin, index_t H, index_t W) {
    for (index_t o = 0; o < O; ++o) {
        const T* gplane = gout + o * OH * OW;
        for (index_t c = 0; c < C; ++c) {
            T* iplane = gin + c * H * W;
            const T* kplane = ker + (o * C + c) * kh * kw;
            for (index_t r = 0; r < kh; ++r) {
                for (index_t s = 0; s < kw; ++s) {
                    const T kv = kplane[r * kw + s];
                    for (index_t y = 0; y < OH; ++y) {
                        T* irow = iplane + (y + r) * W + s;
                        const T* grow = gplane + y * OW;
                        for (index_t x = 0; x < OW; ++x) {
                            irow[x] += kv * grow[x];
                        }
                    }
                }
            }
        }
    }
}

// gk[o][c][r][s] += sum_{y,x} gout[o][y][x] * in[c][y+r][x+s]; accumulates into gk
template <class T>
void conv2d_backward_kernels_core(const T* in, index_t C, index_t H, index_t W, const T* gout,
                                  index_t O, index_t OH, index_t OW, index_t kh, index_t kw,
                                  T* gk) {
    for (index_t o = 0; o < O; ++o) {
        const T* gplane = gout + o * OH * OW;
        for (index_t c = 0; c < C; ++c) {
            const T* iplane = in + c * H * W;
            T* kplane = gk + (o * C + c) * kh * kw;
            for (index_t r = 0; r < kh; ++r) {
                for (index_t s = 0; s < kw; ++s) {
                    T acc{};
                    for (index_t y = 0; y < OH; ++y) {
                        const T* irow = iplane + (y + r) * W + s;
                        const T* grow = gplane + y * OW;
                        for (index_t x = 0; x < OW; ++x) {
                            acc += grow[x] * irow[x];
                        }
                    }
                    kplane[r * kw + s] += acc;
                }
            }
        }
    }
}

// gb[o] += sum of the o-th grad plane
template <class T>
void conv2d_backward_bias_core(const T* gout, index_t O, index_t OH, index_t OW, T* gb) {
    for (index_t o = 0; o < O; ++o) {
        const T* gplane = gout + o * OH * OW;
        T acc{};
        for (index_t i = 0; i < OH * OW; ++i) {
            acc += gplane[i];
        }
        gb[o] += acc;
    }
}

// 2x2/stride-2 max pooling; argmax records the flat index of the winner
// within the input (first maximal element in row-major window order on ties).
template <class T>
void maxpool2x2_core(const T* in, index_t C, index_t H, index_t W, T* out, std::int32_t* argmax) {
    const index_t OH = H / 2;
    const index_t OW = W / 2;
    for (index_t c = 0; c < C; ++c) {
        const T* iplane = in + c * H * W;
        for (index_t y = 0; y < OH; ++y) {
            for (index_t x = 0; x < OW; ++x) {
                const index_t base = (2 * y) * W + 2 * x;
                index_t best = base;
                T bv = iplane[base];
                const index_t cand[3] = {base + 1, base + W, base + W + 1};
                for (index_t idx : cand) {
                    if (iplane[idx] > bv) {
                        bv = iplane[idx];
                        best = idx;
                    }
                }
                out[(c * OH + y) * OW + x] = bv;
                argmax[(c * OH + y) * OW + x] = static_cast<std::int32_t>(c * H * W + best);
            }
        }
    }
}

// routes grad only to the recorded argmax positions; gin zeroed by the caller
template <class T>
void maxpool2x2_backward_core(const std::int32_t* argmax, const T* gout, index_t n_out, T* gin) {
    for (index_t i = 0; i < n_out; ++i) {
        gin[argmax[i]] += gout[i];
    }
}

template <class T>
void relu_core(const T* in, T* out, index_t n) {
    for (index_t i = 0; i < n; ++i) {
        out[i] = in[i] > T{} ? in[i] : T{};
    }
}

// gradient defined as 0 at exactly 0
template <class T>
void relu_backward_core(const T* in, const T* gout, T* gin, index_t n) {
    for (index_t i = 0; i < n; ++i) {
        gin[i] = in[i] > T{} ? gout[i] : T{};
    }
}

// per-row softmax with max subtraction
template <class T>
void softmax_row_core(const T* in, T* out, index_t n) {
    T m = in[0];
    for (index_t i = 1; i < n; ++i) {
        m = std::max(m, in[i]);
    }
    T sum{};
    for (index_t i = 0; i < n; ++i) {
        out[i] = std::exp(in[i] - m);
        sum += out[i];
    }
    const T inv = T{1} / sum;
    for (index_t i = 0; i < n; ++i) {
        out[i] *= inv;
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2) {
        throw ShapeError("matmul expects rank-2 operands, got " + a.shape().str() + " and " +
                         b.shape().str());
    }
    const index_t m = a.shape()[0], k = a.shape()[1];
    const index_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw ShapeError("matmul inner dimensions disagree: " + a.shape().str() + " x " +
                         b.shape().str());
    }
    Tensor<T> c(Shape{m, n});
    detail::matmul_core(a.data(), b.data(), c.data(), m, k, n);
    return c;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.shape().rank() != 2) {
        throw ShapeError("transpose expects a rank-2 tensor, got " + a.shape().str());
    }
    const index_t m = a.shape()[0], n = a.shape()[1];
    Tensor<T> out(Shape{n, m});
    for (index_t i = 0; i < m; ++i) {
        for (index_t j = 0; j < n; ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

namespace detail {

template <class T>
void check_conv_shapes(const Shape& in, const Shape& ker, const Shape* bias) {
    if (in.rank() != 3) {
        throw ShapeError("conv2d input must be (C, H, W), got " + in.str());
    }
    if (ker.rank() != 4) {
        throw ShapeError("conv2d kernels must be (C_out, C_in, kH, kW), got " + ker.str());
    }
    if (ker[1] != in[0]) {
        throw ShapeError("conv2d channel mismatch: input " + in.str() + " vs kernels " + ker.str());
    }
    if (ker[2] > in[1] || ker[3] > in[2]) {
        throw ShapeError("conv2d kernel " + ker.str() + " larger than input " + in.str());
    }
    if (bias && (bias->rank() != 1 || (*bias)[0] != ker[0])) {
        throw ShapeError("conv2d bias must be (C_out), got " + bias->str());
    }
}

} // namespace detail

// Valid (no padding, stride 1) cross-correlation plus per-channel bias.
template <class T>
Tensor<T> conv2d_valid(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
    detail::check_conv_shapes<T>(input.shape(), kernels.shape(), &bias.shape());
    const index_t C = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
    const index_t O = kernels.shape()[0], kh = kernels.shape()[2], kw = kernels.shape()[3];
    Tensor<T> out(Shape{O, H - kh + 1, W - kw + 1});
    detail::conv2d_forward_core(input.data(), C, H, W, kernels.data(), O, kh, kw, bias.data(),
                                out.data());
    return out;
}

template <class T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> kernels;
    Tensor<T> bias;
};

// Analytic gradients of conv2d_valid with respect to input, kernels and bias.
template <class T>
ConvGrads<T> conv2d_valid_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                                   const Tensor<T>& grad_output) {
    detail::check_conv_shapes<T>(input.shape(), kernels.shape(), nullptr);
    const index_t C = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
    const index_t O = kernels.shape()[0], kh = kernels.shape()[2], kw = kernels.shape()[3];
    const Shape expect{O, H - kh + 1, W - kw + 1};
    if (grad_output.shape() != expect) {
        throw ShapeError("conv2d grad_output shape " + grad_output.shape().str() +
                         " does not match forward output " + expect.str());
    }
    ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(kernels.shape()), Tensor<T>(Shape{O})};
    detail::conv2d_backward_input_core(grad_output.data(), O, expect[1], expect[2], kernels.data(),
                                       C, kh, kw, g.input.data(), H, W);
    detail::conv2d_backward_kernels_core(input.data(), C, H, W, grad_output.data(), O, expect[1],
                                         expect[2], kh, kw, g.kernels.data());
    detail::conv2d_backward_bias_core(grad_output.data(), O, expect[1], expect[2], g.bias.data());
    return g;
}

template <class T>
struct PoolResult {
    Tensor<T> output;
    Tensor<std::int32_t> argmax; // flat input index of each window winner
};

template <class T>
PoolResult<T> maxpool2x2(const Tensor<T>& input) {
    if (input.shape().rank() != 3) {
        throw ShapeError("maxpool2x2 input must be (C, H, W), got " + input.shape().str());
    }
    const index_t C = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
    if (H % 2 != 0 || W % 2 != 0) {
        throw ShapeError("maxpool2x2 requires even spatial extents, got " + input.shape().str());
    }
    PoolResult<T> r{Tensor<T>(Shape{C, H / 2, W / 2}), Tensor<std::int32_t>(Shape{C, H / 2, W / 2})};
    detail::maxpool2x2_core(input.data(), C, H, W, r.output.data(), r.argmax.data());
    return r;
}

template <class T>
Tensor<T> maxpool2x2_backward(const Tensor<std::int32_t>& argmax, const Tensor<T>& grad_output) {
    if (argmax.shape() != grad_output.shape()) {
        throw ShapeError("maxpool2x2 argmax map " + argmax.shape().str() +
                         " does not match grad_output " + grad_output.shape().str());
    }
    if (argmax.shape().rank() != 3) {
        throw ShapeError("maxpool2x2 grad_output must be (C, H, W), got " +
                         grad_output.shape().str());
    }
    const index_t C = argmax.shape()[0], OH = argmax.shape()[1], OW = argmax.shape()[2];
    Tensor<T> gin(Shape{C, OH * 2, OW * 2});
    detail::maxpool2x2_backward_core(argmax.data(), grad_output.data(), argmax.size(), gin.data());
    return gin;
}

template <class T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    detail::relu_core(input.data(), out.data(), input.size());
    return out;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
    if (input.shape() != grad_output.shape()) {
        throw ShapeError("relu_backward shapes disagree: " + input.shape().str() + " vs " +
                         grad_output.shape().str());
    }
    Tensor<T> gin(input.shape());
    detail::relu_backward_core(input.data(), grad_output.data(), gin.data(), input.size());
    return gin;
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& input) {
    if (input.shape().rank() != 2) {
        throw ShapeError("softmax_rows expects a rank-2 tensor, got " + input.shape().str());
    }
    const index_t rows = input.shape()[0], cols = input.shape()[1];
    Tensor<T> out(input.shape());
    for (index_t i = 0; i < rows; ++i) {
        detail::softmax_row_core(input.data() + i * cols, out.data() + i * cols, cols);
    }
    return out;
}

} // namespace tgocr
