#pragma once

#include "hns/tensor.hpp"

#include <cstddef>
#include <span>

namespace hns {

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// out[n,o] = sum_i x[n,i] * W[i,o] + b[o]
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b);

/// Cross-correlation. x: [N,C,H,W], kernel: [F,C,kh,kw], bias: [F] or empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Conv2dOptions opts = {});

/// Transposed convolution (the adjoint of conv2d w.r.t. its input).
/// x: [N,C,H,W], kernel: [C,F,kh,kw], bias: [F] or empty.
/// Output extent per axis: stride*(in-1) + k - 2*padding.
template <typename T>
Tensor<T> upconv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                   Conv2dOptions opts = {});

/// Non-overlapping max pooling with window == stride.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t window);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& z);

template <typename T>
Tensor<T> relu(const Tensor<T>& z);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// x: [N,C,H,W] times m: [N,1,H,W], m broadcast across channels.
template <typename T>
Tensor<T> mul_channel_broadcast(const Tensor<T>& x, const Tensor<T>& m);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Mean over the batch of -log softmax(logits)[target].
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

/// Per-sample cross-entropy values; no graph is recorded.
template <typename T>
std::vector<T> cross_entropy_per_sample(const Tensor<T>& logits, std::span<const int> targets);

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target);

/// Numerically stable logistic function on a single value.
template <typename T>
T stable_sigmoid(T z);

}  // namespace hns
