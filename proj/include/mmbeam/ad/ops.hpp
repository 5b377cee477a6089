#pragma once

#include <span>
#include <vector>

#include "mmbeam/ad/tape.hpp"
#include "mmbeam/common.hpp"

// Differentiable operations. Each op records its result on the tape of its
// first input together with the closure that propagates gradients back.
// Shape errors raise ArgumentError.

namespace mmbeam::ad {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);

/// map [N,C,H,W] + v [N,C] broadcast over the spatial axes.
template <typename T> Var<T> add_channelwise(Var<T> map, Var<T> v);
/// x [B, ...] + p [...] broadcast over the leading axis.
template <typename T> Var<T> add_leading(Var<T> x, Var<T> p);

template <typename T> Var<T> relu(Var<T> x);

template <typename T> Var<T> reshape(Var<T> x, Shape shape);
template <typename T> Var<T> permute(Var<T> x, const std::vector<int>& perm);
template <typename T> Var<T> concat(std::span<const Var<T>> parts, int axis);
template <typename T> Var<T> slice(Var<T> x, int axis, int start, int length);

/// Sum over one axis, which is removed from the shape.
template <typename T> Var<T> sum_axis(Var<T> x, int axis);
/// Sum of all entries, shape [1].
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);

/// Batched product over the two trailing axes: [...,M,K] x [...,K,N]
/// (or [...,N,K] with transpose_b). Leading axes must agree.
template <typename T> Var<T> matmul(Var<T> a, Var<T> b, bool transpose_b = false);
/// x [M,K] * w[N,K]^T + bias[N]. `bias` may be an invalid Var.
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> bias);

/// Max-subtracted softmax along `axis`.
template <typename T> Var<T> softmax(Var<T> x, int axis);
/// Normalises over the last axis, then applies gamma/beta.
template <typename T> Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));
/// Inverted dropout; identity when !training or rate == 0.
template <typename T> Var<T> dropout(Var<T> x, T rate, bool training, Rng& rng);

template <typename T> Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, int stride, int pad);

/// Batch statistics in training (running statistics updated in place),
/// running statistics in evaluation.
template <typename T>
Var<T> batchnorm2d(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean, Tensor<T>& running_var,
                   bool training, T momentum = T(0.1), T eps = T(1e-5));
template <typename T> Var<T> maxpool2d(Var<T> x, int kernel, int stride, int pad);
/// [N,C,H,W] -> [N,C]
template <typename T> Var<T> global_avgpool(Var<T> x);

/// Focal loss over soft targets, averaged over the batch:
///   -sum_i t_i (1 - p_i)^gamma log p_i,  p = softmax(logits).
/// gamma = 0 gives soft cross-entropy. logits and targets are [B,K].
template <typename T> Var<T> focal_loss(Var<T> logits, const Tensor<T>& targets, T gamma);

inline constexpr double kLogFloor = 1e-12;

}  // namespace mmbeam::ad
