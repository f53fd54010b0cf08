// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sonarseg/autograd.hpp"

// Differentiable primitives. Feature maps are (B, C, H, W), token
// sequences are (B, N, C), all row-major.
namespace sonarseg::ops {

inline constexpr std::uint8_t kIgnoreLabel = 255;

// While alive, piecewise ops (hardswish, the L1 norm in simxca_core) hash
// which piece each input falls on. Two forward passes with equal signatures
// stayed on the same smooth piece everywhere; finite-difference checks use
// this to reject stencils that straddle a kink. Not reentrant.
class KinkMonitor {
 public:
  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;

  std::uint64_t signature() const { return hash_; }
  void reset() { hash_ = kOffset; }

  static KinkMonitor* active();
  void record(std::uint64_t piece) { hash_ = (hash_ ^ piece) * kPrime; }

 private:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  std::uint64_t hash_ = kOffset;
  KinkMonitor* previous_;
};

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

// Dense convolution. `weight` is (Co, Ci, k, k); `bias` may be null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

// 3x3 depthwise convolution, stride 1, padding == dilation (size preserving).
// `weight` is (C, 1, 3, 3). No bias.
template <typename T>
Var<T> depthwise_conv3x3(const Var<T>& x, const Var<T>& weight, int dilation);

// 1x1 convolution on a feature map. `weight` is (Co, Ci); `bias` may be null.
template <typename T>
Var<T> pointwise(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

// Token-wise affine map on (B, N, Ci). `weight` is (Co, Ci); `bias` may be null.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

// Group normalization with a single group and per-channel affine.
template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps);

// Normalization over the last axis.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps);

template <typename T>
Var<T> hardswish(const Var<T>& x);

template <typename T>
Var<T> gelu(const Var<T>& x);

// 2x2 average pooling with stride 2.
template <typename T>
Var<T> avg_pool2(const Var<T>& x);

// Bilinear resize, half-pixel centers (no corner alignment).
template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, Index out_h, Index out_w);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs);

// (B, C, H, W) -> (B, H*W, C) and back.
template <typename T>
Var<T> to_tokens(const Var<T>& x);
template <typename T>
Var<T> from_tokens(const Var<T>& x, Index h, Index w);

// Cross-covariance attention core with L1-normalized queries and keys.
// `qkv` is (B, N, 3C) holding [Q | K | V]. Per head, every channel column of
// Q and K is divided by (sum over tokens of |.|) + eps; the head output is
// V * (Qn^T Kn). Returns (B, N, C) with heads concatenated.
template <typename T>
Var<T> simxca_core(const Var<T>& qkv, int heads, double eps);

// Mean over non-ignored pixels of w[y] * -log softmax(logits)[y].
// `labels` is (B, H, W) flattened.
template <typename T>
Var<T> weighted_cross_entropy(const Var<T>& logits, std::span<const std::uint8_t> labels,
                              std::span<const double> class_weights,
                              std::uint8_t ignore = kIgnoreLabel);

// sum(x * r) for a fixed tensor r; used to probe gradients.
template <typename T>
Var<T> dot_with(const Var<T>& x, const Tensor<T>& r);

}  // namespace sonarseg::ops
