// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "sonarseg/autograd.hpp"
#include "sonarseg/ops.hpp"

namespace sonarseg::nn {

inline constexpr double kGroupNormEps = 1e-5;
inline constexpr double kLayerNormEps = 1e-6;

// Seeded source for parameter initialization. Parameters draw from it in
// construction order, so a model is a pure function of (config, seed).
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // N(0, std^2) truncated to [-2 std, 2 std].
  template <typename T>
  Tensor<T> trunc_normal(Shape shape, double std);
  template <typename T>
  Tensor<T> normal(Shape shape, double std);

 private:
  std::mt19937_64 rng_;
};

// Appends "<prefix><name>" entries to a parameter list.
template <typename T>
void register_param(ParameterList<T>& out, const std::string& prefix, const std::string& name, const Var<T>& v) {
  out.push_back({prefix + name, v});
}

// Dense k x k convolution; weights drawn from N(0, 2 / (k*k*out)).
template <typename T>
class Conv2d {
 public:
  Conv2d(Index in_ch, Index out_ch, int kernel, int stride, int padding, Initializer& init);
  Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, weight_, bias_, stride_, padding_); }
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  Var<T> weight_, bias_;
  int stride_, padding_;
};

// 3x3 depthwise convolution (bias-free) with "same" padding.
template <typename T>
class DepthwiseConv3x3 {
 public:
  DepthwiseConv3x3(Index channels, int dilation, Initializer& init);
  Var<T> operator()(const Var<T>& x) const { return ops::depthwise_conv3x3(x, weight_, dilation_); }
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  Var<T> weight_;
  int dilation_;
};

enum class InitKind {
  kFanOut,      // convolution: N(0, 2 / fan_out)
  kTruncNormal  // linear projection: truncated N(0, 0.02^2)
};

// 1x1 convolution on feature maps.
template <typename T>
class Pointwise {
 public:
  Pointwise(Index in_ch, Index out_ch, bool bias, Initializer& init, InitKind kind = InitKind::kFanOut);
  Var<T> operator()(const Var<T>& x) const { return ops::pointwise(x, weight_, bias_); }
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  Var<T> weight_, bias_;
};

// Token-wise affine map; weights truncated-normal with std 0.02.
template <typename T>
class Linear {
 public:
  Linear(Index in_features, Index out_features, Initializer& init);
  Var<T> operator()(const Var<T>& x) const { return ops::linear(x, weight_, bias_); }
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  Var<T> weight_, bias_;
};

template <typename T>
class GroupNorm {
 public:
  explicit GroupNorm(Index channels);
  Var<T> operator()(const Var<T>& x) const { return ops::group_norm(x, gamma_, beta_, kGroupNormEps); }
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  Var<T> gamma_, beta_;
};

template <typename T>
class LayerNorm {
 public:
  explicit LayerNorm(Index channels);
  Var<T> operator()(const Var<T>& x) const { return ops::layer_norm(x, gamma_, beta_, kLayerNormEps); }
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  Var<T> gamma_, beta_;
};

}  // namespace sonarseg::nn
