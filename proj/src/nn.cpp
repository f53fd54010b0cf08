// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/nn.hpp"

#include <cmath>

namespace sonarseg::nn {

template <typename T>
Tensor<T> Initializer::trunc_normal(Shape shape, double std) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std);
  for (Index i = 0; i < t.numel(); ++i) {
    double v;
    do {
      v = dist(rng_);
    } while (std::abs(v) > 2.0 * std);
    t[i] = static_cast<T>(v);
  }
  return t;
}

template <typename T>
Tensor<T> Initializer::normal(Shape shape, double std) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std);
  for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(dist(rng_));
  return t;
}

template <typename T>
Conv2d<T>::Conv2d(Index in_ch, Index out_ch, int kernel, int stride, int padding, Initializer& init)
    : stride_(stride), padding_(padding) {
  const double fan_out = static_cast<double>(kernel * kernel * out_ch);
  weight_ = leaf(init.normal<T>({out_ch, in_ch, kernel, kernel}, std::sqrt(2.0 / fan_out)));
  bias_ = leaf(Tensor<T>({out_ch}));
}

template <typename T>
void Conv2d<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  register_param(out, prefix, "weight", weight_);
  register_param(out, prefix, "bias", bias_);
}

template <typename T>
DepthwiseConv3x3<T>::DepthwiseConv3x3(Index channels, int dilation, Initializer& init) : dilation_(dilation) {
  // fan_out = k*k*out/groups = 9
  weight_ = leaf(init.normal<T>({channels, 1, 3, 3}, std::sqrt(2.0 / 9.0)));
}

template <typename T>
void DepthwiseConv3x3<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  register_param(out, prefix, "weight", weight_);
}

template <typename T>
Pointwise<T>::Pointwise(Index in_ch, Index out_ch, bool bias, Initializer& init, InitKind kind) {
  weight_ = leaf(kind == InitKind::kFanOut
                     ? init.normal<T>({out_ch, in_ch}, std::sqrt(2.0 / static_cast<double>(out_ch)))
                     : init.trunc_normal<T>({out_ch, in_ch}, 0.02));
  if (bias) bias_ = leaf(Tensor<T>({out_ch}));
}

template <typename T>
void Pointwise<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  register_param(out, prefix, "weight", weight_);
  if (bias_) register_param(out, prefix, "bias", bias_);
}

template <typename T>
Linear<T>::Linear(Index in_features, Index out_features, Initializer& init) {
  weight_ = leaf(init.trunc_normal<T>({out_features, in_features}, 0.02));
  bias_ = leaf(Tensor<T>({out_features}));
}

template <typename T>
void Linear<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  register_param(out, prefix, "weight", weight_);
  register_param(out, prefix, "bias", bias_);
}

template <typename T>
GroupNorm<T>::GroupNorm(Index channels)
    : gamma_(leaf(Tensor<T>({channels}, T{1}))), beta_(leaf(Tensor<T>({channels}))) {}

template <typename T>
void GroupNorm<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  register_param(out, prefix, "gamma", gamma_);
  register_param(out, prefix, "beta", beta_);
}

template <typename T>
LayerNorm<T>::LayerNorm(Index channels)
    : gamma_(leaf(Tensor<T>({channels}, T{1}))), beta_(leaf(Tensor<T>({channels}))) {}

template <typename T>
void LayerNorm<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  register_param(out, prefix, "gamma", gamma_);
  register_param(out, prefix, "beta", beta_);
}

template Tensor<float> Initializer::trunc_normal<float>(Shape, double);
template Tensor<double> Initializer::trunc_normal<double>(Shape, double);
template Tensor<float> Initializer::normal<float>(Shape, double);
template Tensor<double> Initializer::normal<double>(Shape, double);

template class Conv2d<float>;
template class Conv2d<double>;
template class DepthwiseConv3x3<float>;
template class DepthwiseConv3x3<double>;
template class Pointwise<float>;
template class Pointwise<double>;
template class Linear<float>;
template class Linear<double>;
template class GroupNorm<float>;
template class GroupNorm<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;

}  // namespace sonarseg::nn
