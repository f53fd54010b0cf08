// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sonarseg/encoder.hpp"

namespace sonarseg {

// Projects every stage map to C channels, resizes to the stage-1 grid,
// sums, and applies a final C -> C projection.
template <typename T>
class StageFusion {
 public:
  StageFusion(const ModelConfig& config, nn::Initializer& init);
  Var<T> operator()(const EncoderOutput<T>& stages) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  Index embed_dim_;
  std::vector<nn::Pointwise<T>> lateral_;
  nn::Pointwise<T> fuse_;
};

// Atrous pyramid block: C' -> C projection, parallel 3x3 depthwise atrous
// convolutions (each with single-group norm), concatenation to 4C, Hard
// Swish, and a 4C -> C projection.
template <typename T>
class Aspp {
 public:
  Aspp(Index in_ch, Index embed_dim, const std::array<int, 4>& dilations, nn::Initializer& init);
  Var<T> operator()(const Var<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  struct Branch {
    nn::DepthwiseConv3x3<T> conv;
    nn::GroupNorm<T> norm;
  };
  nn::Pointwise<T> in_proj_;
  std::vector<Branch> branches_;
  nn::Pointwise<T> out_proj_;
};

template <typename T>
class Decoder {
 public:
  Decoder(const ModelConfig& config, nn::Initializer& init);
  // Returns logits (B, N, H, W) for an (H, W) input image.
  Var<T> operator()(const EncoderOutput<T>& stages, Index image_h, Index image_w) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  StageFusion<T> fusion_;
  std::optional<Aspp<T>> aux2_;
  std::optional<Aspp<T>> aux3_;
  nn::Pointwise<T> classifier_;
};

}  // namespace sonarseg
