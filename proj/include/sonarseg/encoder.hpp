// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "sonarseg/config.hpp"
#include "sonarseg/nn.hpp"

namespace sonarseg {

// Smallest accepted input side; stage 4 then runs on a 1x1 grid.
inline constexpr Index kInputMultiple = 32;

inline constexpr double kSimXcaEps = 1e-6;

// Spatial grid of a token sequence.
struct Grid {
  Index height;
  Index width;
  Index tokens() const { return height * width; }
};

// 7x7 stride-2 convolution, 1 -> C/2 channels, padding 3.
template <typename T>
class Stem {
 public:
  Stem(Index embed_dim, nn::Initializer& init);
  // Rejects non single-channel inputs and sides not divisible by 32.
  Var<T> operator()(const Var<T>& image) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const { conv_.collect(out, prefix + "conv."); }

 private:
  nn::Conv2d<T> conv_;
};

// Four parallel branches of 1..4 stacked 3x3 depthwise convolutions, each
// followed by single-group normalization. Branch outputs are summed, passed
// through Hard Swish, 2x2-average-pooled and projected C' -> 2C'. A pooled
// pointwise residual C' -> 2C' is added.
template <typename T>
class MultiscalePatchMerge {
 public:
  MultiscalePatchMerge(Index in_ch, nn::Initializer& init);
  Var<T> operator()(const Var<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

  static constexpr int kBranches = 4;

 private:
  struct Step {
    nn::DepthwiseConv3x3<T> conv;
    nn::GroupNorm<T> norm;
  };
  std::vector<std::vector<Step>> branches_;
  nn::Pointwise<T> proj_;
  nn::Pointwise<T> residual_;
};

// Plain 3x3 stride-2 convolution C' -> 2C' (ablation baseline).
template <typename T>
class ConvPatchMerge {
 public:
  ConvPatchMerge(Index in_ch, nn::Initializer& init);
  Var<T> operator()(const Var<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const { conv_.collect(out, prefix + "conv."); }

 private:
  nn::Conv2d<T> conv_;
};

// Cross-covariance attention with L1-normalized queries and keys and no
// softmax. Cost is linear in the token count.
template <typename T>
class SimXcaAttention {
 public:
  SimXcaAttention(Index channels, int heads, nn::Initializer& init);
  Var<T> operator()(const Var<T>& tokens) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;
  int heads() const { return heads_; }

 private:
  Index channels_;
  int heads_;
  nn::Linear<T> qkv_;
  nn::Linear<T> proj_;
};

// Multiply-accumulate count of one SimXCA forward pass:
// N * (3C^2 + C*d + C*d + C^2) with d = C / heads.
Index simxca_macs(Index tokens, Index channels, int heads);

// Extended ghost feed-forward block: pointwise primary features, a 3x3
// depthwise ghost branch and a two-deep 3x3 depthwise (5x5 field) branch,
// concatenated to 2C', Hard Swish, then pointwise 2C' -> C'.
template <typename T>
class GhostFfn {
 public:
  GhostFfn(Index channels, nn::Initializer& init);
  Var<T> operator()(const Var<T>& tokens, Grid grid) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  nn::Pointwise<T> primary_;
  nn::GroupNorm<T> primary_norm_;
  nn::DepthwiseConv3x3<T> ghost_;
  nn::GroupNorm<T> ghost_norm_;
  nn::DepthwiseConv3x3<T> wide_a_;
  nn::GroupNorm<T> wide_a_norm_;
  nn::DepthwiseConv3x3<T> wide_b_;
  nn::GroupNorm<T> wide_b_norm_;
  nn::Pointwise<T> proj_;
};

// Two linear maps C' -> 2C' -> C' around GELU.
template <typename T>
class Mlp2 {
 public:
  Mlp2(Index channels, nn::Initializer& init);
  Var<T> operator()(const Var<T>& tokens, Grid grid) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  nn::Linear<T> fc1_;
  nn::Linear<T> fc2_;
};

// Pre-norm residual layer: x + Attn(LN(x)), then + FFN(LN(.)).
template <typename T>
class TransformerLayer {
 public:
  TransformerLayer(Index channels, int heads, FfnKind ffn, nn::Initializer& init);
  Var<T> operator()(const Var<T>& tokens, Grid grid) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  nn::LayerNorm<T> norm1_;
  SimXcaAttention<T> attn_;
  nn::LayerNorm<T> norm2_;
  std::variant<GhostFfn<T>, Mlp2<T>> ffn_;
};

template <typename T>
struct EncoderOutput {
  std::array<Var<T>, kNumStages> stages;
};

template <typename T>
class Encoder {
 public:
  Encoder(const ModelConfig& config, nn::Initializer& init);
  EncoderOutput<T> operator()(const Var<T>& image) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;

 private:
  struct Stage {
    std::variant<MultiscalePatchMerge<T>, ConvPatchMerge<T>> merge;
    std::vector<TransformerLayer<T>> layers;
  };
  Stem<T> stem_;
  std::vector<Stage> stages_;
};

// Checks a (B, 1, H, W) input: single channel, H and W positive multiples of 32.
void validate_image_shape(const Shape& shape);

}  // namespace sonarseg
