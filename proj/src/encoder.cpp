// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/encoder.hpp"

#include <stdexcept>

namespace sonarseg {

void validate_image_shape(const Shape& shape) {
  if (shape.size() != 4) throw std::invalid_argument("image must be (B, 1, H, W), got " + shape_str(shape));
  if (shape[1] != 1) {
    throw std::invalid_argument("image must have exactly 1 channel, got " + std::to_string(shape[1]));
  }
  if (shape[0] < 1 || shape[2] < kInputMultiple || shape[3] < kInputMultiple || shape[2] % kInputMultiple != 0 ||
      shape[3] % kInputMultiple != 0) {
    throw std::invalid_argument("image height and width must be positive multiples of 32 (pad or tile first), got " +
                                shape_str(shape));
  }
}

template <typename T>
Stem<T>::Stem(Index embed_dim, nn::Initializer& init) : conv_(1, embed_dim / 2, 7, 2, 3, init) {}

template <typename T>
Var<T> Stem<T>::operator()(const Var<T>& image) const {
  validate_image_shape(image->value.shape());
  return conv_(image);
}

template <typename T>
MultiscalePatchMerge<T>::MultiscalePatchMerge(Index in_ch, nn::Initializer& init)
    : proj_(in_ch, 2 * in_ch, true, init), residual_(in_ch, 2 * in_ch, true, init) {
  for (int b = 0; b < kBranches; ++b) {
    std::vector<Step> steps;
    for (int s = 0; s <= b; ++s) steps.push_back(Step{nn::DepthwiseConv3x3<T>(in_ch, 1, init), nn::GroupNorm<T>(in_ch)});
    branches_.push_back(std::move(steps));
  }
}

template <typename T>
Var<T> MultiscalePatchMerge<T>::operator()(const Var<T>& x) const {
  const auto& s = x->value.shape();
  if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw std::invalid_argument("patch merge needs even spatial dims, got " + shape_str(s));
  }
  Var<T> agg;
  for (const auto& branch : branches_) {
    Var<T> h = x;
    for (const auto& step : branch) h = step.norm(step.conv(h));
    agg = agg ? ops::add(agg, h) : h;
  }
  auto main = proj_(ops::avg_pool2(ops::hardswish(agg)));
  // Pooling commutes with the pointwise map, so pool first.
  auto skip = residual_(ops::avg_pool2(x));
  return ops::add(main, skip);
}

template <typename T>
void MultiscalePatchMerge<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    for (std::size_t s = 0; s < branches_[b].size(); ++s) {
      const auto p = prefix + "branch" + std::to_string(b) + "." + std::to_string(s) + ".";
      branches_[b][s].conv.collect(out, p + "dw.");
      branches_[b][s].norm.collect(out, p + "norm.");
    }
  }
  proj_.collect(out, prefix + "proj.");
  residual_.collect(out, prefix + "residual.");
}

template <typename T>
ConvPatchMerge<T>::ConvPatchMerge(Index in_ch, nn::Initializer& init) : conv_(in_ch, 2 * in_ch, 3, 2, 1, init) {}

template <typename T>
Var<T> ConvPatchMerge<T>::operator()(const Var<T>& x) const {
  const auto& s = x->value.shape();
  if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw std::invalid_argument("patch merge needs even spatial dims, got " + shape_str(s));
  }
  return conv_(x);
}

Index simxca_macs(Index tokens, Index channels, int heads) {
  const Index d = channels / heads;
  // qkv projection + Qn^T Kn + V A + output projection
  return tokens * (3 * channels * channels + channels * d + channels * d + channels * channels);
}

template <typename T>
SimXcaAttention<T>::SimXcaAttention(Index channels, int heads, nn::Initializer& init)
    : channels_(channels), heads_(heads), qkv_(channels, 3 * channels, init), proj_(channels, channels, init) {
  if (heads < 1 || channels % heads != 0) {
    throw std::invalid_argument("attention: " + std::to_string(channels) + " channels not divisible by " +
                                std::to_string(heads) + " heads");
  }
}

template <typename T>
Var<T> SimXcaAttention<T>::operator()(const Var<T>& tokens) const {
  const auto& s = tokens->value.shape();
  if (s.size() != 3 || s[2] != channels_) {
    throw std::invalid_argument("attention expects (B, N, " + std::to_string(channels_) + "), got " + shape_str(s));
  }
  if (s[1] == 0) throw std::invalid_argument("attention: empty token sequence");
  return proj_(ops::simxca_core(qkv_(tokens), heads_, kSimXcaEps));
}

template <typename T>
void SimXcaAttention<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  qkv_.collect(out, prefix + "qkv.");
  proj_.collect(out, prefix + "proj.");
}

template <typename T>
GhostFfn<T>::GhostFfn(Index channels, nn::Initializer& init)
    : primary_(channels, channels, false, init),
      primary_norm_(channels),
      ghost_(channels, 1, init),
      ghost_norm_(channels),
      wide_a_(channels, 1, init),
      wide_a_norm_(channels),
      wide_b_(channels, 1, init),
      wide_b_norm_(channels),
      proj_(2 * channels, channels, true, init, nn::InitKind::kTruncNormal) {}

template <typename T>
Var<T> GhostFfn<T>::operator()(const Var<T>& tokens, Grid grid) const {
  auto x = ops::from_tokens(tokens, grid.height, grid.width);
  auto primary = primary_norm_(primary_(x));
  auto ghost = ghost_norm_(ghost_(primary));
  auto wide = wide_b_norm_(wide_b_(wide_a_norm_(wide_a_(primary))));
  auto hidden = ops::hardswish(ops::concat_channels<T>({ghost, wide}));
  return ops::to_tokens(proj_(hidden));
}

template <typename T>
void GhostFfn<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  primary_.collect(out, prefix + "primary.");
  primary_norm_.collect(out, prefix + "primary_norm.");
  ghost_.collect(out, prefix + "ghost.");
  ghost_norm_.collect(out, prefix + "ghost_norm.");
  wide_a_.collect(out, prefix + "wide_a.");
  wide_a_norm_.collect(out, prefix + "wide_a_norm.");
  wide_b_.collect(out, prefix + "wide_b.");
  wide_b_norm_.collect(out, prefix + "wide_b_norm.");
  proj_.collect(out, prefix + "proj.");
}

template <typename T>
Mlp2<T>::Mlp2(Index channels, nn::Initializer& init) : fc1_(channels, 2 * channels, init), fc2_(2 * channels, channels, init) {}

template <typename T>
Var<T> Mlp2<T>::operator()(const Var<T>& tokens, Grid) const {
  return fc2_(ops::gelu(fc1_(tokens)));
}

template <typename T>
void Mlp2<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  fc1_.collect(out, prefix + "fc1.");
  fc2_.collect(out, prefix + "fc2.");
}

namespace {
template <typename T>
std::variant<GhostFfn<T>, Mlp2<T>> make_ffn(Index channels, FfnKind kind, nn::Initializer& init) {
  if (kind == FfnKind::kGhost) return GhostFfn<T>(channels, init);
  return Mlp2<T>(channels, init);
}
}  // namespace

template <typename T>
TransformerLayer<T>::TransformerLayer(Index channels, int heads, FfnKind ffn, nn::Initializer& init)
    : norm1_(channels), attn_(channels, heads, init), norm2_(channels), ffn_(make_ffn<T>(channels, ffn, init)) {}

template <typename T>
Var<T> TransformerLayer<T>::operator()(const Var<T>& tokens, Grid grid) const {
  auto x1 = ops::add(tokens, attn_(norm1_(tokens)));
  auto y = std::visit([&](const auto& f) { return f(norm2_(x1), grid); }, ffn_);
  return ops::add(x1, y);
}

template <typename T>
void TransformerLayer<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  norm1_.collect(out, prefix + "norm1.");
  attn_.collect(out, prefix + "attn.");
  norm2_.collect(out, prefix + "norm2.");
  std::visit([&](const auto& f) { f.collect(out, prefix + "ffn."); }, ffn_);
}

template <typename T>
Encoder<T>::Encoder(const ModelConfig& config, nn::Initializer& init) : stem_(config.embed_dim, init) {
  config.validate();
  for (int i = 1; i <= kNumStages; ++i) {
    const auto sc = config.stage(i);
    const Index in_ch = sc.channels / 2;
    Stage stage{config.merge == MergeKind::kMultiscale
                    ? std::variant<MultiscalePatchMerge<T>, ConvPatchMerge<T>>(MultiscalePatchMerge<T>(in_ch, init))
                    : std::variant<MultiscalePatchMerge<T>, ConvPatchMerge<T>>(ConvPatchMerge<T>(in_ch, init)),
                {}};
    for (int l = 0; l < sc.depth; ++l) stage.layers.emplace_back(sc.channels, sc.heads, config.ffn, init);
    stages_.push_back(std::move(stage));
  }
}

template <typename T>
EncoderOutput<T> Encoder<T>::operator()(const Var<T>& image) const {
  EncoderOutput<T> out;
  Var<T> x = stem_(image);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const auto& stage = stages_[i];
    x = std::visit([&](const auto& m) { return m(x); }, stage.merge);
    const Grid grid{x->value.dim(2), x->value.dim(3)};
    auto tokens = ops::to_tokens(x);
    for (const auto& layer : stage.layers) tokens = layer(tokens, grid);
    x = ops::from_tokens(tokens, grid.height, grid.width);
    out.stages[i] = x;
  }
  return out;
}

template <typename T>
void Encoder<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  stem_.collect(out, prefix + "stem.");
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const auto p = prefix + "stage" + std::to_string(i + 1) + ".";
    std::visit([&](const auto& m) { m.collect(out, p + "merge."); }, stages_[i].merge);
    for (std::size_t l = 0; l < stages_[i].layers.size(); ++l) {
      stages_[i].layers[l].collect(out, p + "layer" + std::to_string(l) + ".");
    }
  }
}

template class Stem<float>;
template class Stem<double>;
template class MultiscalePatchMerge<float>;
template class MultiscalePatchMerge<double>;
template class ConvPatchMerge<float>;
template class ConvPatchMerge<double>;
template class SimXcaAttention<float>;
template class SimXcaAttention<double>;
template class GhostFfn<float>;
template class GhostFfn<double>;
template class Mlp2<float>;
template class Mlp2<double>;
template class TransformerLayer<float>;
template class TransformerLayer<double>;
template class Encoder<float>;
template class Encoder<double>;

}  // namespace sonarseg
