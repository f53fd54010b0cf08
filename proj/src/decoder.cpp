// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/decoder.hpp"

#include <stdexcept>

namespace sonarseg {

template <typename T>
StageFusion<T>::StageFusion(const ModelConfig& config, nn::Initializer& init)
    : embed_dim_(config.embed_dim), fuse_(config.embed_dim, config.embed_dim, true, init, nn::InitKind::kTruncNormal) {
  // fuse_ draws from the initializer first; keep that order stable.
  for (int i = 1; i <= kNumStages; ++i) lateral_.emplace_back(config.stage_channels(i), config.embed_dim, true, init, nn::InitKind::kTruncNormal);
}

template <typename T>
Var<T> StageFusion<T>::operator()(const EncoderOutput<T>& stages) const {
  const auto& first = stages.stages[0]->value;
  const Index B = first.dim(0), H = first.dim(2), W = first.dim(3);
  Var<T> sum;
  for (int i = 0; i < kNumStages; ++i) {
    const auto& s = stages.stages[i]->value.shape();
    const Index want_c = embed_dim_ << i;
    if (s.size() != 4 || s[0] != B || s[1] != want_c || s[2] * (Index{1} << i) != H || s[3] * (Index{1} << i) != W) {
      throw std::invalid_argument("stage " + std::to_string(i + 1) + " has shape " + shape_str(s) +
                                  ", inconsistent with the encoder shape ladder");
    }
    auto projected = ops::upsample_bilinear(lateral_[i](stages.stages[i]), H, W);
    sum = sum ? ops::add(sum, projected) : projected;
  }
  return fuse_(sum);
}

template <typename T>
void StageFusion<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < lateral_.size(); ++i) lateral_[i].collect(out, prefix + "lateral" + std::to_string(i + 1) + ".");
  fuse_.collect(out, prefix + "fuse.");
}

template <typename T>
Aspp<T>::Aspp(Index in_ch, Index embed_dim, const std::array<int, 4>& dilations, nn::Initializer& init)
    : in_proj_(in_ch, embed_dim, true, init, nn::InitKind::kTruncNormal),
      out_proj_(4 * embed_dim, embed_dim, true, init, nn::InitKind::kTruncNormal) {
  for (int d : dilations) branches_.push_back(Branch{nn::DepthwiseConv3x3<T>(embed_dim, d, init), nn::GroupNorm<T>(embed_dim)});
}

template <typename T>
Var<T> Aspp<T>::operator()(const Var<T>& x) const {
  auto projected = in_proj_(x);
  std::vector<Var<T>> outs;
  outs.reserve(branches_.size());
  for (const auto& b : branches_) outs.push_back(b.norm(b.conv(projected)));
  return out_proj_(ops::hardswish(ops::concat_channels(outs)));
}

template <typename T>
void Aspp<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  in_proj_.collect(out, prefix + "in_proj.");
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    branches_[i].conv.collect(out, prefix + "atrous" + std::to_string(i) + ".dw.");
    branches_[i].norm.collect(out, prefix + "atrous" + std::to_string(i) + ".norm.");
  }
  out_proj_.collect(out, prefix + "out_proj.");
}

template <typename T>
Decoder<T>::Decoder(const ModelConfig& config, nn::Initializer& init)
    : fusion_(config, init),
      aux2_(config.aux_aspp ? std::optional<Aspp<T>>(Aspp<T>(config.stage_channels(2), config.embed_dim,
                                                              config.aspp_dilations, init))
                            : std::nullopt),
      aux3_(config.aux_aspp ? std::optional<Aspp<T>>(Aspp<T>(config.stage_channels(3), config.embed_dim,
                                                              config.aspp_dilations, init))
                            : std::nullopt),
      classifier_((config.aux_aspp ? 3 : 1) * config.embed_dim, config.num_classes, true, init, nn::InitKind::kTruncNormal) {}

template <typename T>
Var<T> Decoder<T>::operator()(const EncoderOutput<T>& stages, Index image_h, Index image_w) const {
  auto fused = fusion_(stages);
  const Index h = fused->value.dim(2), w = fused->value.dim(3);
  if (h * 4 != image_h || w * 4 != image_w) {
    throw std::invalid_argument("decoder: stage-1 grid does not match a quarter of the image size");
  }
  Var<T> features = fused;
  if (aux2_) {
    auto a2 = ops::upsample_bilinear((*aux2_)(stages.stages[1]), h, w);
    auto a3 = ops::upsample_bilinear((*aux3_)(stages.stages[2]), h, w);
    features = ops::concat_channels<T>({fused, a2, a3});
  }
  return ops::upsample_bilinear(classifier_(features), image_h, image_w);
}

template <typename T>
void Decoder<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  fusion_.collect(out, prefix + "fusion.");
  if (aux2_) aux2_->collect(out, prefix + "aux2.");
  if (aux3_) aux3_->collect(out, prefix + "aux3.");
  classifier_.collect(out, prefix + "classifier.");
}

template class StageFusion<float>;
template class StageFusion<double>;
template class Aspp<float>;
template class Aspp<double>;
template class Decoder<float>;
template class Decoder<double>;

}  // namespace sonarseg
