// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "sonarseg/model.hpp"
#include "support.hpp"

using namespace sonarseg;
using sonarseg::testing::params_of;
using sonarseg::testing::randn;

namespace {

EncoderOutput<double> zero_stages(const ModelConfig& cfg, Index size) {
  EncoderOutput<double> out;
  for (int s = 1; s <= kNumStages; ++s) {
    out.stages[s - 1] = constant(Tensor<double>({1, cfg.stage_channels(s), size >> (s + 1), size >> (s + 1)}));
  }
  return out;
}

Index decoder_params(const ModelConfig& cfg) {
  Model<float> model(cfg);
  Index n = 0;
  for (const auto& p : model.parameters()) {
    if (p.name.rfind("decoder.", 0) == 0) n += p.var->value.numel();
  }
  return n;
}

}  // namespace

TEST_CASE("stage fusion") {
  const auto cfg = preset("ours");
  nn::Initializer init(1);
  SUBCASE("fuses to C channels at a quarter of the input") {
    StageFusion<float> fusion(cfg, init);
    EncoderOutput<float> stages;
    for (int s = 1; s <= kNumStages; ++s) {
      stages.stages[s - 1] = constant(randn<float>({2, cfg.stage_channels(s), 128 >> s, 128 >> s}, 2 + s));
    }
    NoGradGuard guard;
    CHECK(fusion(stages)->value.shape() == Shape{2, 24, 64, 64});
  }
  SUBCASE("zero stages and zero biases give a zero map") {
    StageFusion<double> fusion(cfg, init);
    for (const auto& p : params_of(fusion)) {
      if (sonarseg::testing::ends_with(p.name, "bias")) p.var->value.fill(0.0);
    }
    NoGradGuard guard;
    CHECK(fusion(zero_stages(cfg, 256))->value == Tensor<double>({1, 24, 64, 64}));
  }
}

TEST_CASE("aspp") {
  nn::Initializer init(2);
  NoGradGuard guard;
  SUBCASE("auxiliary block shapes") {
    Aspp<float> aux2(48, 24, {1, 2, 4, 8}, init);
    CHECK(aux2(constant(randn<float>({1, 48, 32, 32}, 5)))->value.shape() == Shape{1, 24, 32, 32});
    Aspp<float> aux3(96, 24, {1, 2, 4, 8}, init);
    CHECK(aux3(constant(randn<float>({1, 96, 16, 16}, 6)))->value.shape() == Shape{1, 24, 16, 16});
  }
  SUBCASE("zero input with zero biases gives zero") {
    Aspp<double> aspp(48, 24, {1, 2, 4, 8}, init);
    for (const auto& p : params_of(aspp)) {
      if (sonarseg::testing::ends_with(p.name, "bias")) p.var->value.fill(0.0);
    }
    CHECK(aspp(constant(Tensor<double>({1, 48, 32, 32})))->value == Tensor<double>({1, 24, 32, 32}));
  }
  SUBCASE("parameter count") {
    // in_proj C'C + C, four depthwise 9C plus norms 2C each, out_proj 4C*C + C.
    Aspp<float> aspp(48, 24, {1, 2, 4, 8}, init);
    CHECK(sonarseg::testing::count(params_of(aspp)) ==
          48 * 24 + 24 + 4 * (9 * 24 + 2 * 24) + 4 * 24 * 24 + 24);
  }
}

TEST_CASE("decoder output") {
  NoGradGuard guard;
  SUBCASE("logits at full resolution") {
    Model<float> model(preset("ours"));
    CHECK(model.predict_logits(Tensor<float>({2, 1, 256, 256}, 0.5f)).shape() == Shape{2, 4, 256, 256});
  }
  SUBCASE("single class gives constant argmax 0") {
    auto cfg = preset("ours-dagger");
    cfg.num_classes = 1;
    Model<float> model(cfg);
    const auto logits = model.predict_logits(randn<float>({1, 1, 64, 64}, 7));
    CHECK(logits.shape() == Shape{1, 1, 64, 64});
    for (auto v : argmax_labels(logits)) CHECK(v == 0);
  }
  SUBCASE("disabling the auxiliary blocks keeps the shape") {
    auto cfg = preset("ours-dagger");
    cfg.aux_aspp = false;
    Model<float> model(cfg);
    CHECK(model.predict_logits(Tensor<float>({1, 1, 128, 128})).shape() == Shape{1, 4, 128, 128});
  }
  SUBCASE("output size follows any input divisible by 32") {
    Model<float> model(preset("ours-dagger"));
    for (auto [h, w] : {std::pair<Index, Index>{32, 32}, {64, 96}, {160, 32}, {96, 224}}) {
      CHECK(model.predict_logits(Tensor<float>({1, 1, h, w})).shape() == Shape{1, 4, h, w});
    }
  }
}

TEST_CASE("decoder parameter budget") {
  const auto ours = preset("ours");
  SUBCASE("decoder is under 15% of the model") {
    CHECK(static_cast<double>(decoder_params(ours)) < 0.15 * static_cast<double>(count_parameters(ours)));
  }
  SUBCASE("auxiliary blocks add two ASPPs and widen the classifier from C to 3C") {
    auto plain = ours;
    plain.aux_aspp = false;
    nn::Initializer init(3);
    const auto aux2 = sonarseg::testing::count(params_of(Aspp<float>(48, 24, {1, 2, 4, 8}, init)));
    const auto aux3 = sonarseg::testing::count(params_of(Aspp<float>(96, 24, {1, 2, 4, 8}, init)));
    CHECK(count_parameters(ours) - count_parameters(plain) == aux2 + aux3 + 2 * 24 * 4);
  }
}
