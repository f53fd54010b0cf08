// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "sonarseg/tensor.hpp"

namespace sonarseg {

enum class FfnKind { kGhost, kMlp2 };
enum class MergeKind { kMultiscale, kConv3x3S2 };

std::string_view to_string(FfnKind k);
std::string_view to_string(MergeKind k);

inline constexpr int kNumStages = 4;

struct StageConfig {
  int index;  // 1-based
  int depth;
  int heads;
  Index channels;

  Index head_dim() const { return channels / heads; }
};

struct ModelConfig {
  Index embed_dim = 24;
  std::array<int, kNumStages> depths{3, 6, 12, 3};
  std::array<int, kNumStages> heads{2, 4, 8, 16};
  int num_classes = 4;
  bool aux_aspp = true;
  FfnKind ffn = FfnKind::kGhost;
  MergeKind merge = MergeKind::kMultiscale;
  std::array<int, 4> aspp_dilations{1, 2, 4, 8};

  // Channels C * 2^(i-1) for 1-based stage i.
  Index stage_channels(int stage) const { return embed_dim << (stage - 1); }
  StageConfig stage(int stage) const {
    return {stage, depths[stage - 1], heads[stage - 1], stage_channels(stage)};
  }

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Names of the built-in presets, smallest model first, followed by the ablation
// baseline.
const std::vector<std::string>& preset_names();

// Throws std::invalid_argument for unknown names.
ModelConfig preset(std::string_view name);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace sonarseg
