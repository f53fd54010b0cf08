// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/config.hpp"

#include <stdexcept>

namespace sonarseg {

std::string_view to_string(FfnKind k) { return k == FfnKind::kGhost ? "ghost" : "mlp2"; }
std::string_view to_string(MergeKind k) { return k == MergeKind::kMultiscale ? "multiscale" : "conv3x3s2"; }

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("invalid model config: " + msg); };
  if (embed_dim <= 0 || embed_dim % 2 != 0) fail("embed_dim must be a positive even number");
  if (num_classes <= 0) fail("num_classes must be positive");
  for (int i = 1; i <= kNumStages; ++i) {
    const auto s = stage(i);
    if (s.depth < 1) fail("stage " + std::to_string(i) + " depth must be >= 1");
    if (s.heads < 1) fail("stage " + std::to_string(i) + " heads must be >= 1");
    if (s.channels % s.heads != 0) {
      fail("stage " + std::to_string(i) + " channels " + std::to_string(s.channels) + " not divisible by " +
           std::to_string(s.heads) + " heads");
    }
  }
  for (int d : aspp_dilations) {
    if (d < 1) fail("aspp dilations must be positive");
  }
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"ours-dagger", "ours-ddagger2", "ours-ddagger", "ours",
                                              "vanilla-simxca"};
  return names;
}

ModelConfig preset(std::string_view name) {
  ModelConfig c;
  if (name == "ours") return c;
  if (name == "ours-dagger") {
    c.embed_dim = 8;
    c.depths = {1, 1, 3, 1};
    c.heads = {1, 2, 4, 8};
    return c;
  }
  if (name == "ours-ddagger2") {
    c.embed_dim = 12;
    c.depths = {1, 3, 7, 1};
    c.heads = {1, 2, 4, 8};
    return c;
  }
  if (name == "ours-ddagger") {
    c.depths = {1, 3, 7, 1};
    return c;
  }
  if (name == "vanilla-simxca") {
    c.ffn = FfnKind::kMlp2;
    c.merge = MergeKind::kConv3x3S2;
    c.aux_aspp = false;
    return c;
  }
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"embed_dim", c.embed_dim},
          {"depths", c.depths},
          {"heads", c.heads},
          {"num_classes", c.num_classes},
          {"aux_aspp", c.aux_aspp},
          {"ffn", std::string(to_string(c.ffn))},
          {"merge", std::string(to_string(c.merge))},
          {"aspp_dilations", c.aspp_dilations}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<Index>();
  c.depths = j.at("depths").get<std::array<int, kNumStages>>();
  c.heads = j.at("heads").get<std::array<int, kNumStages>>();
  c.num_classes = j.at("num_classes").get<int>();
  c.aux_aspp = j.at("aux_aspp").get<bool>();
  const auto ffn = j.at("ffn").get<std::string>();
  if (ffn == "ghost") {
    c.ffn = FfnKind::kGhost;
  } else if (ffn == "mlp2") {
    c.ffn = FfnKind::kMlp2;
  } else {
    throw std::invalid_argument("unknown ffn kind '" + ffn + "'");
  }
  const auto merge = j.at("merge").get<std::string>();
  if (merge == "multiscale") {
    c.merge = MergeKind::kMultiscale;
  } else if (merge == "conv3x3s2") {
    c.merge = MergeKind::kConv3x3S2;
  } else {
    throw std::invalid_argument("unknown merge kind '" + merge + "'");
  }
  if (j.contains("aspp_dilations")) c.aspp_dilations = j.at("aspp_dilations").get<std::array<int, 4>>();
  c.validate();
  return c;
}

}  // namespace sonarseg
