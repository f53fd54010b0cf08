// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sonarseg/decoder.hpp"

namespace sonarseg {

inline constexpr std::uint64_t kDefaultInitSeed = 0x5eaf100dULL;

// Encoder + decoder. Immutable after construction except through the
// parameter handles (training); read-only forward passes may run
// concurrently under NoGradGuard.
template <typename T>
class Model {
 public:
  // Throws std::invalid_argument when the config is invalid.
  explicit Model(ModelConfig config, std::uint64_t seed = kDefaultInitSeed, std::string preset_name = "custom");
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  // Copies would alias parameter storage.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // (B, 1, H, W) -> logits (B, N, H, W).
  Var<T> forward(const Var<T>& image) const;
  Tensor<T> predict_logits(const Tensor<T>& image) const;

  EncoderOutput<T> encode(const Var<T>& image) const { return encoder_(image); }

  const ModelConfig& config() const { return config_; }
  const std::string& preset_name() const { return preset_name_; }
  const ParameterList<T>& parameters() const { return params_; }
  void zero_grad() const;

 private:
  Model(ModelConfig config, std::string preset_name, nn::Initializer init);

  ModelConfig config_;
  std::string preset_name_;
  Encoder<T> encoder_;
  Decoder<T> decoder_;
  ParameterList<T> params_;
};

template <typename T>
Index count_parameters(const Model<T>& model);

// Parameter count of a configuration without allocating the model twice.
Index count_parameters(const ModelConfig& config);

// Per-pixel argmax over classes of (B, N, H, W) logits -> (B*H*W) labels.
template <typename T>
std::vector<std::uint8_t> argmax_labels(const Tensor<T>& logits);

// Checkpoint: 8-byte magic, u32 version, u64 manifest length, JSON manifest
// (preset, config, dtype, ordered parameter names and shapes), then raw
// little-endian tensors in manifest order.
template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());

// Rebuilds the model from the manifest and restores every tensor bit-exactly.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

}  // namespace sonarseg
