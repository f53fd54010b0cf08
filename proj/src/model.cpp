// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/model.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sonarseg {

namespace {

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

constexpr std::array<char, 8> kMagic{'S', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed, std::string preset_name)
    : Model(std::move(config), std::move(preset_name), nn::Initializer(seed)) {}

template <typename T>
Model<T>::Model(ModelConfig config, std::string preset_name, nn::Initializer init)
    : config_(std::move(config)),
      preset_name_(std::move(preset_name)),
      encoder_(validated(config_), init),
      decoder_(config_, init) {
  encoder_.collect(params_, "encoder.");
  decoder_.collect(params_, "decoder.");
}

template <typename T>
Var<T> Model<T>::forward(const Var<T>& image) const {
  validate_image_shape(image->value.shape());
  const Index h = image->value.dim(2), w = image->value.dim(3);
  return decoder_(encoder_(image), h, w);
}

template <typename T>
Tensor<T> Model<T>::predict_logits(const Tensor<T>& image) const {
  NoGradGuard guard;
  return forward(constant(image))->value;
}

template <typename T>
void Model<T>::zero_grad() const {
  for (const auto& p : params_) p.var->zero_grad();
}

template <typename T>
Index count_parameters(const Model<T>& model) {
  Index n = 0;
  for (const auto& p : model.parameters()) n += p.var->value.numel();
  return n;
}

Index count_parameters(const ModelConfig& config) { return count_parameters(Model<float>(config)); }

template <typename T>
std::vector<std::uint8_t> argmax_labels(const Tensor<T>& logits) {
  if (logits.rank() != 4) throw std::invalid_argument("argmax_labels: expected (B, N, H, W) logits");
  const Index B = logits.dim(0), K = logits.dim(1), P = logits.dim(2) * logits.dim(3);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(B * P));
  for (Index b = 0; b < B; ++b) {
    for (Index p = 0; p < P; ++p) {
      Index best = 0;
      T bv = logits[b * K * P + p];
      for (Index k = 1; k < K; ++k) {
        const T v = logits[(b * K + k) * P + p];
        if (v > bv) {
          bv = v;
          best = k;
        }
      }
      out[static_cast<std::size_t>(b * P + p)] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  nlohmann::json manifest;
  manifest["preset"] = model.preset_name();
  manifest["config"] = to_json(model.config());
  manifest["dtype"] = dtype_name<T>();
  manifest["extra"] = extra;
  auto& params = manifest["parameters"] = nlohmann::json::array();
  for (const auto& p : model.parameters()) params.push_back({{"name", p.name}, {"shape", p.var->value.shape()}});
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic.data(), kMagic.size());
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.parameters()) {
    const auto& v = p.var->value;
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.numel() * sizeof(T)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, nlohmann::json* extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("not a sonarseg checkpoint: " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint manifest: " + path.string());
  const auto manifest = nlohmann::json::parse(text);
  if (manifest.at("dtype").get<std::string>() != dtype_name<T>()) {
    throw std::runtime_error("checkpoint dtype " + manifest.at("dtype").get<std::string>() + " does not match " +
                             dtype_name<T>());
  }

  Model<T> model(model_config_from_json(manifest.at("config")), kDefaultInitSeed,
                 manifest.at("preset").get<std::string>());
  const auto& entries = manifest.at("parameters");
  const auto& params = model.parameters();
  if (entries.size() != params.size()) throw std::runtime_error("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params[i].var->value;
    if (entries[i].at("name").get<std::string>() != params[i].name || entries[i].at("shape").get<Shape>() != v.shape()) {
      throw std::runtime_error("checkpoint entry " + std::to_string(i) + " does not match parameter " + params[i].name);
    }
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.numel() * sizeof(T)));
  }
  if (!in) throw std::runtime_error("truncated checkpoint tensors: " + path.string());
  if (extra) *extra = manifest.value("extra", nlohmann::json::object());
  return model;
}

template class Model<float>;
template class Model<double>;
template Index count_parameters(const Model<float>&);
template Index count_parameters(const Model<double>&);
template std::vector<std::uint8_t> argmax_labels(const Tensor<float>&);
template std::vector<std::uint8_t> argmax_labels(const Tensor<double>&);
template void save_checkpoint(const Model<float>&, const std::filesystem::path&, const nlohmann::json&);
template void save_checkpoint(const Model<double>&, const std::filesystem::path&, const nlohmann::json&);
template Model<float> load_checkpoint(const std::filesystem::path&, nlohmann::json*);
template Model<double> load_checkpoint(const std::filesystem::path&, nlohmann::json*);

}  // namespace sonarseg
