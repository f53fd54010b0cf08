// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonarseg/data.hpp"
#include "sonarseg/model.hpp"

namespace sonarseg {

using ClassWeights = std::array<double, kNumSeabedClasses>;

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double base_lr = 6e-5;
  double weight_decay = 1e-2;
  int warmup_epochs = 3;
  double poly_power = 0.9;
  std::uint64_t seed = 0;
  std::optional<ClassWeights> class_weights;  // empty = "auto"
  bool augment = true;

  // Settings sized for a single CPU core: 30 epochs at batch 8 (200 tiles
  // is the matching gen-data size).
  static TrainConfig desk();

  // Throws std::invalid_argument on the first violated constraint.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Fields present in `j` override those of `base`; unknown keys are errors.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Linear warmup from 0 to base_lr, then polynomial decay to 0 at total_steps.
double poly_lr(Index step, Index total_steps, Index warmup_steps, double base_lr, double power);

// w_c = (1 / f_c) / mean_k(1 / f_k) over classes with f > 0; absent classes
// get weight 0.
ClassWeights auto_class_weights(const ClassMix& frequency);

struct MetricsReport {
  std::array<double, kNumSeabedClasses> per_class_iou{};
  std::array<bool, kNumSeabedClasses> present{};  // in prediction or target
  double miou = 0.0;
  double pixel_accuracy = 0.0;
  double fps = 0.0;
  Index params = 0;
};

nlohmann::json to_json(const MetricsReport& r);

// Global confusion matrix; rows = target, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = kNumSeabedClasses);

  // Throws on size mismatch or a non-ignored label >= num_classes.
  void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target,
           std::uint8_t ignore = kIgnoreLabel);
  std::uint64_t at(int target, int pred) const { return counts_[static_cast<std::size_t>(target * n_ + pred)]; }
  std::uint64_t total() const;

  // Throws std::invalid_argument when nothing was counted.
  MetricsReport report() const;

 private:
  int n_;
  std::vector<std::uint64_t> counts_;
};

MetricsReport mean_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target,
                       int num_classes = kNumSeabedClasses, std::uint8_t ignore = kIgnoreLabel);

// Decoupled weight decay Adam.
template <typename T>
class AdamW {
 public:
  AdamW(ParameterList<T> params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // Parameters without a gradient are left untouched.
  void step(double lr);
  Index steps_taken() const { return t_; }

 private:
  ParameterList<T> params_;
  std::vector<Tensor<T>> m_, v_;
  double wd_, beta1_, beta2_, eps_;
  Index t_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double train_pixel_accuracy = 0.0;
  std::optional<double> val_miou;
  double lr = 0.0;  // at the last step of the epoch
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::optional<double> best_val_miou;
  int best_epoch = 0;  // 0 = initial weights
  ClassWeights class_weights{};
};

nlohmann::json history_to_json(const TrainResult& r);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainHooks {
  // Best-validation checkpoint (or the final one without a validation set).
  std::optional<std::filesystem::path> checkpoint_path;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Runs the full schedule on `model` in place. Throws TrainingDiverged on a
// non-finite loss, std::invalid_argument on an empty training set.
TrainResult train(Model<float>& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const TrainHooks& hooks = {});

// Stacks samples [begin, end) into a (B, 1, H, W) tensor and flat labels.
std::pair<Tensor<float>, std::vector<std::uint8_t>> make_batch(const std::vector<Sample>& samples, std::size_t begin,
                                                               std::size_t end);

// Forward over the set in batches; one global confusion matrix.
MetricsReport evaluate(const Model<float>& model, const std::vector<Sample>& samples, int batch_size = 8);

struct ThroughputResult {
  double fps = 0.0;
  double median_latency_s = 0.0;
};

// Median single-image latency over `timed_iters` batch-1 forwards.
ThroughputResult benchmark_throughput(const Model<float>& model, Index height = 256, Index width = 256,
                                      int warmup_iters = 2, int timed_iters = 10);

// ---- finite-difference gradient oracle -------------------------------------

inline constexpr double kGradCheckStep = 1e-4;
inline constexpr double kGradCheckTolerance = 1e-3;

struct GradCheckReport {
  std::string block;
  double max_rel_error = 0.0;
  Index checked = 0;  // coordinates compared
  Index skipped = 0;  // coordinates whose stencil crossed a kink
  bool passed = false;
};

const std::vector<std::string>& gradient_check_blocks();

// Double precision, central differences at kGradCheckStep on seeded random
// inputs and weights; relative error |a - n| / max(|a| + |n|, 1e-8) per
// coordinate. Coordinates whose stencil moves any hardswish or |.| input
// across its kink are skipped (see ops::KinkMonitor); more than 10% skipped
// fails the check.
GradCheckReport gradient_check(const std::string& block, double tolerance = kGradCheckTolerance,
                               std::uint64_t seed = 1);

nlohmann::json to_json(const GradCheckReport& r);

}  // namespace sonarseg
