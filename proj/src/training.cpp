// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sonarseg {

using nlohmann::json;

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = 8;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("learning rate must be positive");
  if (weight_decay < 0.0 || !std::isfinite(weight_decay)) throw std::invalid_argument("weight decay must be >= 0");
  if (!(poly_power > 0.0)) throw std::invalid_argument("poly power must be positive");
  if (warmup_epochs < 0) throw std::invalid_argument("warmup epochs must be >= 0");
  if (epochs > 0 && warmup_epochs >= epochs) {
    throw std::invalid_argument("warmup epochs (" + std::to_string(warmup_epochs) + ") must be fewer than epochs (" +
                                std::to_string(epochs) + ")");
  }
  if (class_weights) {
    for (double w : *class_weights) {
      if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("class weights must be positive");
    }
  }
}

json to_json(const TrainConfig& c) {
  json j{{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"base_lr", c.base_lr},
         {"weight_decay", c.weight_decay},
         {"warmup_epochs", c.warmup_epochs},
         {"poly_power", c.poly_power},
         {"seed", c.seed},
         {"augment", c.augment}};
  j["class_weights"] = c.class_weights ? json(*c.class_weights) : json("auto");
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") {
        base.epochs = value.get<int>();
      } else if (key == "batch_size") {
        base.batch_size = value.get<int>();
      } else if (key == "base_lr") {
        base.base_lr = value.get<double>();
      } else if (key == "weight_decay") {
        base.weight_decay = value.get<double>();
      } else if (key == "warmup_epochs") {
        base.warmup_epochs = value.get<int>();
      } else if (key == "poly_power") {
        base.poly_power = value.get<double>();
      } else if (key == "seed") {
        base.seed = value.get<std::uint64_t>();
      } else if (key == "augment") {
        base.augment = value.get<bool>();
      } else if (key == "class_weights") {
        if (value.is_string()) {
          if (value.get<std::string>() != "auto") throw std::invalid_argument("class_weights must be \"auto\" or 4 numbers");
          base.class_weights.reset();
        } else {
          base.class_weights = value.get<ClassWeights>();
        }
      } else {
        throw std::invalid_argument("unknown train config key '" + key + "'");
      }
    }
  } catch (const json::exception& ex) {
    throw std::invalid_argument(std::string("bad train config value: ") + ex.what());
  }
  return base;
}

double poly_lr(Index step, Index total_steps, Index warmup_steps, double base_lr, double power) {
  if (step < 0 || step > total_steps) throw std::out_of_range("poly_lr: step outside [0, total_steps]");
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps == warmup_steps) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * std::pow(1.0 - progress, power);
}

ClassWeights auto_class_weights(const ClassMix& frequency) {
  ClassWeights w{};
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < kNumSeabedClasses; ++c) {
    if (frequency[c] > 0.0) {
      w[c] = 1.0 / frequency[c];
      sum += w[c];
      ++present;
    }
  }
  if (present == 0) throw std::invalid_argument("class weights: no class has a positive frequency");
  const double mean = sum / present;
  for (auto& v : w) v /= mean;
  return w;
}

json to_json(const MetricsReport& r) {
  json present = json::array();
  for (bool p : r.present) present.push_back(p);
  json names = json::array();
  for (const char* n : kClassNames) names.push_back(n);
  return {{"per_class_iou", r.per_class_iou}, {"class_present", present}, {"class_names", names},
          {"miou", r.miou},                   {"pixel_accuracy", r.pixel_accuracy}, {"fps", r.fps},
          {"params", r.params}};
}

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : n_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
  if (num_classes < 1 || num_classes > 255) throw std::invalid_argument("confusion matrix: bad class count");
}

void ConfusionMatrix::add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target,
                          std::uint8_t ignore) {
  if (pred.size() != target.size()) throw std::invalid_argument("prediction and target sizes differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (target[i] == ignore) continue;
    if (target[i] >= n_ || pred[i] >= n_) {
      throw std::invalid_argument("label " + std::to_string(std::max(target[i], pred[i])) + " out of range");
    }
    ++counts_[static_cast<std::size_t>(target[i] * n_ + pred[i])];
  }
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

MetricsReport ConfusionMatrix::report() const {
  const auto all = total();
  if (all == 0) throw std::invalid_argument("mIoU undefined: no non-ignored pixels");
  if (n_ > kNumSeabedClasses) throw std::invalid_argument("report supports at most 4 classes");
  MetricsReport r;
  std::uint64_t correct = 0;
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_; ++c) {
    std::uint64_t row = 0, col = 0;
    for (int k = 0; k < n_; ++k) {
      row += at(c, k);
      col += at(k, c);
    }
    const auto tp = at(c, c);
    correct += tp;
    const auto uni = row + col - tp;
    if (uni == 0) continue;
    r.present[c] = true;
    r.per_class_iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += r.per_class_iou[c];
    ++present;
  }
  r.miou = sum / present;
  r.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(all);
  return r;
}

MetricsReport mean_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target, int num_classes,
                       std::uint8_t ignore) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, target, ignore);
  return cm.report();
}

template <typename T>
AdamW<T>::AdamW(ParameterList<T> params, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var->value.shape());
    v_.emplace_back(p.var->value.shape());
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& node = *params_[i].var;
    if (node.grad.shape() != node.value.shape()) continue;
    T* p = node.value.data();
    const T* g = node.grad.data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const Index n = node.value.numel();
    for (Index k = 0; k < n; ++k) {
      m[k] = static_cast<T>(beta1_ * m[k] + (1.0 - beta1_) * g[k]);
      v[k] = static_cast<T>(beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k]);
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      p[k] = static_cast<T>(p[k] - lr * (update + wd_ * p[k]));
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

json history_to_json(const TrainResult& r) {
  json epochs = json::array();
  for (const auto& e : r.history) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", e.loss},
                      {"train_pixel_accuracy", e.train_pixel_accuracy},
                      {"val_miou", e.val_miou ? json(*e.val_miou) : json(nullptr)},
                      {"lr", e.lr}});
  }
  return {{"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best_val_miou", r.best_val_miou ? json(*r.best_val_miou) : json(nullptr)},
          {"class_weights", r.class_weights}};
}

std::pair<Tensor<float>, std::vector<std::uint8_t>> make_batch(const std::vector<Sample>& samples, std::size_t begin,
                                                               std::size_t end) {
  if (begin >= end || end > samples.size()) throw std::out_of_range("make_batch: bad range");
  const Index h = samples[begin].image.height, w = samples[begin].image.width;
  const auto b = static_cast<Index>(end - begin);
  Tensor<float> images({b, 1, h, w});
  std::vector<std::uint8_t> labels;
  labels.reserve(static_cast<std::size_t>(b * h * w));
  for (std::size_t i = begin; i < end; ++i) {
    const auto& s = samples[i];
    if (s.image.height != h || s.image.width != w || s.mask.height != h || s.mask.width != w) {
      throw std::invalid_argument("make_batch: samples differ in size");
    }
    std::copy(s.image.pixels.begin(), s.image.pixels.end(), images.data() + (i - begin) * h * w);
    labels.insert(labels.end(), s.mask.pixels.begin(), s.mask.pixels.end());
  }
  return {std::move(images), std::move(labels)};
}

namespace {

std::uint64_t sample_seed(std::uint64_t seed, int epoch, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

ClassMix label_frequency(const std::vector<Sample>& samples) {
  ClassMix counts{};
  double total = 0.0;
  for (const auto& s : samples) {
    for (auto l : s.mask.pixels) {
      if (l < kNumSeabedClasses) {
        counts[l] += 1.0;
        total += 1.0;
      }
    }
  }
  if (total > 0.0) {
    for (auto& c : counts) c /= total;
  }
  return counts;
}

}  // namespace

TrainResult train(Model<float>& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");

  TrainResult result;
  result.class_weights = config.class_weights ? *config.class_weights : auto_class_weights(label_frequency(train_set));
  const auto& w = result.class_weights;

  const json ckpt_extra = {{"train_config", to_json(config)}};
  if (config.epochs == 0) {
    if (hooks.checkpoint_path) save_checkpoint(model, *hooks.checkpoint_path, ckpt_extra);
    return result;
  }

  const auto n = train_set.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const Index steps_per_epoch = static_cast<Index>((n + batch - 1) / batch);
  const Index total_steps = steps_per_epoch * config.epochs;
  const Index warmup_steps = steps_per_epoch * config.warmup_epochs;

  AdamW<float> optimizer(model.parameters(), config.weight_decay);
  std::mt19937_64 shuffle_rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  AugmentOptions aug_opts;
  Index step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::uint64_t correct = 0, counted = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const auto end = std::min(n, start + batch);
      std::vector<Sample> items;
      items.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train_set[order[k]];
        if (config.augment) {
          auto a = augment(s.image, s.mask, sample_seed(config.seed, epoch, order[k]), aug_opts);
          items.push_back({std::move(a.image), std::move(a.mask)});
        } else {
          items.push_back(s);
        }
      }
      auto [images, labels] = make_batch(items, 0, items.size());
      bool any_label = false;
      for (auto l : labels) any_label = any_label || l != kIgnoreLabel;
      lr = poly_lr(step, total_steps, warmup_steps, config.base_lr, config.poly_power);
      ++step;
      if (!any_label) continue;  // e.g. a crop that landed on ignore pixels only

      model.zero_grad();
      auto logits = model.forward(constant(std::move(images)));
      auto loss = ops::weighted_cross_entropy(logits, std::span<const std::uint8_t>(labels), std::span<const double>(w));
      const double loss_value = loss->value[0];
      if (!std::isfinite(loss_value)) {
        throw TrainingDiverged("loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(step));
      }
      const auto pred = argmax_labels(logits->value);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kIgnoreLabel) continue;
        ++counted;
        correct += pred[i] == labels[i];
      }
      backward(loss);
      optimizer.step(lr);
      loss_sum += loss_value * static_cast<double>(end - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.train_pixel_accuracy = counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
    rec.lr = lr;
    if (!val_set.empty()) rec.val_miou = evaluate(model, val_set, config.batch_size).miou;
    result.history.push_back(rec);

    const bool better = rec.val_miou ? (!result.best_val_miou || *rec.val_miou > *result.best_val_miou)
                                     : epoch == config.epochs;
    if (better) {
      result.best_val_miou = rec.val_miou;
      result.best_epoch = epoch;
      if (hooks.checkpoint_path) {
        auto extra = ckpt_extra;
        extra["epoch"] = epoch;
        save_checkpoint(model, *hooks.checkpoint_path, extra);
      }
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return result;
}

MetricsReport evaluate(const Model<float>& model, const std::vector<Sample>& samples, int batch_size) {
  if (samples.empty()) throw std::invalid_argument("evaluation set is empty");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  ConfusionMatrix cm(model.config().num_classes);
  const auto batch = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    const auto end = std::min(samples.size(), start + batch);
    auto [images, labels] = make_batch(samples, start, end);
    const auto pred = argmax_labels(model.predict_logits(images));
    cm.add(pred, labels);
  }
  auto report = cm.report();
  report.params = count_parameters(model);
  return report;
}

ThroughputResult benchmark_throughput(const Model<float>& model, Index height, Index width, int warmup_iters,
                                      int timed_iters) {
  if (timed_iters < 1) throw std::invalid_argument("benchmark needs at least one timed iteration");
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  Tensor<float> image({1, 1, height, width});
  for (auto& v : image.span()) v = unit(rng);
  for (int i = 0; i < warmup_iters; ++i) (void)model.predict_logits(image);
  std::vector<double> latencies;
  for (int i = 0; i < timed_iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)model.predict_logits(image);
    latencies.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(latencies.begin(), latencies.end());
  const auto k = latencies.size();
  const double median = k % 2 ? latencies[k / 2] : 0.5 * (latencies[k / 2 - 1] + latencies[k / 2]);
  return {1.0 / median, median};
}

}  // namespace sonarseg
