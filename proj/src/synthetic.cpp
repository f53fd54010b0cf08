// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "sonarseg/data.hpp"

namespace sonarseg {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Position-keyed uniform in [0, 1): the same (key, y, x) always gives the
// same value regardless of evaluation order.
double hash_uniform(std::uint64_t key, std::int64_t y, std::int64_t x) {
  const auto h = mix64(key ^ mix64(static_cast<std::uint64_t>(y) * 0x632be59bd9b4e019ULL ^
                                   mix64(static_cast<std::uint64_t>(x))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double hash_normal(std::uint64_t key, std::int64_t y, std::int64_t x) {
  const double u1 = std::max(hash_uniform(key, y, x), 1e-300);
  const double u2 = hash_uniform(key ^ 0x5bd1e995ULL, y, x);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Smooth value noise in [0, 1] on a lattice with spacing `cell`.
double value_noise(std::uint64_t key, double y, double x, double cell) {
  const double gy = y / cell, gx = x / cell;
  const double fy = std::floor(gy), fx = std::floor(gx);
  const auto iy = static_cast<std::int64_t>(fy), ix = static_cast<std::int64_t>(fx);
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double ty = smooth(gy - fy), tx = smooth(gx - fx);
  const double v00 = hash_uniform(key, iy, ix), v01 = hash_uniform(key, iy, ix + 1);
  const double v10 = hash_uniform(key, iy + 1, ix), v11 = hash_uniform(key, iy + 1, ix + 1);
  const double top = v00 + (v01 - v00) * tx;
  const double bottom = v10 + (v11 - v10) * tx;
  return top + (bottom - top) * ty;
}

constexpr std::uint64_t kLayoutKey = 0x1a7e0u;
constexpr std::uint64_t kRippleKey = 0x21b71eu;
constexpr std::uint64_t kRockKey = 0x70c4u;
constexpr std::uint64_t kMaerlKey = 0x3ae71u;
constexpr std::uint64_t kSedimentKey = 0x5ed1u;
constexpr std::uint64_t kSpeckleKey = 0x59ec1eu;

double layout_field(std::uint64_t seed, int cls, double y, double x) {
  const std::uint64_t key = mix64(seed ^ (kLayoutKey + static_cast<std::uint64_t>(cls)));
  return 0.65 * value_noise(key, y, x, 128.0) + 0.35 * value_noise(key ^ 0xffULL, y, x, 48.0);
}

int argmax_class(std::uint64_t seed, const ClassMix& mix, const std::array<double, kNumSeabedClasses>& bias, double y,
                 double x) {
  int best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < kNumSeabedClasses; ++c) {
    if (mix[c] <= 0.0) continue;
    const double v = layout_field(seed, c, y, x) + bias[c];
    if (v > best_v) {
      best_v = v;
      best = c;
    }
  }
  return best;
}

// Offsets added to each class field so the argmax partition hits the
// requested shares; fitted on a subsampled grid.
std::array<double, kNumSeabedClasses> calibrate_bias(std::uint64_t seed, const ClassMix& mix, Index h, Index w) {
  std::array<double, kNumSeabedClasses> bias{};
  int active = 0;
  for (double m : mix) active += m > 0.0;
  if (active <= 1) return bias;
  const Index step = std::max<Index>(1, static_cast<Index>(std::sqrt(static_cast<double>(h * w) / 65536.0)));
  std::vector<std::array<double, kNumSeabedClasses>> samples;
  for (Index y = step / 2; y < h; y += step) {
    for (Index x = step / 2; x < w; x += step) {
      std::array<double, kNumSeabedClasses> f{};
      for (int c = 0; c < kNumSeabedClasses; ++c) f[c] = mix[c] > 0.0 ? layout_field(seed, c, y + 0.5, x + 0.5) : 0.0;
      samples.push_back(f);
    }
  }
  const double n = static_cast<double>(samples.size());
  double rate = 0.5;
  for (int iter = 0; iter < 400; ++iter) {
    std::array<double, kNumSeabedClasses> counts{};
    for (const auto& f : samples) {
      int best = -1;
      double best_v = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < kNumSeabedClasses; ++c) {
        if (mix[c] <= 0.0) continue;
        if (f[c] + bias[c] > best_v) {
          best_v = f[c] + bias[c];
          best = c;
        }
      }
      counts[best] += 1.0;
    }
    double worst = 0.0;
    for (int c = 0; c < kNumSeabedClasses; ++c) {
      if (mix[c] <= 0.0) continue;
      const double err = mix[c] - counts[c] / n;
      worst = std::max(worst, std::abs(err));
      bias[c] += rate * err;
    }
    if (worst < 0.002) break;
    if (iter % 100 == 99) rate *= 0.5;
  }
  return bias;
}

}  // namespace

void validate_class_mix(const ClassMix& mix) {
  double sum = 0.0;
  for (double m : mix) {
    if (!std::isfinite(m) || m < 0.0) throw std::invalid_argument("class mix entries must be finite and non-negative");
    sum += m;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("class mix must sum to 1, got " + std::to_string(sum));
  }
}

LabeledWaterfall generate_synthetic_waterfall(Index height, Index width, std::uint64_t seed, const ClassMix& class_mix) {
  if (height < kTileSize || width < kTileSize) {
    throw std::invalid_argument("waterfall must be at least 256x256, got " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
  validate_class_mix(class_mix);

  std::mt19937_64 rng(mix64(seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TextureParams tex;
  tex.ripple_angle = unit(rng) * std::numbers::pi;
  tex.ripple_wavelength = 8.0 + 6.0 * unit(rng);
  tex.shadow_offset = 3 + static_cast<Index>(unit(rng) * 4.0);
  tex.speckle_sigma = 0.12 + 0.06 * unit(rng);

  const auto bias = calibrate_bias(seed, class_mix, height, width);
  const std::uint64_t ripple_key = mix64(seed ^ kRippleKey), rock_key = mix64(seed ^ kRockKey);
  const std::uint64_t maerl_key = mix64(seed ^ kMaerlKey), sediment_key = mix64(seed ^ kSedimentKey);
  const std::uint64_t speckle_key = mix64(seed ^ kSpeckleKey);

  auto rock_blob = [&](Index y, Index x) {
    return 0.6 * value_noise(rock_key, y, x, 12.0) + 0.4 * value_noise(rock_key ^ 1u, y, x, 5.0);
  };
  constexpr double kRockThreshold = 0.6;

  LabeledWaterfall out;
  out.waterfall.seed = seed;
  out.waterfall.class_mix = class_mix;
  out.waterfall.texture = tex;
  out.waterfall.intensity = Intensity(height, width);
  out.mask = Mask(height, width);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const int cls = argmax_class(seed, class_mix, bias, y + 0.5, x + 0.5);
      double v = 0.0;
      switch (cls) {
        case 0: {
          const double theta = tex.ripple_angle + 0.4 * (value_noise(ripple_key, y, x, 256.0) - 0.5);
          const double phase = 2.0 * std::numbers::pi * (x * std::cos(theta) + y * std::sin(theta)) / tex.ripple_wavelength;
          v = 0.5 + 0.3 * std::sin(phase) + 0.05 * hash_normal(ripple_key ^ 7u, y, x);
          break;
        }
        case 1: {
          if (rock_blob(y, x) > kRockThreshold) {
            v = 0.88;
          } else if (x >= tex.shadow_offset && rock_blob(y, x - tex.shadow_offset) > kRockThreshold) {
            v = 0.06;
          } else {
            v = 0.42;
          }
          break;
        }
        case 2:
          v = 0.35 + 0.5 * hash_uniform(maerl_key, y / 2, x / 2);
          break;
        default:
          v = 0.3 + 0.06 * value_noise(sediment_key, y, x, 24.0);
          break;
      }
      v *= std::max(0.0, 1.0 + tex.speckle_sigma * hash_normal(speckle_key, y, x));
      out.waterfall.intensity.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      out.mask.at(y, x) = static_cast<std::uint8_t>(cls);
    }
  }
  return out;
}

ClassMix class_fractions(const Mask& mask) {
  ClassMix counts{};
  double total = 0.0;
  for (auto label : mask.pixels) {
    if (label < kNumSeabedClasses) {
      counts[label] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (auto& c : counts) c /= total;
  }
  return counts;
}

}  // namespace sonarseg
