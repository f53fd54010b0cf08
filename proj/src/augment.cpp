// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "sonarseg/data.hpp"

namespace sonarseg {

namespace {

float sample_bilinear(const Intensity& img, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const auto y0 = static_cast<Index>(y), x0 = static_cast<Index>(x);
  const Index y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double ty = y - y0, tx = x - x0;
  const double top = img.at(y0, x0) + (img.at(y0, x1) - img.at(y0, x0)) * tx;
  const double bottom = img.at(y1, x0) + (img.at(y1, x1) - img.at(y1, x0)) * tx;
  return static_cast<float>(top + (bottom - top) * ty);
}

void rotate(Intensity& img, Mask& mask, double angle_deg) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  Intensity out_img(img.height, img.width);
  Mask out_mask(img.height, img.width, kIgnoreLabel);
  for (Index y = 0; y < img.height; ++y) {
    for (Index x = 0; x < img.width; ++x) {
      // Inverse map: destination -> source.
      const double sy = -s * (x - cx) + c * (y - cy) + cy;
      const double sx = c * (x - cx) + s * (y - cy) + cx;
      const auto ny = static_cast<Index>(std::lround(sy)), nx = static_cast<Index>(std::lround(sx));
      if (ny < 0 || ny >= img.height || nx < 0 || nx >= img.width) continue;
      out_mask.at(y, x) = mask.at(ny, nx);
      out_img.at(y, x) = sample_bilinear(img, sy, sx);
    }
  }
  img = std::move(out_img);
  mask = std::move(out_mask);
}

void resized_crop(Intensity& img, Mask& mask, Index ch, Index cw, Index oy, Index ox) {
  Intensity out_img(img.height, img.width);
  Mask out_mask(img.height, img.width);
  const double ry = static_cast<double>(ch) / img.height, rx = static_cast<double>(cw) / img.width;
  for (Index y = 0; y < img.height; ++y) {
    const double sy = oy + (y + 0.5) * ry - 0.5;
    const Index my = oy + std::min(ch - 1, static_cast<Index>((y + 0.5) * ry));
    for (Index x = 0; x < img.width; ++x) {
      const double sx = ox + (x + 0.5) * rx - 0.5;
      const Index mx = ox + std::min(cw - 1, static_cast<Index>((x + 0.5) * rx));
      out_img.at(y, x) = sample_bilinear(img, std::clamp<double>(sy, oy, oy + ch - 1), std::clamp<double>(sx, ox, ox + cw - 1));
      out_mask.at(y, x) = mask.at(my, mx);
    }
  }
  img = std::move(out_img);
  mask = std::move(out_mask);
}

template <typename P>
void flip_h(Plane<P>& p) {
  for (Index y = 0; y < p.height; ++y) std::reverse(&p.at(y, 0), &p.at(y, 0) + p.width);
}

template <typename P>
void flip_v(Plane<P>& p) {
  for (Index y = 0; y < p.height / 2; ++y) {
    std::swap_ranges(&p.at(y, 0), &p.at(y, 0) + p.width, &p.at(p.height - 1 - y, 0));
  }
}

// Separable filter with clamped borders.
Intensity convolve_separable(const Intensity& img, const std::vector<double>& k) {
  const auto r = static_cast<Index>(k.size() / 2);
  Intensity tmp(img.height, img.width), out(img.height, img.width);
  for (Index y = 0; y < img.height; ++y) {
    for (Index x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (Index i = -r; i <= r; ++i) acc += k[i + r] * img.at(y, std::clamp<Index>(x + i, 0, img.width - 1));
      tmp.at(y, x) = static_cast<float>(acc);
    }
  }
  for (Index y = 0; y < img.height; ++y) {
    for (Index x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (Index i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(std::clamp<Index>(y + i, 0, img.height - 1), x);
      out.at(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  const auto r = static_cast<Index>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (Index i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

void clamp_unit(Intensity& img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

AugmentResult augment(const Intensity& image, const Mask& mask, std::uint64_t seed, const AugmentOptions& options) {
  if (image.height != mask.height || image.width != mask.width) {
    throw std::invalid_argument("augment: image and mask sizes differ");
  }
  AugmentResult r{image, mask, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto coin = [&] { return unit(rng) < options.probability; };

  if (options.geometric) {
    if (coin()) {
      r.applied.rotate = true;
      r.applied.angle_deg = (2.0 * unit(rng) - 1.0) * options.max_rotation_deg;
      rotate(r.image, r.mask, r.applied.angle_deg);
    }
    if (coin()) {
      r.applied.crop = true;
      const double side = std::sqrt(options.min_crop_scale + (1.0 - options.min_crop_scale) * unit(rng));
      const Index ch = std::max<Index>(1, std::lround(side * image.height));
      const Index cw = std::max<Index>(1, std::lround(side * image.width));
      const auto oy = static_cast<Index>(unit(rng) * static_cast<double>(image.height - ch + 1));
      const auto ox = static_cast<Index>(unit(rng) * static_cast<double>(image.width - cw + 1));
      resized_crop(r.image, r.mask, ch, cw, std::min(oy, image.height - ch), std::min(ox, image.width - cw));
    }
    if (coin()) {
      r.applied.hflip = true;
      flip_h(r.image);
      flip_h(r.mask);
    }
    if (coin()) {
      r.applied.vflip = true;
      flip_v(r.image);
      flip_v(r.mask);
    }
  }
  if (options.photometric) {
    if (coin()) {
      r.applied.contrast = true;
      const double factor = 1.0 + (2.0 * unit(rng) - 1.0) * options.contrast_jitter;
      double mean = 0.0;
      for (float v : r.image.pixels) mean += v;
      mean /= static_cast<double>(r.image.pixels.size());
      for (auto& v : r.image.pixels) v = static_cast<float>(mean + factor * (v - mean));
      clamp_unit(r.image);
    }
    if (coin()) {
      r.applied.sharpen = true;
      const double amount = 0.5 + 0.5 * unit(rng);
      const auto smooth = convolve_separable(r.image, {1.0 / 3, 1.0 / 3, 1.0 / 3});
      for (std::size_t i = 0; i < r.image.pixels.size(); ++i) {
        r.image.pixels[i] = static_cast<float>(r.image.pixels[i] + amount * (r.image.pixels[i] - smooth.pixels[i]));
      }
      clamp_unit(r.image);
    }
    if (coin()) {
      r.applied.blur = true;
      const double sigma = 0.3 + (options.max_blur_sigma - 0.3) * unit(rng);
      r.image = convolve_separable(r.image, gaussian_kernel(sigma));
      clamp_unit(r.image);
    }
  }
  return r;
}

}  // namespace sonarseg
