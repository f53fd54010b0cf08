// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "sonarseg/tensor.hpp"

namespace sonarseg {

// Single-channel 2-D raster, row-major.
template <typename P>
struct Plane {
  Index height = 0;
  Index width = 0;
  std::vector<P> pixels;

  Plane() = default;
  Plane(Index h, Index w, P fill = P{})
      : height(h), width(w), pixels(static_cast<std::size_t>(h * w), fill) {}

  P& at(Index y, Index x) { return pixels[static_cast<std::size_t>(y * width + x)]; }
  const P& at(Index y, Index x) const { return pixels[static_cast<std::size_t>(y * width + x)]; }

  bool operator==(const Plane&) const = default;
};

using Intensity = Plane<float>;
using Mask = Plane<std::uint8_t>;

using Rgb = std::array<std::uint8_t, 3>;

// Intensity in [0, 1] <-> 8-bit gray, rounding to nearest.
Plane<std::uint8_t> to_gray8(const Intensity& img);
Intensity from_gray8(const Plane<std::uint8_t>& img);

// Reads any PNG and converts it to 8-bit gray.
Plane<std::uint8_t> read_png_gray(const std::filesystem::path& path);
// Reads raw 8-bit samples of a palette or gray PNG without color conversion
// (palette indices for masks).
Plane<std::uint8_t> read_png_indices(const std::filesystem::path& path);

void write_png_gray(const std::filesystem::path& path, const Plane<std::uint8_t>& img);
// 8-bit palette PNG; pixel values index `palette`.
void write_png_palette(const std::filesystem::path& path, const Plane<std::uint8_t>& indices,
                       const std::vector<Rgb>& palette);
void write_png_rgb(const std::filesystem::path& path, Index height, Index width, const std::vector<Rgb>& rgb);

}  // namespace sonarseg
