// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

namespace sonarseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

void write_simplified(const std::filesystem::path& path, png_uint_32 format, Index h, Index w, const void* data,
                      const void* colormap, int colormap_entries) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  image.colormap_entries = static_cast<png_uint_32>(colormap_entries);
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, colormap)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("failed to write " + path.string() + ": " + msg);
  }
}

// libpng reports errors through longjmp. These helpers hold no objects with
// destructors so the jump is safe.
bool read_header(png_structp png, png_infop info, std::FILE* f, png_uint_32* w, png_uint_32* h, int* color) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_read_info(png, info);
  *w = png_get_image_width(png, info);
  *h = png_get_image_height(png, info);
  *color = png_get_color_type(png, info);
  return png_get_bit_depth(png, info) == 8 && (*color == PNG_COLOR_TYPE_PALETTE || *color == PNG_COLOR_TYPE_GRAY);
}

bool read_rows(png_structp png, png_bytep* rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

bool write_palette_rows(png_structp png, png_infop info, std::FILE* f, png_uint_32 w, png_uint_32 h,
                        const png_color* colors, int num_colors, png_bytep* rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_PLTE(png, info, colors, num_colors);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

}  // namespace

Plane<std::uint8_t> to_gray8(const Intensity& img) {
  Plane<std::uint8_t> out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Intensity from_gray8(const Plane<std::uint8_t>& img) {
  Intensity out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  return out;
}

Plane<std::uint8_t> read_png_gray(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  Plane<std::uint8_t> out(image.height, image.width);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

Plane<std::uint8_t> read_png_indices(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  png_uint_32 w = 0, h = 0;
  int color = 0;
  if (!read_header(png, info, file.get(), &w, &h, &color)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path.string() + ": expected an 8-bit palette or gray PNG");
  }
  Plane<std::uint8_t> out(h, w);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = out.pixels.data() + static_cast<std::size_t>(y) * w;
  const bool ok = read_rows(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw std::runtime_error("cannot decode PNG " + path.string());
  return out;
}

void write_png_gray(const std::filesystem::path& path, const Plane<std::uint8_t>& img) {
  write_simplified(path, PNG_FORMAT_GRAY, img.height, img.width, img.pixels.data(), nullptr, 0);
}

void write_png_palette(const std::filesystem::path& path, const Plane<std::uint8_t>& indices,
                       const std::vector<Rgb>& palette) {
  if (palette.empty() || palette.size() > 256) throw std::invalid_argument("palette must have 1..256 entries");
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_color> colors(palette.size());
  for (std::size_t i = 0; i < palette.size(); ++i) colors[i] = {palette[i][0], palette[i][1], palette[i][2]};
  std::vector<png_bytep> rows(static_cast<std::size_t>(indices.height));
  for (Index y = 0; y < indices.height; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(indices.pixels.data() + y * indices.width);
  }
  const bool ok = write_palette_rows(png, info, file.get(), static_cast<png_uint_32>(indices.width),
                                     static_cast<png_uint_32>(indices.height), colors.data(),
                                     static_cast<int>(colors.size()), rows.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw std::runtime_error("failed to write " + path.string());
}

void write_png_rgb(const std::filesystem::path& path, Index height, Index width, const std::vector<Rgb>& rgb) {
  if (static_cast<Index>(rgb.size()) != height * width) throw std::invalid_argument("rgb buffer size mismatch");
  write_simplified(path, PNG_FORMAT_RGB, height, width, rgb.data(), nullptr, 0);
}

}  // namespace sonarseg
