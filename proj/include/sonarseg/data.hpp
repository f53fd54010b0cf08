// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonarseg/image.hpp"
#include "sonarseg/ops.hpp"

namespace sonarseg {

inline constexpr int kNumSeabedClasses = 4;
inline constexpr std::uint8_t kIgnoreLabel = ops::kIgnoreLabel;

// Label order used everywhere: masks, logits, metrics.
inline constexpr std::array<const char*, kNumSeabedClasses> kClassNames{"sand_ripples", "rocks", "maerl",
                                                                         "fine_sediment"};

using ClassMix = std::array<double, kNumSeabedClasses>;
// Pixel shares of the four classes in the reference survey.
inline constexpr ClassMix kSurveyClassMix{0.506, 0.139, 0.1206, 0.2344};

void validate_class_mix(const ClassMix& mix);

struct TextureParams {
  double ripple_angle = 0.0;       // radians
  double ripple_wavelength = 0.0;  // pixels
  Index shadow_offset = 0;         // across-track rock shadow length, pixels
  double speckle_sigma = 0.0;
};

struct Waterfall {
  Intensity intensity;
  std::uint64_t seed = 0;
  ClassMix class_mix{};
  TextureParams texture;
};

struct LabeledWaterfall {
  Waterfall waterfall;
  Mask mask;
};

LabeledWaterfall generate_synthetic_waterfall(Index height, Index width, std::uint64_t seed,
                                              const ClassMix& class_mix = kSurveyClassMix);

// Fraction of non-ignored pixels per class; zeros if every pixel is ignored.
ClassMix class_fractions(const Mask& mask);

// ---- tiling -------------------------------------------------------------

inline constexpr Index kTileSize = 256;
inline constexpr Index kTileStride = 128;

struct TileOrigin {
  Index row = 0;
  Index col = 0;
  auto operator<=>(const TileOrigin&) const = default;
};

struct TileLayout {
  Index tile_size = kTileSize;
  Index stride = kTileStride;
  std::vector<Index> row_origins;
  std::vector<Index> col_origins;

  std::vector<TileOrigin> origins() const;  // row-major
  std::size_t count() const { return row_origins.size() * col_origins.size(); }
};

// Origins step by `stride`; the last one is clamped to end at the border.
TileLayout make_tile_layout(Index height, Index width, Index tile = kTileSize, Index stride = kTileStride);

template <typename P>
Plane<P> crop(const Plane<P>& src, TileOrigin origin, Index height, Index width);

struct Tile {
  Intensity image;
  Mask mask;
  TileOrigin origin;
};

std::vector<Tile> tile_waterfall(const Intensity& image, const Mask& mask, Index tile = kTileSize,
                                 Index stride = kTileStride);

struct MaskTile {
  Mask mask;
  TileOrigin origin;
};

// Majority vote over covering tiles. Ties go to the label of the tile whose
// center is nearest the pixel, then to the smallest origin.
Mask stitch_masks(std::span<const MaskTile> tiles, Index height, Index width);

// ---- augmentation ---------------------------------------------------------

struct AugmentOptions {
  double probability = 0.5;  // per op
  double max_rotation_deg = 30.0;
  double min_crop_scale = 0.5;  // area fraction
  double contrast_jitter = 0.25;
  double max_blur_sigma = 1.5;
  bool geometric = true;
  bool photometric = true;
};

struct AugmentRecord {
  bool rotate = false;
  double angle_deg = 0.0;
  bool crop = false;
  bool hflip = false;
  bool vflip = false;
  bool contrast = false;
  bool sharpen = false;
  bool blur = false;

  bool any() const { return rotate || crop || hflip || vflip || contrast || sharpen || blur; }
};

struct AugmentResult {
  Intensity image;
  Mask mask;
  AugmentRecord applied;
};

AugmentResult augment(const Intensity& image, const Mask& mask, std::uint64_t seed, const AugmentOptions& options = {});

// ---- dataset --------------------------------------------------------------

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  std::string image;  // relative to the dataset root
  std::string mask;
  Split split = Split::kTrain;
  int source_id = 0;
  TileOrigin origin;
};

struct DatasetManifest {
  Index tile_size = kTileSize;
  Index stride = kTileStride;
  std::vector<ManifestEntry> entries;
  ClassMix class_frequency{};
  std::vector<std::string> warnings;

  std::size_t count(Split s) const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

struct SplitOptions {
  double train_ratio = 0.8;
  double val_ratio = 0.2;
  double test_fraction = 0.05;  // test tiles relative to train tiles
  std::uint64_t seed = 0;
};

// Whole waterfalls go to test; the rest is split by tile.
DatasetManifest split_dataset(std::vector<ManifestEntry> tiles, const SplitOptions& options = {});

struct GenerateOptions {
  Index height = 1024;
  Index width = 512;
  int count = 4;  // waterfalls
  std::uint64_t seed = 0;
  ClassMix class_mix = kSurveyClassMix;
  SplitOptions split;
};

// Writes images/*.png, masks/*.png (tiles), waterfalls/wfNNN{,_mask}.png
// (full waterfalls) and manifest.json under `root`.
DatasetManifest generate_dataset(const std::filesystem::path& root, const GenerateOptions& options);

DatasetManifest read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const DatasetManifest& m);

struct Sample {
  Intensity image;
  Mask mask;
};

std::vector<Sample> load_samples(const std::filesystem::path& root, const DatasetManifest& m, Split split);

// Palette for mask and overlay PNGs, indexed by label; 255 is black.
std::vector<Rgb> mask_palette();
std::vector<Rgb> overlay(const Intensity& image, const Mask& mask, double alpha = 0.5);

}  // namespace sonarseg
