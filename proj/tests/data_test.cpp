// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "sonarseg/data.hpp"
#include "sonarseg/verification.hpp"

using namespace sonarseg;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sonarseg_data_test" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Blocky label field with a few ignore pixels, plus an image that encodes
// the label (label / 3).
std::pair<Intensity, Mask> blocks(Index size, Index block) {
  Intensity image(size, size);
  Mask mask(size, size);
  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      const auto label = static_cast<std::uint8_t>(((y / block) * 3 + (x / block)) % 4);
      mask.at(y, x) = label;
      image.at(y, x) = static_cast<float>(label) / 3.0f;
    }
  }
  return {image, mask};
}

std::vector<ManifestEntry> fake_tiles(int sources, int per_source) {
  std::vector<ManifestEntry> out;
  for (int s = 0; s < sources; ++s) {
    for (int t = 0; t < per_source; ++t) {
      out.push_back({"i" + std::to_string(s) + "_" + std::to_string(t), "m", Split::kTrain, s, {t * 128, 0}});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("synthetic generator") {
  SUBCASE("same seed gives identical outputs") {
    const auto a = generate_synthetic_waterfall(256, 320, 42);
    const auto b = generate_synthetic_waterfall(256, 320, 42);
    CHECK(a.waterfall.intensity == b.waterfall.intensity);
    CHECK(a.mask == b.mask);
    const auto c = generate_synthetic_waterfall(256, 320, 43);
    CHECK_FALSE(a.mask == c.mask);
  }
  SUBCASE("single-class mix gives a uniform mask") {
    const auto wf = generate_synthetic_waterfall(256, 256, 7, {1.0, 0.0, 0.0, 0.0});
    CHECK(std::all_of(wf.mask.pixels.begin(), wf.mask.pixels.end(), [](auto v) { return v == 0; }));
  }
  SUBCASE("fractions follow the mix") {
    const auto wf = generate_synthetic_waterfall(512, 512, 3);
    const auto f = class_fractions(wf.mask);
    for (int c = 0; c < kNumSeabedClasses; ++c) CHECK(std::abs(f[c] - kSurveyClassMix[c]) <= 0.05);
  }
  SUBCASE("intensity stays in [0, 1] and labels in range") {
    const auto wf = generate_synthetic_waterfall(256, 256, 5);
    for (auto v : wf.waterfall.intensity.pixels) CHECK((v >= 0.0f && v <= 1.0f));
    for (auto v : wf.mask.pixels) CHECK(v < kNumSeabedClasses);
  }
  SUBCASE("invalid mixes and sizes are rejected") {
    CHECK_THROWS(generate_synthetic_waterfall(256, 256, 1, {0.5, 0.5, 0.5, 0.5}));
    CHECK_THROWS(generate_synthetic_waterfall(256, 256, 1, {-0.1, 0.6, 0.3, 0.2}));
    CHECK_THROWS(generate_synthetic_waterfall(255, 256, 1));
  }
}

TEST_CASE("tile layout") {
  SUBCASE("512x512 gives 3x3") { CHECK(make_tile_layout(512, 512).count() == 9); }
  SUBCASE("256x256 gives one tile") { CHECK(make_tile_layout(256, 256).count() == 1); }
  SUBCASE("600x256 gives 4x1 with the last row clamped") {
    const auto layout = make_tile_layout(600, 256);
    CHECK(layout.row_origins == std::vector<Index>{0, 128, 256, 344});
    CHECK(layout.col_origins == std::vector<Index>{0});
  }
  SUBCASE("every pixel is covered for assorted sizes") {
    for (Index h : {256, 300, 384, 600, 1024}) {
      for (Index w : {256, 389, 512}) {
        const auto layout = make_tile_layout(h, w);
        std::vector<int> cover(static_cast<std::size_t>(h * w), 0);
        for (const auto& o : layout.origins()) {
          CHECK(o.row + kTileSize <= h);
          CHECK(o.col + kTileSize <= w);
          for (Index y = o.row; y < o.row + kTileSize; ++y) {
            for (Index x = o.col; x < o.col + kTileSize; ++x) ++cover[static_cast<std::size_t>(y * w + x)];
          }
        }
        CHECK(std::count(cover.begin(), cover.end(), 0) == 0);
      }
    }
  }
  SUBCASE("too small or bad stride") {
    CHECK_THROWS(make_tile_layout(200, 256));
    CHECK_THROWS(make_tile_layout(256, 256, 256, 0));
    CHECK_THROWS(make_tile_layout(256, 256, 256, 300));
  }
}

TEST_CASE("stitching") {
  SUBCASE("tile then stitch is the identity") { CHECK(check_tile_stitch_roundtrip().passed); }
  SUBCASE("single tile") {
    const auto [image, mask] = blocks(256, 40);
    const MaskTile t{mask, {0, 0}};
    CHECK(stitch_masks(std::span(&t, 1), 256, 256) == mask);
  }
  SUBCASE("midline tie goes to the smaller origin") {
    // Width-3 tiles at columns 0 and 2 overlap at column 2, whose center
    // (2.5) is 1 from both tile centers (1.5 and 3.5).
    std::vector<MaskTile> tiles{{Mask(1, 3, 2), {0, 2}}, {Mask(1, 3, 1), {0, 0}}};
    const auto out = stitch_masks(tiles, 1, 5);
    CHECK(out.pixels == std::vector<std::uint8_t>{1, 1, 1, 2, 2});
  }
  SUBCASE("nearest center breaks a two-way vote") {
    std::vector<MaskTile> tiles{{Mask(1, 4, 1), {0, 0}}, {Mask(1, 4, 2), {0, 2}}};
    const auto out = stitch_masks(tiles, 1, 6);
    CHECK(out.pixels == std::vector<std::uint8_t>{1, 1, 1, 2, 2, 2});
  }
  SUBCASE("majority wins over distance") {
    std::vector<MaskTile> tiles{{Mask(1, 1, 3), {0, 0}}, {Mask(1, 3, 1), {0, 0}}, {Mask(1, 3, 1), {0, 0}}};
    tiles[0].mask.at(0, 0) = 3;
    const auto out = stitch_masks(tiles, 1, 3);
    CHECK(out.pixels == std::vector<std::uint8_t>{1, 1, 1});
  }
  SUBCASE("uncovered pixel is an error") {
    std::vector<MaskTile> tiles{{Mask(2, 2, 1), {0, 0}}};
    CHECK_THROWS(stitch_masks(tiles, 2, 3));
  }
}

TEST_CASE("augmentation") {
  const auto [image, mask0] = blocks(256, 32);
  auto mask = mask0;
  for (std::size_t i = 0; i < mask.pixels.size(); i += 101) mask.pixels[i] = kIgnoreLabel;

  SUBCASE("fixed seed is deterministic") {
    const auto a = augment(image, mask, 9);
    const auto b = augment(image, mask, 9);
    CHECK(a.image == b.image);
    CHECK(a.mask == b.mask);
  }
  SUBCASE("zero probability returns the input") {
    AugmentOptions none;
    none.probability = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = augment(image, mask, seed, none);
      CHECK_FALSE(r.applied.any());
      CHECK(r.image == image);
      CHECK(r.mask == mask);
    }
  }
  SUBCASE("labels stay within {0..3, 255} over 100 seeds") {
    AugmentOptions always;
    always.probability = 1.0;
    int changed = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto r = augment(image, mask, seed, seed % 2 ? always : AugmentOptions{});
      changed += r.applied.any();
      CHECK(r.image.height == 256);
      CHECK(r.mask.width == 256);
      for (auto v : r.mask.pixels) CHECK((v < kNumSeabedClasses || v == kIgnoreLabel));
      for (auto v : r.image.pixels) CHECK((v >= 0.0f && v <= 1.0f));
    }
    CHECK(changed > 50);
  }
  SUBCASE("photometric ops leave the mask alone") {
    AugmentOptions photo;
    photo.geometric = false;
    photo.probability = 1.0;
    const auto r = augment(image, mask, 3, photo);
    CHECK(r.mask == mask);
    CHECK_FALSE(r.image == image);
  }
  SUBCASE("geometric ops move image and mask together") {
    AugmentOptions geo;
    geo.photometric = false;
    geo.probability = 1.0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto r = augment(image, mask0, seed, geo);
      Index checked = 0;
      // Away from label edges the image must still read label / 3. Two
      // bilinear resamplings (rotation, then up to 1.41x crop magnification)
      // blend over about 2 px, so interior means a uniform 7x7 window.
      for (Index y = 3; y < 253; ++y) {
        for (Index x = 3; x < 253; ++x) {
          const auto label = r.mask.at(y, x);
          if (label == kIgnoreLabel) continue;
          bool uniform = true;
          for (Index dy = -3; dy <= 3 && uniform; ++dy) {
            for (Index dx = -3; dx <= 3; ++dx) uniform = uniform && r.mask.at(y + dy, x + dx) == label;
          }
          if (!uniform) continue;
          ++checked;
          if (std::abs(r.image.at(y, x) - label / 3.0f) > 1e-4f) {
            FAIL("seed " << seed << " pixel " << y << "," << x);
          }
        }
      }
      CHECK(checked > 10000);
    }
  }
}

TEST_CASE("dataset split") {
  SUBCASE("1000 tiles from 10 waterfalls") {
    const auto m = split_dataset(fake_tiles(10, 100), {});
    const double pool = static_cast<double>(m.count(Split::kTrain) + m.count(Split::kVal));
    CHECK(std::abs(m.count(Split::kTrain) / pool - 0.8) <= 0.01);
    CHECK(std::abs(m.count(Split::kVal) / pool - 0.2) <= 0.01);
    CHECK(m.count(Split::kTest) > 0);
    std::set<int> test_sources, other_sources;
    for (const auto& e : m.entries) (e.split == Split::kTest ? test_sources : other_sources).insert(e.source_id);
    for (int s : test_sources) CHECK(other_sources.count(s) == 0);
    CHECK(m.warnings.empty());
  }
  SUBCASE("one waterfall cannot give a disjoint test set") {
    CHECK_THROWS_AS(split_dataset(fake_tiles(1, 30), {}), std::invalid_argument);
  }
  SUBCASE("ratios (1, 0) leave validation empty with a warning") {
    SplitOptions o;
    o.train_ratio = 1.0;
    o.val_ratio = 0.0;
    const auto m = split_dataset(fake_tiles(10, 20), o);
    CHECK(m.count(Split::kVal) == 0);
    CHECK_FALSE(m.warnings.empty());
  }
  SUBCASE("seeded") {
    const auto a = split_dataset(fake_tiles(6, 10), {});
    const auto b = split_dataset(fake_tiles(6, 10), {});
    CHECK(to_json(a) == to_json(b));
  }
  SUBCASE("bad ratios") {
    SplitOptions o;
    o.train_ratio = 0.7;
    CHECK_THROWS(split_dataset(fake_tiles(4, 4), o));
  }
}

TEST_CASE("manifest JSON round-trip") {
  auto m = split_dataset(fake_tiles(5, 7), {});
  m.class_frequency = kSurveyClassMix;
  const auto back = manifest_from_json(to_json(m));
  CHECK(to_json(back) == to_json(m));
  auto j = to_json(m);
  j["entries"][0]["split"] = "holdout";
  CHECK_THROWS(manifest_from_json(j));
}

TEST_CASE("generate, read and load a dataset") {
  const auto root = scratch("gen");
  GenerateOptions opt;
  opt.height = 384;
  opt.width = 256;
  opt.count = 3;
  opt.seed = 2;
  const auto m = generate_dataset(root, opt);
  CHECK(m.entries.size() == 3 * 2);
  CHECK(std::filesystem::exists(root / "manifest.json"));
  CHECK(std::filesystem::exists(root / "waterfalls" / "wf002_mask.png"));
  const auto back = read_manifest(root);
  CHECK(to_json(back) == to_json(m));
  for (auto split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto samples = load_samples(root, back, split);
    CHECK(samples.size() == back.count(split));
    for (const auto& s : samples) {
      CHECK(s.image.height == kTileSize);
      CHECK(s.mask.width == kTileSize);
    }
  }
  // Tiles on disk match a fresh generation of the same waterfall.
  const auto wf = generate_synthetic_waterfall(384, 256, 2 * 1000003ULL + 0);
  for (const auto& e : back.entries) {
    if (e.source_id != 0) continue;
    CHECK(read_png_indices(root / e.mask) == crop(wf.mask, e.origin, kTileSize, kTileSize));
    CHECK(read_png_gray(root / e.image) == to_gray8(crop(wf.waterfall.intensity, e.origin, kTileSize, kTileSize)));
  }
  CHECK_THROWS(read_manifest(scratch("empty")));
}

TEST_CASE("display palette") {
  const auto p = mask_palette();
  CHECK(p[0] == Rgb{255, 215, 0});
  CHECK(p[1] == Rgb{139, 69, 19});
  CHECK(p[2] == Rgb{255, 0, 255});
  CHECK(p[3] == Rgb{128, 128, 128});
  CHECK(p[kIgnoreLabel] == Rgb{0, 0, 0});
  Intensity image(1, 2, 1.0f);
  Mask mask(1, 2);
  mask.at(0, 1) = kIgnoreLabel;
  const auto o = overlay(image, mask, 0.5);
  CHECK(o[0] == Rgb{255, 235, 128});
  CHECK(o[1] == Rgb{128, 128, 128});
}

TEST_CASE("png round-trips") {
  const auto dir = scratch("png");
  Mask mask(3, 5);
  for (std::size_t i = 0; i < mask.pixels.size(); ++i) mask.pixels[i] = static_cast<std::uint8_t>(i % 4);
  mask.pixels[7] = kIgnoreLabel;
  write_png_palette(dir / "m.png", mask, mask_palette());
  CHECK(read_png_indices(dir / "m.png") == mask);
  Plane<std::uint8_t> gray(4, 3);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) gray.pixels[i] = static_cast<std::uint8_t>(i * 20);
  write_png_gray(dir / "g.png", gray);
  CHECK(read_png_gray(dir / "g.png") == gray);
  CHECK_THROWS(read_png_gray(dir / "absent.png"));
}
