// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>

#include "sonarseg/data.hpp"

namespace sonarseg {

using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.split == s; }));
}

json to_json(const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"image", e.image},
                       {"mask", e.mask},
                       {"split", to_string(e.split)},
                       {"source_id", e.source_id},
                       {"origin", {e.origin.row, e.origin.col}}});
  }
  json names = json::array();
  for (const char* n : kClassNames) names.push_back(n);
  return {{"version", 1},
          {"tile_size", m.tile_size},
          {"stride", m.stride},
          {"class_names", names},
          {"class_frequency", m.class_frequency},
          {"counts", {{"train", m.count(Split::kTrain)}, {"val", m.count(Split::kVal)}, {"test", m.count(Split::kTest)}}},
          {"warnings", m.warnings},
          {"entries", entries}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    if (j.at("version").get<int>() != 1) throw std::invalid_argument("unsupported manifest version");
    m.tile_size = j.at("tile_size").get<Index>();
    m.stride = j.at("stride").get<Index>();
    m.class_frequency = j.at("class_frequency").get<ClassMix>();
    m.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& e : j.at("entries")) {
      const auto origin = e.at("origin").get<std::array<Index, 2>>();
      m.entries.push_back({e.at("image").get<std::string>(), e.at("mask").get<std::string>(),
                           split_from_string(e.at("split").get<std::string>()), e.at("source_id").get<int>(),
                           {origin[0], origin[1]}});
    }
  } catch (const json::exception& ex) {
    throw std::invalid_argument(std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

DatasetManifest split_dataset(std::vector<ManifestEntry> tiles, const SplitOptions& options) {
  if (tiles.empty()) throw std::invalid_argument("split: no tiles");
  if (options.train_ratio < 0.0 || options.val_ratio < 0.0 || options.test_fraction < 0.0 ||
      std::abs(options.train_ratio + options.val_ratio - 1.0) > 1e-9) {
    throw std::invalid_argument("split: train/val ratios must be non-negative and sum to 1");
  }
  DatasetManifest out;
  std::map<int, std::size_t> per_source;
  for (const auto& t : tiles) ++per_source[t.source_id];
  std::vector<int> sources;
  for (const auto& [id, n] : per_source) sources.push_back(id);

  std::mt19937_64 rng(options.seed);
  std::shuffle(sources.begin(), sources.end(), rng);
  std::vector<int> test_sources;
  if (options.test_fraction > 0.0) {
    if (sources.size() < 2) {
      throw std::invalid_argument("split: a disjoint test set needs at least 2 source waterfalls, got " +
                                  std::to_string(sources.size()));
    }
    // Hold out whole waterfalls until the test set reaches the requested
    // size relative to the train set, keeping at least one for train/val.
    std::size_t test_tiles = 0;
    const std::size_t total = tiles.size();
    while (test_sources.size() + 1 < sources.size()) {
      const double train_estimate = static_cast<double>(total - test_tiles) * options.train_ratio;
      if (!test_sources.empty() && static_cast<double>(test_tiles) >= options.test_fraction * train_estimate) break;
      test_sources.push_back(sources[test_sources.size()]);
      test_tiles += per_source[test_sources.back()];
    }
  }
  auto is_test = [&](int id) { return std::find(test_sources.begin(), test_sources.end(), id) != test_sources.end(); };

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (is_test(tiles[i].source_id)) {
      tiles[i].split = Split::kTest;
    } else {
      pool.push_back(i);
    }
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(options.train_ratio * static_cast<double>(pool.size())));
  for (std::size_t k = 0; k < pool.size(); ++k) tiles[pool[k]].split = k < n_train ? Split::kTrain : Split::kVal;

  out.entries = std::move(tiles);
  if (out.count(Split::kVal) == 0) out.warnings.push_back("validation split is empty");
  if (out.count(Split::kTrain) == 0) out.warnings.push_back("training split is empty");
  return out;
}

namespace {

std::string tile_stem(int source, TileOrigin o) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "wf%03d_r%05lld_c%05lld", source, static_cast<long long>(o.row),
                static_cast<long long>(o.col));
  return buf;
}

std::string waterfall_stem(int source) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "wf%03d", source);
  return buf;
}

}  // namespace

DatasetManifest generate_dataset(const std::filesystem::path& root, const GenerateOptions& options) {
  if (options.count < 1) throw std::invalid_argument("gen-data: count must be >= 1");
  validate_class_mix(options.class_mix);
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks");
  std::filesystem::create_directories(root / "waterfalls");
  const auto palette = mask_palette();

  std::vector<ManifestEntry> entries;
  ClassMix counts{};
  double total = 0.0;
  for (int i = 0; i < options.count; ++i) {
    const auto wf = generate_synthetic_waterfall(options.height, options.width,
                                                 options.seed * 1000003ULL + static_cast<std::uint64_t>(i),
                                                 options.class_mix);
    const auto wf_stem = waterfall_stem(i);
    write_png_gray(root / "waterfalls" / (wf_stem + ".png"), to_gray8(wf.waterfall.intensity));
    write_png_palette(root / "waterfalls" / (wf_stem + "_mask.png"), wf.mask, palette);
    for (auto label : wf.mask.pixels) {
      if (label < kNumSeabedClasses) {
        counts[label] += 1.0;
        total += 1.0;
      }
    }
    for (const auto& t : tile_waterfall(wf.waterfall.intensity, wf.mask)) {
      const auto stem = tile_stem(i, t.origin);
      ManifestEntry e{"images/" + stem + ".png", "masks/" + stem + ".png", Split::kTrain, i, t.origin};
      write_png_gray(root / e.image, to_gray8(t.image));
      write_png_palette(root / e.mask, t.mask, palette);
      entries.push_back(std::move(e));
    }
  }
  SplitOptions split = options.split;
  split.seed = options.seed;
  auto manifest = split_dataset(std::move(entries), split);
  for (int c = 0; c < kNumSeabedClasses; ++c) manifest.class_frequency[c] = total > 0 ? counts[c] / total : 0.0;
  write_manifest(root, manifest);
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw std::invalid_argument("no manifest.json in " + root.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw std::invalid_argument("cannot parse " + (root / "manifest.json").string() + ": " + ex.what());
  }
  return manifest_from_json(j);
}

void write_manifest(const std::filesystem::path& root, const DatasetManifest& m) {
  std::ofstream out(root / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (root / "manifest.json").string());
  out << to_json(m).dump(2) << "\n";
}

std::vector<Sample> load_samples(const std::filesystem::path& root, const DatasetManifest& m, Split split) {
  std::vector<Sample> out;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    Sample s{from_gray8(read_png_gray(root / e.image)), read_png_indices(root / e.mask)};
    if (s.image.height != s.mask.height || s.image.width != s.mask.width) {
      throw std::invalid_argument(e.image + ": image and mask sizes differ");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Rgb> mask_palette() {
  std::vector<Rgb> p(256, Rgb{0, 0, 0});
  p[0] = {255, 215, 0};    // sand ripples: yellow
  p[1] = {139, 69, 19};    // rocks: brown
  p[2] = {255, 0, 255};    // maerl: magenta
  p[3] = {128, 128, 128};  // fine sediment: gray
  return p;
}

std::vector<Rgb> overlay(const Intensity& image, const Mask& mask, double alpha) {
  if (image.height != mask.height || image.width != mask.width) {
    throw std::invalid_argument("overlay: image and mask sizes differ");
  }
  const auto palette = mask_palette();
  std::vector<Rgb> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = 255.0 * std::clamp(image.pixels[i], 0.0f, 1.0f);
    const auto& c = palette[mask.pixels[i]];
    for (int k = 0; k < 3; ++k) out[i][k] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * g + alpha * c[k]));
  }
  return out;
}

}  // namespace sonarseg
