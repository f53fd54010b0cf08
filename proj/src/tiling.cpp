// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <stdexcept>
#include <string>

#include "sonarseg/data.hpp"

namespace sonarseg {

namespace {

std::vector<Index> axis_origins(Index length, Index tile, Index stride) {
  const Index n = (length - tile + stride - 1) / stride + 1;
  std::vector<Index> out;
  for (Index i = 0; i + 1 < n; ++i) out.push_back(i * stride);
  out.push_back(length - tile);
  return out;
}

}  // namespace

std::vector<TileOrigin> TileLayout::origins() const {
  std::vector<TileOrigin> out;
  out.reserve(count());
  for (Index r : row_origins) {
    for (Index c : col_origins) out.push_back({r, c});
  }
  return out;
}

TileLayout make_tile_layout(Index height, Index width, Index tile, Index stride) {
  if (tile < 1 || stride < 1 || stride > tile) {
    throw std::invalid_argument("tiling needs 1 <= stride <= tile");
  }
  if (height < tile || width < tile) {
    throw std::invalid_argument("waterfall " + std::to_string(height) + "x" + std::to_string(width) +
                                " is smaller than the " + std::to_string(tile) + " px tile");
  }
  return TileLayout{tile, stride, axis_origins(height, tile, stride), axis_origins(width, tile, stride)};
}

template <typename P>
Plane<P> crop(const Plane<P>& src, TileOrigin origin, Index height, Index width) {
  if (origin.row < 0 || origin.col < 0 || origin.row + height > src.height || origin.col + width > src.width) {
    throw std::out_of_range("crop window outside the source raster");
  }
  Plane<P> out(height, width);
  for (Index y = 0; y < height; ++y) {
    const auto* row = &src.at(origin.row + y, origin.col);
    std::copy(row, row + width, &out.at(y, 0));
  }
  return out;
}

template Plane<float> crop(const Plane<float>&, TileOrigin, Index, Index);
template Plane<std::uint8_t> crop(const Plane<std::uint8_t>&, TileOrigin, Index, Index);

std::vector<Tile> tile_waterfall(const Intensity& image, const Mask& mask, Index tile, Index stride) {
  if (image.height != mask.height || image.width != mask.width) {
    throw std::invalid_argument("image and mask sizes differ");
  }
  const auto layout = make_tile_layout(image.height, image.width, tile, stride);
  std::vector<Tile> out;
  out.reserve(layout.count());
  for (const auto& o : layout.origins()) out.push_back({crop(image, o, tile, tile), crop(mask, o, tile, tile), o});
  return out;
}

Mask stitch_masks(std::span<const MaskTile> tiles, Index height, Index width) {
  if (height < 1 || width < 1) throw std::invalid_argument("stitch: empty output");
  Mask out(height, width);
  std::vector<std::size_t> active;
  struct Vote {
    std::uint8_t label;
    int count;
    Index dist2;  // doubled coordinates, so exact
    TileOrigin origin;
  };
  std::vector<Vote> votes;
  for (Index y = 0; y < height; ++y) {
    active.clear();
    for (std::size_t i = 0; i < tiles.size(); ++i) {
      const auto& t = tiles[i];
      if (t.origin.row <= y && y < t.origin.row + t.mask.height) active.push_back(i);
    }
    for (Index x = 0; x < width; ++x) {
      votes.clear();
      for (auto i : active) {
        const auto& t = tiles[i];
        if (x < t.origin.col || x >= t.origin.col + t.mask.width) continue;
        const auto label = t.mask.at(y - t.origin.row, x - t.origin.col);
        const Index dy = 2 * y + 1 - (2 * t.origin.row + t.mask.height);
        const Index dx = 2 * x + 1 - (2 * t.origin.col + t.mask.width);
        const Index d2 = dy * dy + dx * dx;
        auto it = std::find_if(votes.begin(), votes.end(), [&](const Vote& v) { return v.label == label; });
        if (it == votes.end()) {
          votes.push_back({label, 1, d2, t.origin});
        } else {
          ++it->count;
          if (d2 < it->dist2 || (d2 == it->dist2 && t.origin < it->origin)) {
            it->dist2 = d2;
            it->origin = t.origin;
          }
        }
      }
      if (votes.empty()) {
        throw std::invalid_argument("stitch: pixel (" + std::to_string(y) + ", " + std::to_string(x) +
                                    ") is not covered by any tile");
      }
      const auto best = std::min_element(votes.begin(), votes.end(), [](const Vote& a, const Vote& b) {
        if (a.count != b.count) return a.count > b.count;
        if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
        return a.origin < b.origin;
      });
      out.at(y, x) = best->label;
    }
  }
  return out;
}

}  // namespace sonarseg
