#pragma once

#include <cstddef>
#include <vector>

#include "docbin/image.hpp"

namespace docbin {

/// Top-left corner of a tile in the (padded) source image.
struct TileOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
};

/// An image cut into equal square tiles, row-major, plus what is needed to
/// put it back together.
struct TileSet {
  std::vector<GrayImage> tiles;
  std::vector<TileOrigin> origins;
  std::size_t height = 0;  // original, before padding
  std::size_t width = 0;
  std::size_t tile_size = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  double pad_value = 1.0;
};

/// Pads right/bottom with `pad_value` to a multiple of `size` and cuts
/// non-overlapping tiles.
TileSet tile(const GrayImage& image, std::size_t size = 256, double pad_value = 1.0);

/// Reassembles the tiles and crops the padding.
GrayImage untile(const TileSet& tiles);

}  // namespace docbin
