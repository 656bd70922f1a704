#include "docbin/tiling.hpp"

#include <string>

#include "docbin/errors.hpp"

namespace docbin {

TileSet tile(const GrayImage& image, std::size_t size, double pad_value) {
  if (size == 0) throw ConfigError("tile size must be positive");
  TileSet set;
  set.height = image.height;
  set.width = image.width;
  set.tile_size = size;
  set.pad_value = pad_value;
  set.grid_rows = (image.height + size - 1) / size;
  set.grid_cols = (image.width + size - 1) / size;
  for (std::size_t tr = 0; tr < set.grid_rows; ++tr) {
    for (std::size_t tc = 0; tc < set.grid_cols; ++tc) {
      GrayImage t(size, size, pad_value);
      const std::size_t r0 = tr * size;
      const std::size_t c0 = tc * size;
      for (std::size_t r = 0; r < size && r0 + r < image.height; ++r) {
        for (std::size_t c = 0; c < size && c0 + c < image.width; ++c) {
          t.at(r, c) = image.at(r0 + r, c0 + c);
        }
      }
      set.tiles.push_back(std::move(t));
      set.origins.push_back({r0, c0});
    }
  }
  return set;
}

GrayImage untile(const TileSet& set) {
  if (set.tiles.size() != set.origins.size() ||
      set.tiles.size() != set.grid_rows * set.grid_cols) {
    throw DimensionError("untile: tile set has " + std::to_string(set.tiles.size()) +
                         " tiles for a " + std::to_string(set.grid_rows) + "x" +
                         std::to_string(set.grid_cols) + " grid");
  }
  GrayImage out(set.height, set.width);
  for (std::size_t i = 0; i < set.tiles.size(); ++i) {
    const GrayImage& t = set.tiles[i];
    if (t.height != set.tile_size || t.width != set.tile_size) {
      throw DimensionError("untile: tile " + std::to_string(i) + " is " +
                           std::to_string(t.height) + "x" + std::to_string(t.width) +
                           ", expected " + std::to_string(set.tile_size));
    }
    const TileOrigin o = set.origins[i];
    for (std::size_t r = 0; r < t.height && o.row + r < set.height; ++r) {
      for (std::size_t c = 0; c < t.width && o.col + c < set.width; ++c) {
        out.at(o.row + r, o.col + c) = t.at(r, c);
      }
    }
  }
  return out;
}

}  // namespace docbin
