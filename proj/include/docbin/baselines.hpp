#pragma once

#include <cstddef>
#include <vector>

#include "docbin/image.hpp"

namespace docbin {

struct OtsuResult {
  int bin = 0;              // first bin of the background class
  double threshold = 0.0;   // bin / 256
  double between_variance = 0.0;
};

/// Histogram bin of a pixel in [0, 1]: min(255, floor(v * 256)).
int histogram_bin(double value);

/// Global threshold maximizing between-class variance over 256 bins.
/// Throws DataError when every pixel falls in one bin.
OtsuResult otsu_threshold(const GrayImage& image);

/// Pixels whose bin is below the Otsu bin become ink (0).
BinaryImage otsu(const GrayImage& image);

/// Per-pixel window mean and standard deviation. Windows are clipped at
/// the image border.
struct WindowStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

WindowStats window_stats(const GrayImage& image, int window);

/// t = mean * (1 + k * (stddev / r - 1)); pixel < t becomes ink.
BinaryImage sauvola(const GrayImage& image, int window = 25, double k = 0.2, double r = 0.5);

}  // namespace docbin
