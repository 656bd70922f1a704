#include "docbin/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "docbin/errors.hpp"

namespace docbin {

int histogram_bin(double value) {
  return std::clamp(static_cast<int>(std::floor(value * 256.0)), 0, 255);
}

OtsuResult otsu_threshold(const GrayImage& image) {
  if (image.pixels.empty()) throw DataError("otsu: empty image");
  std::array<double, 256> hist{};
  for (const double v : image.pixels) hist[histogram_bin(v)] += 1.0;
  const double total = static_cast<double>(image.pixels.size());
  double sum_all = 0.0;
  for (int b = 0; b < 256; ++b) sum_all += b * hist[b];

  OtsuResult best;
  double n0 = 0.0;
  double sum0 = 0.0;
  bool found = false;
  for (int t = 1; t < 256; ++t) {
    n0 += hist[t - 1];
    sum0 += (t - 1) * hist[t - 1];
    const double n1 = total - n0;
    if (n0 == 0.0 || n1 == 0.0) continue;
    const double mu0 = sum0 / n0;
    const double mu1 = (sum_all - sum0) / n1;
    const double var = (n0 / total) * (n1 / total) * (mu0 - mu1) * (mu0 - mu1);
    if (!found || var > best.between_variance) {
      best.bin = t;
      best.between_variance = var;
      found = true;
    }
  }
  if (!found) throw DataError("otsu: degenerate histogram, all pixels share one bin");
  best.threshold = best.bin / 256.0;
  return best;
}

BinaryImage otsu(const GrayImage& image) {
  const OtsuResult t = otsu_threshold(image);
  BinaryImage out(image.height, image.width, 1);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.pixels[i] = histogram_bin(image.pixels[i]) < t.bin ? 0 : 1;
  }
  return out;
}

WindowStats window_stats(const GrayImage& image, int window) {
  if (window < 3 || window % 2 == 0) {
    throw ConfigError("sauvola: window must be odd and >= 3, got " + std::to_string(window));
  }
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  const std::size_t stride = w + 1;
  std::vector<double> s1((h + 1) * stride, 0.0);
  std::vector<double> s2((h + 1) * stride, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    double row1 = 0.0;
    double row2 = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      const double v = image.at(r, c);
      row1 += v;
      row2 += v * v;
      s1[(r + 1) * stride + c + 1] = s1[r * stride + c + 1] + row1;
      s2[(r + 1) * stride + c + 1] = s2[r * stride + c + 1] + row2;
    }
  }
  const long half = window / 2;
  WindowStats stats;
  stats.mean.resize(h * w);
  stats.stddev.resize(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t r0 = static_cast<std::size_t>(std::max(0L, static_cast<long>(r) - half));
    const std::size_t r1 = std::min(h, r + static_cast<std::size_t>(half) + 1);
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t c0 = static_cast<std::size_t>(std::max(0L, static_cast<long>(c) - half));
      const std::size_t c1 = std::min(w, c + static_cast<std::size_t>(half) + 1);
      const double n = static_cast<double>((r1 - r0) * (c1 - c0));
      auto box = [&](const std::vector<double>& s) {
        return s[r1 * stride + c1] - s[r0 * stride + c1] - s[r1 * stride + c0] + s[r0 * stride + c0];
      };
      const double mean = box(s1) / n;
      const double var = std::max(0.0, box(s2) / n - mean * mean);
      stats.mean[r * w + c] = mean;
      stats.stddev[r * w + c] = std::sqrt(var);
    }
  }
  return stats;
}

BinaryImage sauvola(const GrayImage& image, int window, double k, double r) {
  if (r <= 0.0) throw ConfigError("sauvola: dynamic range R must be positive");
  const WindowStats stats = window_stats(image, window);
  BinaryImage out(image.height, image.width, 1);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const double t = stats.mean[i] * (1.0 + k * (stats.stddev[i] / r - 1.0));
    out.pixels[i] = image.pixels[i] < t ? 0 : 1;
  }
  return out;
}

}  // namespace docbin
