#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace docbin {

/// Single-channel image with row-major pixels in [0, 1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  bool operator==(const GrayImage&) const = default;
};

/// Two-valued image: 0 is ink (foreground), 1 is background.
struct BinaryImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  BinaryImage() = default;
  BinaryImage(std::size_t h, std::size_t w, std::uint8_t fill = 1)
      : height(h), width(w), pixels(h * w, fill) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  bool operator==(const BinaryImage&) const = default;
};

/// Reads an 8-bit grayscale or 24-bit RGB PNG, or a binary PGM (P5).
/// RGB is reduced with luminance weights 0.299/0.587/0.114; values are
/// scaled to [0, 1]. The format is detected from the file's magic bytes.
GrayImage load_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG or PGM chosen by the extension (.png / .pgm).
void save_image(const GrayImage& image, const std::filesystem::path& path);
void save_image(const BinaryImage& image, const std::filesystem::path& path);

/// pixel < threshold -> 0 (ink), otherwise 1.
BinaryImage threshold_image(const GrayImage& image, double threshold);
GrayImage to_gray(const BinaryImage& image);

}  // namespace docbin
