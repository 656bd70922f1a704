#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "docbin/dataset.hpp"

namespace docbin {

/// Knobs for the synthetic degraded-document generator.
struct SynthOptions {
  std::size_t height = 256;
  std::size_t width = 256;
  double gradient = 0.6;    // background drop from the bright to the dark corner
  double ink_ratio = 0.45;  // ink intensity as a fraction of the local background
  double noise = 0.04;      // Gaussian noise sigma
  int stains = 2;
  double line_spacing = 1.7;  // baseline distance in glyph heights
};

/// Rows of stroke glyphs over an unevenly lit, noisy, stained background.
/// The ground truth marks the strokes with 0.
DocumentPair synth_document(std::uint64_t seed, const SynthOptions& options = {});

/// Writes `root/<year>/{degraded,gt}/<id>.png` for each year.
void write_synthetic_corpus(const std::filesystem::path& root, const std::vector<int>& years,
                            int per_year, std::uint64_t seed, const SynthOptions& options = {});

}  // namespace docbin
