#include "docbin/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace docbin {

namespace {

void draw_line(GrayImage& gt, double r0, double c0, double r1, double c1, double thickness) {
  const double len = std::hypot(r1 - r0, c1 - c0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  const double half = thickness / 2.0;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const double r = r0 + t * (r1 - r0);
    const double c = c0 + t * (c1 - c0);
    for (long rr = std::lround(r - half); rr <= std::lround(r + half); ++rr) {
      for (long cc = std::lround(c - half); cc <= std::lround(c + half); ++cc) {
        if (rr < 0 || cc < 0 || rr >= static_cast<long>(gt.height) ||
            cc >= static_cast<long>(gt.width)) {
          continue;
        }
        if (std::hypot(rr - r, cc - c) <= half + 0.35) gt.at(rr, cc) = 0.0;
      }
    }
  }
}

}  // namespace

DocumentPair synth_document(std::uint64_t seed, const SynthOptions& o) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GrayImage gt(o.height, o.width, 1.0);

  const double glyph_h = 10.0 + 4.0 * unit(rng);
  const double glyph_w = glyph_h * 0.6;
  const double line_gap = glyph_h * o.line_spacing;
  for (double top = 6.0 + 4.0 * unit(rng); top + glyph_h < o.height - 4.0; top += line_gap) {
    double left = 4.0 + 6.0 * unit(rng);
    while (left + glyph_w < o.width - 4.0) {
      if (unit(rng) < 0.15) {  // word gap
        left += glyph_w;
        continue;
      }
      const int strokes = 2 + static_cast<int>(unit(rng) * 3.0);
      const double thickness = 1.0 + unit(rng) * 1.5;
      for (int s = 0; s < strokes; ++s) {
        draw_line(gt, top + glyph_h * unit(rng), left + glyph_w * unit(rng),
                  top + glyph_h * unit(rng), left + glyph_w * unit(rng), thickness);
      }
      left += glyph_w + 2.0;
    }
  }

  // Illumination falls off along a random direction.
  const double angle = unit(rng) * 2.0 * 3.14159265358979;
  const double dr = std::sin(angle);
  const double dc = std::cos(angle);
  struct Stain {
    double r, c, radius, depth;
  };
  std::vector<Stain> stains;
  for (int i = 0; i < o.stains; ++i) {
    stains.push_back({unit(rng) * o.height, unit(rng) * o.width, 15.0 + 30.0 * unit(rng),
                      0.1 + 0.15 * unit(rng)});
  }
  std::normal_distribution<double> noise(0.0, o.noise);
  const double span = std::abs(dr) * o.height + std::abs(dc) * o.width;
  const double origin = std::min(0.0, dr * o.height) + std::min(0.0, dc * o.width);
  GrayImage degraded(o.height, o.width);
  for (std::size_t r = 0; r < o.height; ++r) {
    for (std::size_t c = 0; c < o.width; ++c) {
      const double t = (dr * r + dc * c - origin) / span;
      double bg = 0.95 - o.gradient * t;
      for (const auto& s : stains) {
        const double d = std::hypot(r - s.r, c - s.c) / s.radius;
        if (d < 1.0) bg -= s.depth * (1.0 - d * d);
      }
      double v = gt.at(r, c) == 0.0 ? bg * o.ink_ratio : bg;
      v += noise(rng);
      degraded.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return {std::move(degraded), std::move(gt), 0, "synthetic"};
}

void write_synthetic_corpus(const std::filesystem::path& root, const std::vector<int>& years,
                            int per_year, std::uint64_t seed, const SynthOptions& options) {
  std::uint64_t n = 0;
  for (const int year : years) {
    const auto dir = root / std::to_string(year);
    std::filesystem::create_directories(dir / "degraded");
    std::filesystem::create_directories(dir / "gt");
    for (int i = 0; i < per_year; ++i) {
      const DocumentPair doc = synth_document(seed * 1000003ULL + n++, options);
      char id[16];
      std::snprintf(id, sizeof(id), "%03d", i);
      save_image(doc.degraded, dir / "degraded" / (std::string(id) + ".png"));
      save_image(doc.ground_truth, dir / "gt" / (std::string(id) + ".png"));
    }
  }
}

}  // namespace docbin
