#include "docbin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "docbin/errors.hpp"

namespace docbin {

namespace {

void check_same_size(const BinaryImage& a, const BinaryImage& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError(std::string(what) + ": prediction " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs ground truth " +
                         std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

Counts count(const BinaryImage& pred, const BinaryImage& gt) {
  Counts c;
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    const bool p = pred.pixels[i] == 0;
    const bool g = gt.pixels[i] == 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
  }
  return c;
}

std::size_t foreground(const BinaryImage& img) {
  return static_cast<std::size_t>(std::count(img.pixels.begin(), img.pixels.end(), 0));
}

double harmonic_percent(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 200.0 * precision * recall / (precision + recall);
}

}  // namespace

double psnr(const BinaryImage& pred, const BinaryImage& gt) {
  check_same_size(pred, gt, "psnr");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) wrong += pred.pixels[i] != gt.pixels[i];
  if (wrong == 0) return kPsnrCap;
  const double mse = static_cast<double>(wrong) / static_cast<double>(gt.pixels.size());
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double f_measure(const BinaryImage& pred, const BinaryImage& gt) {
  check_same_size(pred, gt, "f_measure");
  const Counts c = count(pred, gt);
  if (c.tp + c.fn == 0) {
    throw DataError("f_measure: ground truth has no foreground pixels; recall undefined");
  }
  const double precision = c.tp + c.fp == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fp);
  const double recall = double(c.tp) / double(c.tp + c.fn);
  return harmonic_percent(precision, recall);
}

BinaryImage skeletonize(const BinaryImage& image) {
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  // 1 = foreground for the thinning arithmetic, with a zero border.
  std::vector<std::uint8_t> g((h + 2) * (w + 2), 0);
  auto at = [&](std::size_t r, std::size_t c) -> std::uint8_t& { return g[r * (w + 2) + c]; };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) at(r + 1, c + 1) = image.at(r, c) == 0 ? 1 : 0;
  }
  std::vector<std::size_t> marked;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      marked.clear();
      for (std::size_t r = 1; r <= h; ++r) {
        for (std::size_t c = 1; c <= w; ++c) {
          if (!at(r, c)) continue;
          // P2..P9 clockwise from north.
          const std::uint8_t nb[8] = {at(r - 1, c), at(r - 1, c + 1), at(r, c + 1),
                                      at(r + 1, c + 1), at(r + 1, c), at(r + 1, c - 1),
                                      at(r, c - 1), at(r - 1, c - 1)};
          int neighbours = 0;
          int transitions = 0;
          for (int i = 0; i < 8; ++i) {
            neighbours += nb[i];
            transitions += (nb[i] == 0 && nb[(i + 1) % 8] == 1);
          }
          if (neighbours < 2 || neighbours > 6 || transitions != 1) continue;
          const bool cond = pass == 0 ? (nb[0] * nb[2] * nb[4] == 0 && nb[2] * nb[4] * nb[6] == 0)
                                      : (nb[0] * nb[2] * nb[6] == 0 && nb[0] * nb[4] * nb[6] == 0);
          if (cond) marked.push_back(r * (w + 2) + c);
        }
      }
      for (const std::size_t idx : marked) g[idx] = 0;
      changed = changed || !marked.empty();
    }
  }
  BinaryImage out(h, w, 1);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = at(r + 1, c + 1) ? 0 : 1;
  }
  return out;
}

double pseudo_f_measure(const BinaryImage& pred, const BinaryImage& gt) {
  check_same_size(pred, gt, "pseudo_f_measure");
  const Counts c = count(pred, gt);
  if (c.tp + c.fn == 0) {
    throw DataError("pseudo_f_measure: ground truth has no foreground pixels; recall undefined");
  }
  const BinaryImage skel = skeletonize(gt);
  const std::size_t skel_fg = foreground(skel);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < skel.pixels.size(); ++i) {
    hit += skel.pixels[i] == 0 && pred.pixels[i] == 0;
  }
  const double precision = c.tp + c.fp == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fp);
  const double recall = skel_fg == 0 ? 0.0 : double(hit) / double(skel_fg);
  return harmonic_percent(precision, recall);
}

std::array<std::array<double, 5>, 5> drd_weights() {
  std::array<std::array<double, 5>, 5> w{};
  double total = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i == 2 && j == 2) continue;
      w[i][j] = 1.0 / std::sqrt(double((i - 2) * (i - 2) + (j - 2) * (j - 2)));
      total += w[i][j];
    }
  }
  for (auto& row : w) {
    for (double& v : row) v /= total;
  }
  return w;
}

std::size_t non_uniform_blocks(const BinaryImage& gt) {
  constexpr std::size_t kBlock = 8;
  std::size_t count = 0;
  for (std::size_t r0 = 0; r0 < gt.height; r0 += kBlock) {
    for (std::size_t c0 = 0; c0 < gt.width; c0 += kBlock) {
      bool has_fg = false;
      bool has_bg = false;
      for (std::size_t r = r0; r < std::min(gt.height, r0 + kBlock); ++r) {
        for (std::size_t c = c0; c < std::min(gt.width, c0 + kBlock); ++c) {
          (gt.at(r, c) == 0 ? has_fg : has_bg) = true;
        }
      }
      count += has_fg && has_bg;
    }
  }
  return count;
}

double drd(const BinaryImage& pred, const BinaryImage& gt) {
  check_same_size(pred, gt, "drd");
  const std::size_t nubn = non_uniform_blocks(gt);
  if (nubn == 0) {
    throw DataError("drd: ground truth has no non-uniform 8x8 block; DRD undefined");
  }
  const auto w = drd_weights();
  const long h = static_cast<long>(gt.height);
  const long wd = static_cast<long>(gt.width);
  double total = 0.0;
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < wd; ++c) {
      const std::uint8_t g = pred.at(r, c);
      const std::uint8_t own = gt.at(r, c);
      if (g == own) continue;
      double d = 0.0;
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
          const long rr = r + i - 2;
          const long cc = c + j - 2;
          const bool inside = rr >= 0 && rr < h && cc >= 0 && cc < wd;
          const std::uint8_t v = inside ? gt.at(rr, cc) : own;
          d += w[i][j] * (v != g ? 1.0 : 0.0);
        }
      }
      total += d;
    }
  }
  return total / static_cast<double>(nubn);
}

MetricReport evaluate_pair(const BinaryImage& pred, const BinaryImage& gt) {
  check_same_size(pred, gt, "evaluate_pair");
  MetricReport r;
  const Counts c = count(pred, gt);
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  r.psnr = psnr(pred, gt);
  r.psnr_capped = r.psnr >= kPsnrCap;
  r.fm = f_measure(pred, gt);
  r.fps = pseudo_f_measure(pred, gt);
  r.drd = drd(pred, gt);
  return r;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.psnr += r.psnr;
    m.fm += r.fm;
    m.fps += r.fps;
    m.drd += r.drd;
    m.tp += r.tp;
    m.fp += r.fp;
    m.fn += r.fn;
    m.psnr_capped = m.psnr_capped || r.psnr_capped;
  }
  const double n = static_cast<double>(reports.size());
  m.psnr /= n;
  m.fm /= n;
  m.fps /= n;
  m.drd /= n;
  return m;
}

MetricReport evaluate_dataset(const std::vector<BinaryImage>& preds,
                              const std::vector<BinaryImage>& gts) {
  if (preds.size() != gts.size()) {
    throw DimensionError("evaluate_dataset: " + std::to_string(preds.size()) +
                         " predictions for " + std::to_string(gts.size()) + " ground truths");
  }
  std::vector<MetricReport> reports(preds.size());
  std::vector<std::string> errors(preds.size());
  const long n = static_cast<long>(preds.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      reports[i] = evaluate_pair(preds[i], gts[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw DataError("pair " + std::to_string(i) + ": " + errors[i]);
  }
  return mean_report(reports);
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows,
                       const MetricReport& mean) {
  out << "sample_id,year,psnr,fm,fps,drd\n";
  auto line = [&out](const std::string& id, const std::string& year, const MetricReport& r) {
    std::ostringstream s;
    s << std::setprecision(10) << id << ',' << year << ',' << r.psnr << ',' << r.fm << ','
      << r.fps << ',' << r.drd << '\n';
    out << s.str();
  };
  for (const auto& row : rows) line(row.sample_id, std::to_string(row.year), row.report);
  line("mean", "", mean);
}

void write_metrics_table(std::ostream& out, const std::vector<MetricRow>& rows,
                         const MetricReport& mean, const std::string& title) {
  std::size_t id_width = 6;
  for (const auto& r : rows) id_width = std::max(id_width, r.sample_id.size());
  auto rule = [&] { out << std::string(id_width + 44, '-') << '\n'; };
  auto line = [&](const std::string& id, const std::string& year, const MetricReport& r) {
    out << std::left << std::setw(static_cast<int>(id_width)) << id << "  " << std::setw(6)
        << year << std::right << std::fixed << std::setprecision(2) << std::setw(9)
        << r.psnr << std::setw(9) << r.fm << std::setw(9) << r.fps << std::setw(9) << r.drd
        << '\n';
    out.unsetf(std::ios::fixed);
  };
  out << title << '\n';
  rule();
  out << std::left << std::setw(static_cast<int>(id_width)) << "Sample" << "  " << std::setw(6)
      << "Year" << std::right << std::setw(9) << "PSNR" << std::setw(9) << "FM" << std::setw(9)
      << "Fps" << std::setw(9) << "DRD" << '\n';
  rule();
  for (const auto& row : rows) line(row.sample_id, std::to_string(row.year), row.report);
  rule();
  line("Mean", "", mean);
}

}  // namespace docbin
