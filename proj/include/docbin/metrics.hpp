#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "docbin/image.hpp"

namespace docbin {

/// PSNR reported for identical images (zero squared error).
inline constexpr double kPsnrCap = 100.0;

/// Binarization quality of one prediction (or the mean over a dataset).
/// Foreground is ink, encoded as 0.
struct MetricReport {
  double psnr = 0.0;  // dB, capped at kPsnrCap
  double fm = 0.0;    // percent
  double fps = 0.0;   // percent
  double drd = 0.0;
  bool psnr_capped = false;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// 10 log10(1 / MSE) with MSE the fraction of differing pixels.
double psnr(const BinaryImage& pred, const BinaryImage& gt);

/// 2PR / (P + R) in percent over foreground (0) pixels.
double f_measure(const BinaryImage& pred, const BinaryImage& gt);

/// F-measure with recall measured against the Zhang-Suen skeleton of the
/// ground-truth foreground.
double pseudo_f_measure(const BinaryImage& pred, const BinaryImage& gt);

/// Distance-reciprocal distortion: sum over flipped pixels of the weighted
/// 5x5 ground-truth disagreement, divided by the number of non-uniform 8x8
/// ground-truth blocks. Neighbours outside the image take the ground-truth
/// value of the flipped pixel itself.
double drd(const BinaryImage& pred, const BinaryImage& gt);

/// Normalized 5x5 reciprocal-distance weights (center 0, sum 1).
std::array<std::array<double, 5>, 5> drd_weights();

/// Number of 8x8 ground-truth blocks containing both classes; edge blocks
/// may be partial.
std::size_t non_uniform_blocks(const BinaryImage& gt);

/// Zhang-Suen thinning of the foreground (0) pixels.
BinaryImage skeletonize(const BinaryImage& image);

MetricReport evaluate_pair(const BinaryImage& pred, const BinaryImage& gt);

/// Arithmetic mean of every metric over the pairs; evaluated in parallel.
MetricReport evaluate_dataset(const std::vector<BinaryImage>& preds,
                              const std::vector<BinaryImage>& gts);

/// Arithmetic mean of already computed reports (counts are summed).
MetricReport mean_report(const std::vector<MetricReport>& reports);

/// One row of a metrics listing.
struct MetricRow {
  std::string sample_id;
  int year = 0;
  MetricReport report;
};

/// `sample_id,year,psnr,fm,fps,drd` with a header line; the mean row uses
/// sample_id "mean".
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows,
                       const MetricReport& mean);

/// Aligned text table with a closing mean row.
void write_metrics_table(std::ostream& out, const std::vector<MetricRow>& rows,
                         const MetricReport& mean, const std::string& title);

}  // namespace docbin
