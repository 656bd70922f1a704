#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "docbin/image.hpp"

namespace docbin {

/// A degraded page and its binary ground truth (pixels exactly 0 or 1).
struct DocumentPair {
  GrayImage degraded;
  GrayImage ground_truth;
  int year = 0;
  std::string id;
};

/// Loads `root/<year>/degraded/<id>.<ext>` paired with
/// `root/<year>/gt/<id>.<ext>`, sorted by year then id. Ground truth is
/// thresholded at 0.5 on load.
std::vector<DocumentPair> enumerate_dataset(const std::filesystem::path& root);

}  // namespace docbin
