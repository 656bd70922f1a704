#include "docbin/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "docbin/errors.hpp"

namespace docbin {

namespace fs = std::filesystem;

namespace {

bool is_year(const std::string& name) {
  return !name.empty() && name.size() <= 6 &&
         std::all_of(name.begin(), name.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

std::map<std::string, fs::path> files_by_id(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string id = entry.path().stem().string();
    if (!out.emplace(id, entry.path()).second) {
      throw DataError("duplicate sample id '" + id + "' in " + dir.string());
    }
  }
  return out;
}

}  // namespace

std::vector<DocumentPair> enumerate_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw IoError("dataset root " + root.string() + " is not a directory");
  }
  std::vector<std::pair<int, fs::path>> years;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (!is_year(name)) {
      throw DataError("dataset directory '" + name + "' is not a year");
    }
    years.emplace_back(std::stoi(name), entry.path());
  }
  std::sort(years.begin(), years.end());

  std::vector<DocumentPair> pairs;
  for (const auto& [year, dir] : years) {
    const auto degraded = files_by_id(dir / "degraded");
    const auto gt = files_by_id(dir / "gt");
    for (const auto& [id, path] : gt) {
      if (!degraded.contains(id)) {
        throw DataError("ground truth '" + id + "' (" + std::to_string(year) +
                        ") has no degraded image");
      }
    }
    for (const auto& [id, path] : degraded) {
      const auto it = gt.find(id);
      if (it == gt.end()) {
        throw DataError("degraded image '" + id + "' (" + std::to_string(year) +
                        ") has no ground truth");
      }
      DocumentPair pair;
      pair.year = year;
      pair.id = id;
      pair.degraded = load_image(path);
      pair.ground_truth = load_image(it->second);
      if (pair.degraded.height != pair.ground_truth.height ||
          pair.degraded.width != pair.ground_truth.width) {
        throw DataError("sample '" + id + "' (" + std::to_string(year) + "): degraded " +
                        std::to_string(pair.degraded.height) + "x" +
                        std::to_string(pair.degraded.width) + " vs ground truth " +
                        std::to_string(pair.ground_truth.height) + "x" +
                        std::to_string(pair.ground_truth.width));
      }
      for (double& v : pair.ground_truth.pixels) v = v < 0.5 ? 0.0 : 1.0;
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

}  // namespace docbin
