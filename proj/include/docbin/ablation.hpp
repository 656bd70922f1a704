#pragma once

#include <string>
#include <vector>

#include "docbin/model.hpp"

namespace docbin {

/// One row of the two-level ablation grid. Fields not listed keep their
/// default values (heads 8/8/1, MLP widths 2048/2048/256, one decoder layer).
struct AblationRow {
  std::string id;
  int patch = 16;
  int subpatch = 8;
  int dim = 768;
  int local_dim = 256;
  int global_layers = 6;
  int local_layers = 4;
  double reported_psnr = 0.0;  // DIBCO 2017, full-scale training

  ModelConfig config() const;
};

/// Rows "1" to "5"; row "3" is the default configuration.
const std::vector<AblationRow>& ablation_rows();

/// Throws ConfigError listing the valid ids when `id` is unknown.
const AblationRow& ablation_row(const std::string& id);

}  // namespace docbin
