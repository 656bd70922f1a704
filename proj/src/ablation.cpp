#include "docbin/ablation.hpp"

#include "docbin/errors.hpp"

namespace docbin {

ModelConfig AblationRow::config() const {
  ModelConfig c;
  c.patch = patch;
  c.subpatch = subpatch;
  c.dim = dim;
  c.local_dim = local_dim;
  c.global_layers = global_layers;
  c.local_layers = local_layers;
  c.validate();
  return c;
}

const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows = {
      {"1", 16, 8, 1024, 256, 12, 4, 20.70},
      {"2", 16, 8, 768, 256, 6, 12, 20.54},
      {"3", 16, 8, 768, 256, 6, 4, 20.93},
      {"4", 16, 4, 256, 256, 6, 4, 18.25},
      {"5", 8, 4, 768, 768, 6, 4, 18.96},
  };
  return rows;
}

const AblationRow& ablation_row(const std::string& id) {
  for (const auto& row : ablation_rows()) {
    if (row.id == id) return row;
  }
  throw ConfigError("unknown ablation row '" + id + "'; valid rows are 1, 2, 3, 4, 5");
}

}  // namespace docbin
