#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "docbin/model.hpp"
#include "docbin/training.hpp"

namespace docbin {

/// Everything a command needs: architecture, optimizer, paths and the
/// leave-one-out year.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path dataset_root;
  std::filesystem::path checkpoint;
  std::filesystem::path output_dir = "out";
  int held_out_year = 0;

  /// Re-validates the model and training settings.
  void validate() const;
};

/// Parses `[section]` headers and `key = value` lines; `#` and `;` start
/// comments. Keys are addressed as `section.key`. Throws ConfigError naming
/// the key (and line) on unknown keys or unparsable values.
RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Sets one `section.key` value, as used for command-line overrides.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Every accepted `section.key`, in documentation order.
std::vector<std::string> config_keys();

}  // namespace docbin
