#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "docbin/model.hpp"
#include "docbin/tensor.hpp"

namespace docbin {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

/// Everything needed to resume training bit for bit.
struct Checkpoint {
  ModelConfig config;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> optimizer;  // adam.m.<param>, adam.v.<param>
  std::uint64_t step = 0;
  int epoch = 0;
  std::string rng_state;  // textual std::mt19937_64 state
};

/// Little-endian binary encoding, magic "DBFCKPT1".
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters shaped for `config`, filled from the checkpoint by name.
/// Throws DimensionError naming the first tensor whose shape disagrees and
/// FormatError when a tensor is missing.
TLViTParams<float> restore_params(const Checkpoint& checkpoint, const ModelConfig& config);

/// Named copies of the parameters in visiting order.
std::vector<NamedTensor> snapshot_params(const TLViTParams<float>& params);

}  // namespace docbin
