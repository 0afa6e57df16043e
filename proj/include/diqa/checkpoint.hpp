#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>

#include "diqa/adam.hpp"
#include "diqa/model.hpp"

namespace diqa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct Checkpoint {
  ModelConfig config;
  ParamSet<float> params;
  std::optional<AdamState<float>> adam;
  TrainingMeta meta;
};

/**
 * Binary layout (little-endian):
 *   "DIQA" | u32 version | u32 blob_len | blob (UTF-8 key=value lines: model config,
 *   training metadata, ADAM hyperparameters)
 *   | u32 n_params | n_params x record
 *   | u8 has_adam | [u64 step | u32 n_records | n_records x record]
 * record = u32 name_len | name | u32 rank | u32 dims[rank] | f32 payload (row-major).
 * ADAM records are named "adam.m.<param>" and "adam.v.<param>".
 */
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads and checks every parameter name and shape against `expected`; a mismatch
/// raises a DimensionError naming the tensor.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

/// Throws unless `params` holds exactly the tensors `config` implies.
void check_params_match(const ModelConfig& config, const ParamSet<float>& params);

}  // namespace diqa
