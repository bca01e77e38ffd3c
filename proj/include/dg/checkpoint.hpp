#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dg/network.hpp"

namespace dg {

/// Everything needed to rebuild a trained model: architecture string and
/// seed in a JSON manifest, parameters as one tensor-container file per
/// weight/bias (float32, like dataset samples).
struct CheckpointMeta {
  std::uint64_t seed = 0;
  int target_domain = 0;
  std::string dataset;
  std::string mode;
  std::vector<double> enhancement;  // final w, one entry per parameter layer
  double ema_beta = 0.0;
  std::size_t steps_done = 0;
  std::size_t total_steps = 0;
};

struct Checkpoint {
  Network net;
  CheckpointMeta meta;
};

/// json_path names the manifest; tensors land next to it as
/// <stem>_p<l>_{weight,bias}.dgt.
void save_checkpoint(const std::filesystem::path& json_path, const Network& net,
                     const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::filesystem::path& json_path);

}  // namespace dg
