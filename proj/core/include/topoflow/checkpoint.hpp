// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "topoflow/fusion.hpp"
#include "topoflow/policy.hpp"
#include "topoflow/topomask.hpp"
#include "topoflow/trainer.hpp"

namespace topoflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything sampling needs: model shape, weights, the learned mask and the
/// fusion system it was derived from.
///
/// Layout (little-endian): "OPLC", u32 version, u64 header length, header
/// JSON, u64 array count, then per array: u64 name length, name, u64 rank,
/// u64 dims[rank], f64 data.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::string variant = "full";
  PolicyParams params;
  TopoMask mask;
  std::optional<FusionSystem> fusion;
  /// Free-form JSON object with the caller's run configuration.
  std::string run_config = "{}";
};

std::string serialize_checkpoint(const Checkpoint& ck);
/// ParseError on bad magic, unsupported version, truncation or malformed header.
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

/// JSON views used in checkpoint headers and run manifests.
std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(std::string_view text);
std::string train_config_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(std::string_view text);

}  // namespace topoflow
