// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "topoflow/blockworld.hpp"

namespace topoflow {

inline constexpr int kDatasetSchemaVersion = 1;

/// One JSON object per line, keys sorted, so files diff cleanly.
std::string episode_to_json(const Episode& ep);
/// ParseError (with the line number) on malformed input or a schema mismatch.
Episode episode_from_json(std::string_view line, std::size_t line_no = 1);

/// Lines starting with this prefix carry provenance, not episodes.
inline constexpr std::string_view kHeaderPrefix = "{\"header\":";

/// With a nonempty `header_json` object, the first line is {"header": header_json}.
void write_dataset(const std::string& path, const std::vector<Episode>& episodes,
                   const std::string& header_json = "");
/// Skips header lines.
std::vector<Episode> read_dataset(const std::string& path);

struct DatasetSpec {
  std::vector<std::string> tasks{"stack-2", "sort-3"};
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  double jitter_sigma = 0.01;
  std::size_t horizon = 20;
  std::size_t n_cameras = 1;
};

/// Episode i uses task tasks[i mod |tasks|] and the random stream seed ^ i.
std::vector<Episode> generate_dataset(const DatasetSpec& spec);

/// Episodes per task name.
std::map<std::string, std::size_t> task_counts(const std::vector<Episode>& episodes);

}  // namespace topoflow
