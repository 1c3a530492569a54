// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

namespace topoflow {

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partial file.
void write_file_atomic(const std::string& path, std::string_view content);

/// Whole file as a string; ParseError naming the path when it cannot be read.
std::string read_file(const std::string& path);

}  // namespace topoflow
