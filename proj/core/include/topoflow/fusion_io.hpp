// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include "topoflow/fusion.hpp"

namespace topoflow {

/// Line-oriented fusion system description.
///
///   # comment
///   types 8             number of token types (required, first)
///   coupling_dim 2      s, required before an [OMEGA] section
///   proj_dim 240        d, required before a [PROJ] section
///   tolerance 1e-9      optional pentagon tolerance
///   [F]
///   k i j value         F_k^{ij}
///   [N]
///   c a b value         N_c^{ab} (0 or 1)
///   [OMEGA]
///   i j r c value       Ω(i, j)[r][c]
///   [PROJ]
///   sector row col value
///
/// Unlisted entries are zero. A projector's rank is one past the largest
/// column index listed for its sector. Errors carry 1-based line numbers.
struct FusionSpec {
  FusionSystem::Parts parts;
  double tolerance = 1e-9;
};

FusionSpec parse_fusion_spec(std::string_view text);
FusionSpec read_fusion_spec_file(const std::string& path);

/// Parses and validates in one step.
FusionSystem load_fusion_system(std::string_view text);

/// Writes nonzero entries with round-trip precision.
std::string format_fusion_spec(const FusionSystem& fs);

}  // namespace topoflow
