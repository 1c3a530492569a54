// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "topoflow/blockworld.hpp"
#include "topoflow/tensor.hpp"

namespace topoflow {

/// Continuous encoding of an action sequence, one row per step:
///   [type_scale · one-hot(type) | pos_scale·(x − ½), pos_scale·(y − ½), rot, grip_scale·(grip − ½)]
///
/// Decoding takes the argmax of the type block, optionally restricted to the
/// successors the previous type allows. In-bounds positions snap to grid
/// cell centers, grip snaps to {0, 1}; out-of-bounds positions are kept so
/// that the oracle still sees them.
struct ActionCodec {
  double type_scale = 2.0;
  double pos_scale = 8.0;
  double grip_scale = 2.0;
  std::size_t grid = 8;

  static constexpr std::size_t width() { return kNumActionTypes + kParamDim; }

  Tensor encode(const ActionSequence& seq) const;
  /// `allowed` is an n_types × n_types transition matrix; successors of the
  /// previous decoded type are the cells > 0 of its row. Null means
  /// unconstrained.
  ActionSequence decode(const Tensor& A, const Tensor* allowed = nullptr) const;
  /// Argmax of the type block of each row.
  std::vector<int> token_types(const Tensor& A) const;
};

/// Steps whose type does not follow the previous one under `allowed`.
std::size_t transition_violations(const ActionSequence& seq, const Tensor& allowed);

}  // namespace topoflow
