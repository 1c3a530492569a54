// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "topoflow/tape.hpp"
#include "topoflow/tensor.hpp"
#include "topoflow/topomask.hpp"

namespace topoflow {

/// Token-axis partition into consecutive blocks, earliest block first.
struct BlockLayout {
  std::vector<std::size_t> sizes;

  std::size_t total() const;
  /// Block index of each token.
  std::vector<std::size_t> block_of_token() const;
  void validate() const;
};

struct AttentionConfig {
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  MaskMode mask_mode = MaskMode::hard;
  BlockLayout layout;

  std::size_t d_head() const { return d_model / n_heads; }
  void validate() const;
};

/// Blockwise-causal structure: full attention inside a block, each block sees
/// every earlier block, never a later one.
Tensor blockwise_structural_mask(const BlockLayout& layout);

/// Cells that receive -inf before the softmax. Literal mode forbids only
/// structural zeros; hard mode also forbids zeros of the topological mask.
/// Throws DegenerateRowError if a row ends up fully forbidden.
std::vector<std::uint8_t> forbidden_cells(const Tensor& mask, const Tensor& structural,
                                          MaskMode mode);

/// softmax((QKᵀ/√d) ⊙ M with forbidden cells at -inf) · V on the tape.
/// `mask` is position-level (T×T); `weights` receives the post-softmax matrix.
Var topo_attention(Var q, Var k, Var v, Var mask, const Tensor& structural, MaskMode mode,
                   Var* weights = nullptr);

struct AttentionOutput {
  Tensor output;
  Tensor weights;
};

AttentionOutput topo_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const Tensor& mask, const Tensor& structural, MaskMode mode);

/// Type-level overload: token_types[p] is the action type of position p or -1
/// for context tokens, which are left unmasked. Diagonal cells are always 1.
AttentionOutput topo_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const TopoMask& mask, std::span<const int> token_types,
                               const Tensor& structural);

}  // namespace topoflow
