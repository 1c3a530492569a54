// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/attention.hpp"

#include <cmath>
#include <numeric>

#include "topoflow/errors.hpp"

namespace topoflow {

std::size_t BlockLayout::total() const {
  return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
}

std::vector<std::size_t> BlockLayout::block_of_token() const {
  std::vector<std::size_t> out;
  out.reserve(total());
  for (std::size_t b = 0; b < sizes.size(); ++b) out.insert(out.end(), sizes[b], b);
  return out;
}

void BlockLayout::validate() const {
  if (sizes.empty()) throw ContractError("block layout has no blocks");
  for (std::size_t s : sizes)
    if (s == 0) throw ContractError("block layout contains an empty block");
}

void AttentionConfig::validate() const {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ContractError("d_model " + std::to_string(d_model) + " is not divisible by " +
                        std::to_string(n_heads) + " heads");
  }
  layout.validate();
}

Tensor blockwise_structural_mask(const BlockLayout& layout) {
  layout.validate();
  const auto block = layout.block_of_token();
  const std::size_t t = block.size();
  Tensor m({t, t});
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) m(i, j) = block[j] <= block[i] ? 1.0 : 0.0;
  return m;
}

std::vector<std::uint8_t> forbidden_cells(const Tensor& mask, const Tensor& structural,
                                          MaskMode mode) {
  require_same_shape(mask, structural, "forbidden_cells");
  const std::size_t r = mask.rows(), c = mask.cols();
  std::vector<std::uint8_t> f(r * c, 0);
  for (std::size_t i = 0; i < r; ++i) {
    bool any_allowed = false;
    for (std::size_t j = 0; j < c; ++j) {
      const bool off = structural(i, j) == 0.0 || (mode == MaskMode::hard && mask(i, j) == 0.0);
      f[i * c + j] = off ? 1 : 0;
      any_allowed = any_allowed || !off;
    }
    if (!any_allowed) {
      throw DegenerateRowError("attention row " + std::to_string(i) + " has every cell forbidden");
    }
  }
  return f;
}

Var topo_attention(Var q, Var k, Var v, Var mask, const Tensor& structural, MaskMode mode,
                   Var* weights) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_rank2(qv, "topo_attention");
  if (qv.shape() != kv.shape() || kv.rows() != vv.rows()) {
    throw DimensionError("topo_attention: Q " + shape_string(qv.shape()) + ", K " +
                         shape_string(kv.shape()) + ", V " + shape_string(vv.shape()));
  }
  const std::vector<std::uint8_t> f = forbidden_cells(mask.value(), structural, mode);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qv.cols()));
  Var logits = scale(matmul_nt(q, k), inv_sqrt_d);
  Var w = softmax_rows(mask_logits(logits, mask, f));
  if (weights) *weights = w;
  return matmul(w, v);
}

AttentionOutput topo_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const Tensor& mask, const Tensor& structural, MaskMode mode) {
  Tape tape;
  Var w;
  Var out = topo_attention(tape.constant(q), tape.constant(k), tape.constant(v),
                           tape.constant(mask), structural, mode, &w);
  return AttentionOutput{out.value(), w.value()};
}

AttentionOutput topo_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const TopoMask& mask, std::span<const int> token_types,
                               const Tensor& structural) {
  Tape tape;
  Var m = index_expand(tape.constant(mask.M), token_types, token_types, 1.0, true);
  Var w;
  Var out = topo_attention(tape.constant(q), tape.constant(k), tape.constant(v), m, structural,
                           mask.mode, &w);
  return AttentionOutput{out.value(), w.value()};
}

}  // namespace topoflow
