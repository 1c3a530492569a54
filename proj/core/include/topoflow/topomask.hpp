// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "topoflow/fusion.hpp"
#include "topoflow/tensor.hpp"

namespace topoflow {

enum class MaskMode {
  literal,  // logits ⊙ M, zero entries still receive softmax weight
  hard,     // zero entries become -inf before the softmax
};

std::string_view to_string(MaskMode mode);
MaskMode parse_mask_mode(std::string_view text);

/// Type-by-type attention mask derived from a fusion system.
///
/// `hard_zero` records the cells that were zero when the mask was built; they
/// stay exactly zero through every projection.
struct TopoMask {
  Tensor M;          // n × n, entries in [0, 1]
  Tensor hard_zero;  // n × n, 1 = forbidden
  double tol_consistency = 1e-6;
  MaskMode mode = MaskMode::hard;

  std::size_t n() const { return M.rows(); }
  bool forbidden(std::size_t i, std::size_t j) const { return hard_zero(i, j) != 0.0; }
};

/// M(i, j) = Σ_k F_k^{ij} · 1[|r(i, j, k)| ≤ tol], clipped to [0, 1], where r
/// is the per-triple pentagon defect.
TopoMask build_mask(const FusionSystem& fs, double tol = 1e-6, MaskMode mode = MaskMode::hard);

struct ProjectionOptions {
  int max_iters = 100;
  /// Lower clip for cells that are not hard zeros. 0 reproduces a plain [0, 1]
  /// box; a positive floor keeps learned cells from collapsing to zero.
  double allowed_floor = 0.0;
};

/// Projects M + η·update back onto consistent masks.
///
/// The candidate is clipped to the box, hard zeros are restored exactly, and
/// the mask is lifted to a working fusion tensor F_k^{ij} = M(i,j)·c_k^{ij}
/// (c = per-cell channel distribution of the generating system). While the
/// pentagon residual of that tensor exceeds tol_consistency, damped
/// Gauss–Newton steps move the free cells toward the consistent set. This is
/// a heuristic for a nonconvex set: the guarantee is the residual bound, not
/// nearest-point optimality. Throws ProjectionError after max_iters.
TopoMask project_mask(const TopoMask& mask, const FusionSystem& fs, const Tensor& update,
                      double eta, const ProjectionOptions& options = {});

/// c_k^{ij} = F_k^{ij} / Σ_k F_k^{ij}; cells with no amplitude use channel i.
Tensor channel_template(const FusionSystem& fs);

/// Pentagon residual of the working fusion tensor behind a mask.
double mask_residual(const TopoMask& mask, const FusionSystem& fs);

/// Position-level view of a type-level matrix: out(p, q) = m(type[p], type[q]),
/// with ones on the diagonal when requested.
Tensor expand_to_positions(const Tensor& m, std::span<const int> types, bool unit_diagonal);

/// Positive-definite lift used by the topological norm:
///   W = ((M + Mᵀ)/2) ⊗ I_{d_a} + (shift + eps_pd)·I,
/// where shift = max(0, −λ_min((M + Mᵀ)/2)) makes the symmetric part PSD.
struct NormWeight {
  Tensor W;
  double eps_pd = 1e-2;
  double shift = 0.0;
  std::size_t d_a = 1;
};

NormWeight lift_norm_weight(const Tensor& m, std::size_t d_a, double eps_pd = 1e-2);
NormWeight lift_norm_weight(const TopoMask& mask, std::size_t d_a, double eps_pd = 1e-2);

/// vᵀ W v on the flattened vector.
double topo_norm_sq(const NormWeight& weight, const Tensor& v);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Tensor& symmetric);

/// max(0, −λ_min(sym)).
double psd_shift(const Tensor& symmetric);

}  // namespace topoflow
