// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "topoflow/tensor.hpp"

namespace topoflow {

/// Orthogonal projector onto one invariant sector, Π = basis · basisᵀ.
struct Projector {
  int sector_id = 0;
  Tensor basis;  // d × r, orthonormal columns

  std::size_t dim() const { return basis.rows(); }
  std::size_t rank() const { return basis.cols(); }
  Tensor matrix() const;
};

/// Validates orthonormality of the basis columns (basisᵀ·basis = I within tol).
Projector make_projector(int sector_id, Tensor basis, double tol = 1e-10);

using PrimitivePair = std::pair<std::size_t, std::size_t>;
using CouplingMap = std::map<PrimitivePair, Tensor>;

/// The algebraic constraint system behind the topological mask.
///
/// Tensors F (fusion amplitudes) and N (local rules) are n×n×n and indexed
/// [k][i][j]: F(k, i, j) is the amplitude for types i then j fusing into k,
/// N(c, a, b) = 1 when c is a valid continuation of the pair (a, b).
/// Coupling matrices Ω are real orthogonal s×s and keyed by primitive pair.
/// Instances are immutable once created.
class FusionSystem {
 public:
  struct Parts {
    std::size_t n_types = 0;
    Tensor fusion;
    Tensor local_rules;
    CouplingMap couplings;
    std::vector<Projector> projectors;
  };

  /// Checks every structural invariant and throws ConstraintViolation (or
  /// DimensionError for malformed shapes) when one fails.
  static FusionSystem create(Parts parts, double tolerance = 1e-9);

  std::size_t n_types() const { return parts_.n_types; }
  double tolerance() const { return tolerance_; }
  const Tensor& fusion() const { return parts_.fusion; }
  const Tensor& local_rules() const { return parts_.local_rules; }
  const CouplingMap& couplings() const { return parts_.couplings; }
  const std::vector<Projector>& projectors() const { return parts_.projectors; }

  double F(std::size_t k, std::size_t i, std::size_t j) const;
  double N(std::size_t c, std::size_t a, std::size_t b) const;

  /// Ω(i, j); LookupError naming the pair when absent.
  const Tensor& coupling(std::size_t i, std::size_t j) const;
  /// Coupling dimension s (0 when there are no couplings).
  std::size_t coupling_dim() const;

 private:
  FusionSystem(Parts parts, double tolerance) : parts_(std::move(parts)), tolerance_(tolerance) {}

  Parts parts_;
  double tolerance_;
};

/// Flat index of (k, i, j) in an n×n×n tensor.
inline std::size_t fusion_index(std::size_t n, std::size_t k, std::size_t i, std::size_t j) {
  return (k * n + i) * n + j;
}

/// Per-triple pentagon defect r(i, j, k) = Σ_{m,n} F_m^{ij} F_n^{mk} − Σ_{p,q} F_p^{ik} F_q^{pj},
/// returned as an n×n×n tensor indexed [i][j][k].
Tensor pentagon_terms(const Tensor& fusion);
/// Frobenius norm of pentagon_terms.
double pentagon_residual(const Tensor& fusion);
double pentagon_residual(const FusionSystem& fs);

/// Residual of the three-index relation
///   Σ_n F_n^{ijk} F_l^{inm} = Σ_p F_p^{jkm} F_l^{ijp} F_l^{ikm}
/// over free indices (i, j, k, m, l), where a three-index amplitude is the
/// left-associated composite F_n^{abc} = Σ_x F_x^{ab} F_n^{xc}.
double hexagon_residual(const Tensor& fusion);
double hexagon_residual(const FusionSystem& fs);

/// ‖Ω(i,j)Ω(j,k)Ω(i,j) − Ω(j,k)Ω(i,j)Ω(j,k)‖_F.
double braiding_residual(const FusionSystem& fs, std::size_t i, std::size_t j, std::size_t k);

/// Continuations {c : N_c^{ab} = 1}; ConstraintViolation when empty.
std::vector<std::size_t> local_rule_check(const FusionSystem& fs, std::size_t a, std::size_t b);

/// Normalized trace trace(Ω)/s used to scalarize a coupling matrix.
double coupling_scalar(const Tensor& omega);

/// inv_i · inv_j · trace(Ω)/s.
double invariant_compose(double inv_i, double inv_j, const Tensor& omega_ij);

/// Per-primitive invariant values and their pairwise composition under the
/// couplings of a fusion system.
struct PrimitiveInvariant {
  Tensor values;  // shape {K}

  double composite(const FusionSystem& fs, std::size_t i, std::size_t j) const;
};

/// F_m^{ij} = 1 iff m == j: the trivially consistent fusion tensor.
Tensor delta_fusion(std::size_t n);
/// All-ones local rules (every continuation allowed).
Tensor full_local_rules(std::size_t n);

}  // namespace topoflow
