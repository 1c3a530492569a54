// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/fusion.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "topoflow/errors.hpp"

namespace topoflow {

namespace {

std::string pair_string(std::size_t i, std::size_t j) {
  return "(" + std::to_string(i) + ", " + std::to_string(j) + ")";
}

void require_cube(const Tensor& t, std::size_t n, const char* what) {
  if (t.shape() != Shape{n, n, n}) {
    throw DimensionError(std::string(what) + " must have shape " + shape_string({n, n, n}) +
                         ", got " + shape_string(t.shape()));
  }
}

std::size_t cube_side(const Tensor& fusion) {
  if (fusion.rank() != 3 || fusion.shape()[0] != fusion.shape()[1] ||
      fusion.shape()[1] != fusion.shape()[2]) {
    throw DimensionError("fusion tensor must be n×n×n, got " + shape_string(fusion.shape()));
  }
  return fusion.shape()[0];
}

// S(m, k) = Σ_n F_n^{mk}: total amplitude of the pair (m, k).
Tensor channel_totals(const Tensor& fusion, std::size_t n) {
  Tensor s({n, n});
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t k = 0; k < n; ++k) s(m, k) += fusion[fusion_index(n, c, m, k)];
  return s;
}

}  // namespace

Tensor Projector::matrix() const { return matmul_nt(basis, basis); }

Projector make_projector(int sector_id, Tensor basis, double tol) {
  require_rank2(basis, "projector basis");
  const Tensor gram = matmul_tn(basis, basis);
  const double defect = max_abs_diff(gram, Tensor::identity(basis.cols()));
  if (defect > tol) {
    std::ostringstream msg;
    msg << "projector for sector " << sector_id << " has non-orthonormal basis (max |BᵀB − I| = "
        << defect << ")";
    throw ConstraintViolation(msg.str());
  }
  return Projector{sector_id, std::move(basis)};
}

FusionSystem FusionSystem::create(Parts parts, double tolerance) {
  const std::size_t n = parts.n_types;
  if (n == 0) throw ConstraintViolation("fusion system needs at least one token type");
  require_cube(parts.fusion, n, "fusion tensor F");
  require_cube(parts.local_rules, n, "local rules N");

  for (std::size_t idx = 0; idx < parts.fusion.size(); ++idx) {
    const double v = parts.fusion[idx];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConstraintViolation("fusion amplitude " + std::to_string(v) +
                                " outside [0, 1] at flat index " + std::to_string(idx));
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double total = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double v = parts.local_rules[fusion_index(n, c, a, b)];
        if (v != 0.0 && v != 1.0) {
          throw ConstraintViolation("local rule N must be 0/1, got " + std::to_string(v));
        }
        total += v;
      }
      if (total < 1.0) {
        throw ConstraintViolation("pair " + pair_string(a, b) + " has no valid continuation");
      }
    }
  }

  std::size_t s = 0;
  for (const auto& [key, omega] : parts.couplings) {
    require_rank2(omega, "coupling matrix");
    if (omega.rows() != omega.cols()) {
      throw DimensionError("coupling " + pair_string(key.first, key.second) + " is not square");
    }
    if (s == 0) s = omega.rows();
    if (omega.rows() != s) {
      throw DimensionError("coupling " + pair_string(key.first, key.second) +
                           " has dimension " + std::to_string(omega.rows()) + ", expected " +
                           std::to_string(s));
    }
    if (max_abs_diff(matmul_tn(omega, omega), Tensor::identity(s)) > 1e-9) {
      throw ConstraintViolation("coupling " + pair_string(key.first, key.second) +
                                " is not orthogonal");
    }
  }

  std::set<int> sectors;
  for (std::size_t a = 0; a < parts.projectors.size(); ++a) {
    const Projector& pa = parts.projectors[a];
    if (!sectors.insert(pa.sector_id).second) {
      throw ConstraintViolation("duplicate projector sector " + std::to_string(pa.sector_id));
    }
    if (pa.dim() != parts.projectors.front().dim()) {
      throw DimensionError("projector dimensions disagree");
    }
    for (std::size_t b = 0; b < a; ++b) {
      const Tensor cross = matmul_tn(parts.projectors[b].basis, pa.basis);
      double m = 0.0;
      for (double v : cross.data()) m = std::max(m, std::abs(v));
      if (m > 1e-9) {
        throw ConstraintViolation("projectors for sectors " +
                                  std::to_string(parts.projectors[b].sector_id) + " and " +
                                  std::to_string(pa.sector_id) + " are not orthogonal");
      }
    }
  }

  const double residual = pentagon_residual(parts.fusion);
  if (residual > tolerance) {
    std::ostringstream msg;
    msg << "pentagon residual " << residual << " exceeds tolerance " << tolerance;
    throw ConstraintViolation(msg.str());
  }
  return FusionSystem(std::move(parts), tolerance);
}

double FusionSystem::F(std::size_t k, std::size_t i, std::size_t j) const {
  return parts_.fusion[fusion_index(parts_.n_types, k, i, j)];
}

double FusionSystem::N(std::size_t c, std::size_t a, std::size_t b) const {
  return parts_.local_rules[fusion_index(parts_.n_types, c, a, b)];
}

const Tensor& FusionSystem::coupling(std::size_t i, std::size_t j) const {
  auto it = parts_.couplings.find({i, j});
  if (it == parts_.couplings.end()) {
    throw LookupError("no coupling matrix for primitive pair " + pair_string(i, j));
  }
  return it->second;
}

std::size_t FusionSystem::coupling_dim() const {
  return parts_.couplings.empty() ? 0 : parts_.couplings.begin()->second.rows();
}

Tensor pentagon_terms(const Tensor& fusion) {
  const std::size_t n = cube_side(fusion);
  const Tensor s = channel_totals(fusion, n);
  // G_i[j][k] = Σ_m F_m^{ij} S(m, k); the defect is G_i − G_iᵀ.
  Tensor terms({n, n, n});
  Tensor g({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t m = 0; m < n; ++m) acc += fusion[fusion_index(n, m, i, j)] * s(m, k);
        g(j, k) = acc;
      }
    }
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) terms[fusion_index(n, i, j, k)] = g(j, k) - g(k, j);
  }
  return terms;
}

double pentagon_residual(const Tensor& fusion) { return frobenius_norm(pentagon_terms(fusion)); }

double pentagon_residual(const FusionSystem& fs) { return pentagon_residual(fs.fusion()); }

double hexagon_residual(const Tensor& fusion) {
  const std::size_t n = cube_side(fusion);
  // C[a][b][c][out] = Σ_x F_x^{ab} F_out^{xc}
  std::vector<double> comp(n * n * n * n, 0.0);
  auto c_at = [&](std::size_t a, std::size_t b, std::size_t c, std::size_t o) -> double& {
    return comp[((a * n + b) * n + c) * n + o];
  };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t x = 0; x < n; ++x) {
        const double fab = fusion[fusion_index(n, x, a, b)];
        if (fab == 0.0) continue;
        for (std::size_t c = 0; c < n; ++c)
          for (std::size_t o = 0; o < n; ++o) c_at(a, b, c, o) += fab * fusion[fusion_index(n, o, x, c)];
      }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t m = 0; m < n; ++m)
          for (std::size_t l = 0; l < n; ++l) {
            double lhs = 0.0;
            for (std::size_t nn = 0; nn < n; ++nn) lhs += c_at(i, j, k, nn) * c_at(i, nn, m, l);
            double rhs = 0.0;
            for (std::size_t p = 0; p < n; ++p) rhs += c_at(j, k, m, p) * c_at(i, j, p, l);
            rhs *= c_at(i, k, m, l);
            total += (lhs - rhs) * (lhs - rhs);
          }
  return std::sqrt(total);
}

double hexagon_residual(const FusionSystem& fs) { return hexagon_residual(fs.fusion()); }

double braiding_residual(const FusionSystem& fs, std::size_t i, std::size_t j, std::size_t k) {
  const Tensor& a = fs.coupling(i, j);
  const Tensor& b = fs.coupling(j, k);
  const Tensor lhs = matmul(matmul(a, b), a);
  const Tensor rhs = matmul(matmul(b, a), b);
  return frobenius_norm(sub(lhs, rhs));
}

std::vector<std::size_t> local_rule_check(const FusionSystem& fs, std::size_t a, std::size_t b) {
  const std::size_t n = fs.n_types();
  if (a >= n || b >= n) {
    throw DomainError("token pair " + pair_string(a, b) + " out of range for " +
                      std::to_string(n) + " types");
  }
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < n; ++c)
    if (fs.N(c, a, b) == 1.0) out.push_back(c);
  if (out.empty()) {
    throw ConstraintViolation("pair " + pair_string(a, b) + " has no valid continuation");
  }
  return out;
}

double coupling_scalar(const Tensor& omega) {
  require_rank2(omega, "coupling_scalar");
  double tr = 0.0;
  for (std::size_t i = 0; i < omega.rows(); ++i) tr += omega(i, i);
  return tr / static_cast<double>(omega.rows());
}

double invariant_compose(double inv_i, double inv_j, const Tensor& omega_ij) {
  return inv_i * inv_j * coupling_scalar(omega_ij);
}

double PrimitiveInvariant::composite(const FusionSystem& fs, std::size_t i, std::size_t j) const {
  if (i >= values.size() || j >= values.size()) {
    throw DomainError("primitive index out of range");
  }
  return invariant_compose(values[i], values[j], fs.coupling(i, j));
}

Tensor delta_fusion(std::size_t n) {
  Tensor f({n, n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) f[fusion_index(n, j, i, j)] = 1.0;
  return f;
}

Tensor full_local_rules(std::size_t n) { return Tensor({n, n, n}, 1.0); }

}  // namespace topoflow
