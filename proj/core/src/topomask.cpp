// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/topomask.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "topoflow/errors.hpp"

namespace topoflow {

std::string_view to_string(MaskMode mode) {
  return mode == MaskMode::hard ? "hard" : "literal";
}

MaskMode parse_mask_mode(std::string_view text) {
  if (text == "hard") return MaskMode::hard;
  if (text == "literal") return MaskMode::literal;
  throw ParseError("unknown mask mode '" + std::string(text) + "' (valid: literal, hard)");
}

TopoMask build_mask(const FusionSystem& fs, double tol, MaskMode mode) {
  const std::size_t n = fs.n_types();
  const Tensor terms = pentagon_terms(fs.fusion());
  TopoMask mask;
  mask.M = Tensor({n, n});
  mask.hard_zero = Tensor({n, n});
  mask.tol_consistency = tol;
  mask.mode = mode;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (std::abs(terms[fusion_index(n, i, j, k)]) <= tol) acc += fs.F(k, i, j);
      }
      acc = std::clamp(acc, 0.0, 1.0);
      mask.M(i, j) = acc;
      mask.hard_zero(i, j) = acc == 0.0 ? 1.0 : 0.0;
    }
  }
  return mask;
}

Tensor channel_template(const FusionSystem& fs) {
  const std::size_t n = fs.n_types();
  Tensor c({n, n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) total += fs.F(k, i, j);
      if (total > 0.0) {
        for (std::size_t k = 0; k < n; ++k) c[fusion_index(n, k, i, j)] = fs.F(k, i, j) / total;
      } else {
        c[fusion_index(n, i, i, j)] = 1.0;
      }
    }
  }
  return c;
}

namespace {

Tensor lift_to_fusion(const Tensor& t, const Tensor& tmpl) {
  const std::size_t n = t.rows();
  Tensor f({n, n, n});
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        f[fusion_index(n, k, i, j)] = t(i, j) * tmpl[fusion_index(n, k, i, j)];
  return f;
}

void require_mask_compatible(const TopoMask& mask, const FusionSystem& fs) {
  const std::size_t n = fs.n_types();
  if (mask.M.shape() != Shape{n, n} || mask.hard_zero.shape() != Shape{n, n}) {
    throw DimensionError("mask " + shape_string(mask.M.shape()) + " does not match a " +
                         std::to_string(n) + "-type fusion system");
  }
}

// Jacobian of the pentagon defect of lift_to_fusion(t, tmpl) with respect to
// the entries of t, restricted to the listed free cells.
Eigen::MatrixXd defect_jacobian(const Tensor& t, const Tensor& tmpl,
                                const std::vector<std::size_t>& free_cells) {
  const std::size_t n = t.rows();
  // P(i, j, k) = Σ_m c_m^{ij} t(m, k)
  std::vector<double> p(n * n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t m = 0; m < n; ++m) acc += tmpl[fusion_index(n, m, i, j)] * t(m, k);
        p[(i * n + j) * n + k] = acc;
      }

  std::vector<long> column(n * n, -1);
  for (std::size_t c = 0; c < free_cells.size(); ++c) column[free_cells[c]] = static_cast<long>(c);

  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<long>(n * n * n),
                                              static_cast<long>(free_cells.size()));
  auto bump = [&](long row, std::size_t a, std::size_t b, double v) {
    const long col = column[a * n + b];
    if (col >= 0) jac(row, col) += v;
  };
  // r(i,j,k) = t(i,j) P(i,j,k) − t(i,k) P(i,k,j)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        const auto row = static_cast<long>((i * n + j) * n + k);
        bump(row, i, j, p[(i * n + j) * n + k]);
        bump(row, i, k, -p[(i * n + k) * n + j]);
        for (std::size_t a = 0; a < n; ++a) {
          bump(row, a, k, t(i, j) * tmpl[fusion_index(n, a, i, j)]);
          bump(row, a, j, -t(i, k) * tmpl[fusion_index(n, a, i, k)]);
        }
      }
  return jac;
}

}  // namespace

double mask_residual(const TopoMask& mask, const FusionSystem& fs) {
  require_mask_compatible(mask, fs);
  return pentagon_residual(lift_to_fusion(mask.M, channel_template(fs)));
}

TopoMask project_mask(const TopoMask& mask, const FusionSystem& fs, const Tensor& update,
                      double eta, const ProjectionOptions& options) {
  require_mask_compatible(mask, fs);
  require_same_shape(mask.M, update, "project_mask");
  if (!update.all_finite()) throw DomainError("project_mask: update contains non-finite values");

  const std::size_t n = fs.n_types();
  const Tensor tmpl = channel_template(fs);
  const double floor = std::clamp(options.allowed_floor, 0.0, 1.0);

  Tensor t = axpy(mask.M, eta, update);
  std::vector<std::size_t> free_cells;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (mask.forbidden(i, j)) {
        t(i, j) = 0.0;
      } else {
        t(i, j) = std::clamp(t(i, j), floor, 1.0);
        free_cells.push_back(i * n + j);
      }
    }
  }

  auto residual_of = [&](const Tensor& cand) {
    return pentagon_terms(lift_to_fusion(cand, tmpl));
  };
  Tensor terms = residual_of(t);
  double residual = frobenius_norm(terms);
  double damping = 1e-3;
  int iters = 0;
  while (residual > mask.tol_consistency) {
    if (iters >= options.max_iters || free_cells.empty()) {
      std::ostringstream msg;
      msg << "mask projection did not converge after " << iters << " iterations (residual "
          << residual << ", tolerance " << mask.tol_consistency << ")";
      throw ProjectionError(msg.str(), residual);
    }
    ++iters;
    const Eigen::MatrixXd jac = defect_jacobian(t, tmpl, free_cells);
    const Eigen::Map<const Eigen::VectorXd> r(terms.data().data(), static_cast<long>(terms.size()));
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;

    // Raise the damping until a step lowers the residual.
    bool accepted = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal().array() += damping;
      const Eigen::VectorXd step = lhs.ldlt().solve(-jtr);
      Tensor cand = t;
      for (std::size_t c = 0; c < free_cells.size(); ++c) {
        const std::size_t cell = free_cells[c];
        cand[cell] = std::clamp(cand[cell] + step(static_cast<long>(c)), floor, 1.0);
      }
      Tensor cand_terms = residual_of(cand);
      const double cand_residual = frobenius_norm(cand_terms);
      if (cand_residual < residual) {
        t = std::move(cand);
        terms = std::move(cand_terms);
        residual = cand_residual;
        damping = std::max(damping * 0.3, 1e-12);
        accepted = true;
      } else {
        damping *= 10.0;
      }
    }
  }

  TopoMask out = mask;
  out.M = std::move(t);
  return out;
}

Tensor expand_to_positions(const Tensor& m, std::span<const int> types, bool unit_diagonal) {
  require_rank2(m, "expand_to_positions");
  const std::size_t h = types.size();
  Tensor out({h, h});
  for (std::size_t p = 0; p < h; ++p) {
    for (std::size_t q = 0; q < h; ++q) {
      if (unit_diagonal && p == q) {
        out(p, q) = 1.0;
      } else {
        out(p, q) = m(static_cast<std::size_t>(types[p]), static_cast<std::size_t>(types[q]));
      }
    }
  }
  return out;
}

double min_eigenvalue(const Tensor& symmetric) {
  require_rank2(symmetric, "min_eigenvalue");
  const auto n = static_cast<long>(symmetric.rows());
  Eigen::MatrixXd a(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      a(i, j) = symmetric(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double psd_shift(const Tensor& symmetric) { return std::max(0.0, -min_eigenvalue(symmetric)); }

NormWeight lift_norm_weight(const Tensor& m, std::size_t d_a, double eps_pd) {
  require_rank2(m, "lift_norm_weight");
  if (m.rows() != m.cols()) throw DimensionError("lift_norm_weight: mask must be square");
  if (!(eps_pd > 0.0)) throw DomainError("lift_norm_weight: eps_pd must be positive");
  const std::size_t t = m.rows();
  Tensor sym({t, t});
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) sym(i, j) = 0.5 * (m(i, j) + m(j, i));
  const double shift = psd_shift(sym);

  const std::size_t dim = t * d_a;
  NormWeight w;
  w.W = Tensor({dim, dim});
  w.eps_pd = eps_pd;
  w.shift = shift;
  w.d_a = d_a;
  for (std::size_t p = 0; p < t; ++p)
    for (std::size_t q = 0; q < t; ++q)
      for (std::size_t c = 0; c < d_a; ++c) w.W(p * d_a + c, q * d_a + c) = sym(p, q);
  for (std::size_t i = 0; i < dim; ++i) w.W(i, i) += shift + eps_pd;

  Eigen::MatrixXd a(static_cast<long>(dim), static_cast<long>(dim));
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) a(static_cast<long>(i), static_cast<long>(j)) = w.W(i, j);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("norm weight failed Cholesky; increase eps_pd");
  }
  return w;
}

NormWeight lift_norm_weight(const TopoMask& mask, std::size_t d_a, double eps_pd) {
  return lift_norm_weight(mask.M, d_a, eps_pd);
}

double topo_norm_sq(const NormWeight& weight, const Tensor& v) {
  const std::size_t dim = weight.W.rows();
  if (v.size() != dim) {
    throw DimensionError("topo_norm_sq: vector of " + std::to_string(v.size()) +
                         " entries against weight of size " + std::to_string(dim));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < dim; ++j) row += weight.W(i, j) * v[j];
    acc += v[i] * row;
  }
  return acc;
}

}  // namespace topoflow
