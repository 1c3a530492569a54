// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>

#include "topoflow/rng.hpp"
#include "topoflow/tape.hpp"
#include "topoflow/tensor.hpp"
#include "topoflow/topomask.hpp"

namespace topoflow {

inline constexpr double kDefaultEpsTau = 1e-3;

/// A point on the noising path A_τ = τ·A + √(1−τ²)·ε. τ = 0 is pure noise,
/// τ → 1 approaches the data.
struct NoisySample {
  double tau = 0.0;
  Tensor A_tau;
  Tensor eps;
};

/// Draws ε ~ N(0, I) and interpolates. DomainError unless τ ∈ [0, 1−eps_tau].
NoisySample noise_sample(const Tensor& A, double tau, Rng& rng, double eps_tau = kDefaultEpsTau);
/// Same path with a caller-supplied noise draw.
NoisySample noise_sample(const Tensor& A, double tau, Tensor eps, double eps_tau = kDefaultEpsTau);

/// Conditional target u = A − τ/√(1−τ²)·ε, the τ-derivative of the path at
/// fixed ε. DomainError when τ lies outside [0, 1−eps_tau].
Tensor ot_target(const NoisySample& sample, const Tensor& A, double eps_tau = kDefaultEpsTau);

/// τ ~ Beta(alpha, beta), clamped to 1 − eps_tau.
double sample_tau(Rng& rng, double alpha, double beta, double eps_tau = kDefaultEpsTau);

struct LossWeights {
  double lambda1 = 0.1;   // task
  double lambda2 = 0.05;  // smoothness
  double lambda3 = 0.2;   // topological
  void validate() const;
};

/// (v − u)ᵀ W (v − u) on the flattened difference.
double loss_flow(const Tensor& v_pred, const Tensor& u, const NormWeight& weight);
/// Batch mean of the above.
double loss_flow(std::span<const Tensor> v_pred, std::span<const Tensor> u, const NormWeight& weight);

/// ‖B (v − u)‖² for a basis B with orthonormal rows; ContractError otherwise.
double loss_topo(const Tensor& v_pred, const Tensor& u, const Tensor& basis);

/// One-step denoised estimate Â = A_τ + (1 − τ)·v.
Tensor denoised_estimate(const Tensor& A_tau, double tau, const Tensor& v_pred);

/// Mean squared error between Â and the demonstration.
double loss_task(const Tensor& A_hat, const Tensor& A_demo);

/// Mean over interior steps of ‖Â_{t+1} − 2Â_t + Â_{t−1}‖²; 0 when H < 3.
double loss_smooth(const Tensor& A_hat);

/// Rows of every projector basis, stacked: an r × d matrix with orthonormal rows.
Tensor stacked_projector_basis(std::span<const Projector> projectors);

// Tape versions used by the trainer.

/// Σ_pq M(p,q)⟨d_p, d_q⟩ + diag·‖d‖², the topological norm of a difference d
/// (rows = positions) under a position-level mask M. Equals the NormWeight
/// quadratic form when diag = shift + eps_pd.
Var loss_flow(Var diff, Var position_mask, double diag);
Var loss_topo(Var diff, const Tensor& basis);
Var loss_task(Var A_hat, const Tensor& A_demo);
Var loss_smooth(Var A_hat);

enum class IntegratorMethod { euler, rk4 };

std::string_view to_string(IntegratorMethod method);
IntegratorMethod parse_integrator(std::string_view text);

struct IntegratorSpec {
  IntegratorMethod method = IntegratorMethod::rk4;
  int n_steps = 4;
  double delta = 0.25;

  /// n_steps uniform steps covering τ ∈ [0, 1].
  static IntegratorSpec uniform(IntegratorMethod method, int n_steps);
  /// Field evaluations per integration: n_steps for Euler, 4·n_steps for RK4.
  int evals_per_run() const;
  /// ContractError unless n_steps > 0 and n_steps·delta == 1 within 1e-12.
  void validate() const;
};

/// Vector field v(A, τ); the observation is bound by the caller.
using Field = std::function<Tensor(const Tensor& A, double tau)>;

struct IntegrationResult {
  Tensor A;
  int evaluations = 0;
};

/// Called with the state reached at the end of each step.
using StepObserver = std::function<void(double tau, const Tensor& A)>;

/// Integrates dA/dτ = v from τ = 0 to τ = 1.
IntegrationResult integrate(const Field& v, const Tensor& A0, const IntegratorSpec& spec,
                            const StepObserver& observer = {});

}  // namespace topoflow
