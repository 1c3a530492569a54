// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "topoflow/errors.hpp"

namespace topoflow {

namespace {

void require_tau(double tau, double eps_tau, const char* op) {
  if (!(tau >= 0.0 && tau <= 1.0 - eps_tau)) {
    throw DomainError(std::string(op) + ": tau " + std::to_string(tau) + " outside [0, " +
                      std::to_string(1.0 - eps_tau) + "]");
  }
}

}  // namespace

NoisySample noise_sample(const Tensor& A, double tau, Rng& rng, double eps_tau) {
  require_tau(tau, eps_tau, "noise_sample");
  return noise_sample(A, tau, sample_gaussian(rng, A.shape()), eps_tau);
}

NoisySample noise_sample(const Tensor& A, double tau, Tensor eps, double eps_tau) {
  require_tau(tau, eps_tau, "noise_sample");
  require_same_shape(A, eps, "noise_sample");
  const double sigma = std::sqrt(1.0 - tau * tau);
  Tensor a_tau(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) a_tau[i] = tau * A[i] + sigma * eps[i];
  return NoisySample{tau, std::move(a_tau), std::move(eps)};
}

Tensor ot_target(const NoisySample& sample, const Tensor& A, double eps_tau) {
  require_tau(sample.tau, eps_tau, "ot_target");
  require_same_shape(A, sample.eps, "ot_target");
  const double tau = sample.tau;
  const double c = tau / std::sqrt(1.0 - tau * tau);
  Tensor u(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) u[i] = A[i] - c * sample.eps[i];
  return u;
}

double sample_tau(Rng& rng, double alpha, double beta, double eps_tau) {
  return std::min(rng.beta(alpha, beta), 1.0 - eps_tau);
}

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0)) {
    throw ContractError("loss weights must be nonnegative");
  }
}

double loss_flow(const Tensor& v_pred, const Tensor& u, const NormWeight& weight) {
  require_same_shape(v_pred, u, "loss_flow");
  return topo_norm_sq(weight, sub(v_pred, u));
}

double loss_flow(std::span<const Tensor> v_pred, std::span<const Tensor> u,
                 const NormWeight& weight) {
  if (v_pred.size() != u.size()) throw DimensionError("loss_flow: batch sizes differ");
  if (v_pred.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t b = 0; b < v_pred.size(); ++b) acc += loss_flow(v_pred[b], u[b], weight);
  return acc / static_cast<double>(v_pred.size());
}

namespace {

void require_orthonormal_rows(const Tensor& basis, double tol = 1e-9) {
  require_rank2(basis, "loss_topo");
  const Tensor gram = matmul_nt(basis, basis);
  if (max_abs_diff(gram, Tensor::identity(basis.rows())) > tol) {
    throw ContractError("loss_topo: basis rows are not orthonormal");
  }
}

}  // namespace

double loss_topo(const Tensor& v_pred, const Tensor& u, const Tensor& basis) {
  require_same_shape(v_pred, u, "loss_topo");
  require_orthonormal_rows(basis);
  if (basis.cols() != v_pred.size()) {
    throw DimensionError("loss_topo: basis width " + std::to_string(basis.cols()) +
                         " against " + std::to_string(v_pred.size()) + " entries");
  }
  const Tensor diff = sub(v_pred, u);
  double acc = 0.0;
  for (std::size_t r = 0; r < basis.rows(); ++r) {
    double c = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) c += basis(r, i) * diff[i];
    acc += c * c;
  }
  return acc;
}

Tensor denoised_estimate(const Tensor& A_tau, double tau, const Tensor& v_pred) {
  return axpy(A_tau, 1.0 - tau, v_pred);
}

double loss_task(const Tensor& A_hat, const Tensor& A_demo) {
  require_same_shape(A_hat, A_demo, "loss_task");
  if (A_hat.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < A_hat.size(); ++i) {
    const double d = A_hat[i] - A_demo[i];
    acc += d * d;
  }
  return acc / static_cast<double>(A_hat.size());
}

double loss_smooth(const Tensor& A_hat) {
  require_rank2(A_hat, "loss_smooth");
  const std::size_t h = A_hat.rows(), d = A_hat.cols();
  if (h < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 1; t + 1 < h; ++t)
    for (std::size_t c = 0; c < d; ++c) {
      const double s = A_hat(t + 1, c) - 2.0 * A_hat(t, c) + A_hat(t - 1, c);
      acc += s * s;
    }
  return acc / static_cast<double>(h - 2);
}

Tensor stacked_projector_basis(std::span<const Projector> projectors) {
  if (projectors.empty()) return Tensor();
  const std::size_t d = projectors.front().dim();
  std::size_t r = 0;
  for (const Projector& p : projectors) {
    if (p.dim() != d) throw DimensionError("projectors disagree on dimension");
    r += p.rank();
  }
  Tensor out({r, d});
  std::size_t row = 0;
  for (const Projector& p : projectors)
    for (std::size_t c = 0; c < p.rank(); ++c, ++row)
      for (std::size_t i = 0; i < d; ++i) out(row, i) = p.basis(i, c);
  return out;
}

Var loss_flow(Var diff, Var position_mask, double diag) {
  Var gram = matmul_nt(diff, diff);
  Var cross = sum(mul(position_mask, gram));
  return add(cross, scale(sum(square(diff)), diag));
}

Var loss_topo(Var diff, const Tensor& basis) {
  Var flat = reshape(diff, {diff.value().size(), 1});
  Var coeffs = matmul(diff.tape().constant(basis), flat);
  return sum(square(coeffs));
}

Var loss_task(Var A_hat, const Tensor& A_demo) {
  require_same_shape(A_hat.value(), A_demo, "loss_task");
  Var d = sub(A_hat, A_hat.tape().constant(A_demo));
  return scale(sum(square(d)), 1.0 / static_cast<double>(A_demo.size()));
}

Var loss_smooth(Var A_hat) {
  const std::size_t h = A_hat.value().rows();
  if (h < 3) return A_hat.tape().constant(Tensor::scalar(0.0));
  Tensor diff2({h - 2, h});
  for (std::size_t t = 0; t + 2 < h; ++t) {
    diff2(t, t) = 1.0;
    diff2(t, t + 1) = -2.0;
    diff2(t, t + 2) = 1.0;
  }
  Var second = matmul(A_hat.tape().constant(std::move(diff2)), A_hat);
  return scale(sum(square(second)), 1.0 / static_cast<double>(h - 2));
}

std::string_view to_string(IntegratorMethod method) {
  return method == IntegratorMethod::rk4 ? "rk4" : "euler";
}

IntegratorMethod parse_integrator(std::string_view text) {
  if (text == "rk4") return IntegratorMethod::rk4;
  if (text == "euler") return IntegratorMethod::euler;
  throw ParseError("unknown integrator '" + std::string(text) + "' (valid: euler, rk4)");
}

IntegratorSpec IntegratorSpec::uniform(IntegratorMethod method, int n_steps) {
  if (n_steps <= 0) throw ContractError("integrator needs a positive step count");
  return IntegratorSpec{method, n_steps, 1.0 / n_steps};
}

int IntegratorSpec::evals_per_run() const {
  return method == IntegratorMethod::rk4 ? 4 * n_steps : n_steps;
}

void IntegratorSpec::validate() const {
  if (n_steps <= 0) throw ContractError("integrator needs a positive step count");
  if (std::abs(n_steps * delta - 1.0) > 1e-12) {
    throw ContractError("integrator steps " + std::to_string(n_steps) + " × delta " +
                        std::to_string(delta) + " do not cover [0, 1]");
  }
}

IntegrationResult integrate(const Field& v, const Tensor& A0, const IntegratorSpec& spec,
                            const StepObserver& observer) {
  spec.validate();
  const double h = spec.delta;
  IntegrationResult res{A0, 0};
  Tensor& a = res.A;
  for (int s = 0; s < spec.n_steps; ++s) {
    const double tau = s * h;
    if (spec.method == IntegratorMethod::euler) {
      a = axpy(a, h, v(a, tau));
      res.evaluations += 1;
      if (observer) observer(tau + h, a);
      continue;
    }
    const Tensor k1 = v(a, tau);
    const Tensor k2 = v(axpy(a, 0.5 * h, k1), tau + 0.5 * h);
    const Tensor k3 = v(axpy(a, 0.5 * h, k2), tau + 0.5 * h);
    const Tensor k4 = v(axpy(a, h, k3), tau + h);
    Tensor next = a;
    for (std::size_t i = 0; i < next.size(); ++i)
      next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    a = std::move(next);
    res.evaluations += 4;
    if (observer) observer(tau + h, a);
  }
  return res;
}

}  // namespace topoflow
