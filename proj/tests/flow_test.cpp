// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "topoflow/errors.hpp"
#include "topoflow/flow.hpp"

namespace topoflow {
namespace {

// τA + √(1−τ²)ε written out directly.
Tensor path_point(const Tensor& a, const Tensor& eps, double tau) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = tau * a[i] + std::sqrt(1.0 - tau * tau) * eps[i];
  return out;
}

TEST(FlowTest, NoiseAtTauZeroIsPureNoise) {
  Rng rng(61);
  const Tensor a = sample_gaussian(rng, {3, 4}), eps = sample_gaussian(rng, {3, 4});
  EXPECT_EQ(noise_sample(a, 0.0, eps).A_tau, eps);
  EXPECT_EQ(noise_sample(a, 0.7, Tensor({3, 4})).A_tau, scale(a, 0.7));
}

TEST(FlowTest, NoiseSampleIsBitReconstructible) {
  Rng rng(62);
  const Tensor a = sample_gaussian(rng, {5, 2});
  const NoisySample s = noise_sample(a, 0.45, rng);
  EXPECT_EQ(s.A_tau, path_point(a, s.eps, 0.45));
}

TEST(FlowTest, NoiseMomentsAtPointSix) {
  Rng rng(63);
  const Tensor a({100000}, 1.0);
  const NoisySample s = noise_sample(a, 0.6, rng);
  double mean = 0.0, var = 0.0;
  for (double x : s.A_tau.data()) mean += x;
  mean /= 1e5;
  for (double x : s.A_tau.data()) var += (x - mean) * (x - mean);
  var /= 1e5;
  EXPECT_NEAR(mean, 0.6, 0.008);
  EXPECT_NEAR(var, 0.64, 0.01);
}

TEST(FlowTest, TauOutsideRangeIsDomainError) {
  Rng rng(64);
  const Tensor a({2, 2});
  EXPECT_THROW(noise_sample(a, -0.1, rng), DomainError);
  EXPECT_THROW(noise_sample(a, 1.0, rng), DomainError);
  EXPECT_THROW(noise_sample(a, 0.9995, rng), DomainError);
  EXPECT_NO_THROW(noise_sample(a, 0.999, rng));
  NoisySample bad{1.0, a, a};
  EXPECT_THROW(ot_target(bad, a), DomainError);
}

TEST(FlowTest, TargetAtTauZeroAndZeroNoise) {
  Rng rng(65);
  const Tensor a = sample_gaussian(rng, {4, 3});
  EXPECT_EQ(ot_target(noise_sample(a, 0.0, sample_gaussian(rng, {4, 3})), a), a);
  EXPECT_EQ(ot_target(noise_sample(a, 0.8, Tensor({4, 3})), a), a);
}

TEST(FlowTest, TargetIsPathDerivative) {
  Rng rng(66);
  for (int pair = 0; pair < 100; ++pair) {
    const Tensor a = sample_gaussian(rng, {2, 3}), eps = sample_gaussian(rng, {2, 3});
    for (int g = 0; g <= 9; ++g) {
      const double tau = 0.1 * g;
      const Tensor u = ot_target(noise_sample(a, tau, eps), a);
      const double h = 1e-6;
      // One-sided at τ = 0 would lose an order; the path is smooth across 0.
      const Tensor fd = scale(sub(path_point(a, eps, tau + h), path_point(a, eps, tau - h)), 1.0 / (2 * h));
      ASSERT_LE(max_abs_diff(u, fd), 1e-6) << "tau " << tau;
    }
  }
}

TEST(FlowTest, TargetClosedFormsAgree) {
  Rng rng(67);
  const Tensor a = sample_gaussian(rng, {3, 3});
  const NoisySample s = noise_sample(a, 0.73, rng);
  const Tensor u = ot_target(s, a);
  const double tau = 0.73;
  const Tensor alt = sub(a, scale(sub(s.A_tau, scale(a, tau)), tau / (1 - tau * tau)));
  EXPECT_LE(max_abs_diff(u, alt), 1e-12);
}

TEST(FlowTest, FlowLossClosedForms) {
  const NormWeight w = lift_norm_weight(Tensor::identity(2), 2, 0.01);
  const Tensor u({2, 2});
  Tensor v({2, 2});
  EXPECT_EQ(loss_flow(u, u, w), 0.0);
  v[0] = 2.0;
  EXPECT_NEAR(loss_flow(v, u, w), 4.04, 1e-12);
}

TEST(FlowTest, FlowLossMatchesQuadraticFormAndFloor) {
  Rng rng(68);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor m({4, 4});
    for (double& x : m.data()) x = rng.uniform();
    const NormWeight w = lift_norm_weight(m, 3, 0.01);
    const Tensor v = sample_gaussian(rng, {4, 3}), u = sample_gaussian(rng, {4, 3});
    const Tensor d = sub(v, u);
    double expect = 0.0;
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 12; ++j) expect += d[i] * w.W(i, j) * d[j];
    EXPECT_NEAR(loss_flow(v, u, w), expect, 1e-10);
    EXPECT_GE(loss_flow(v, u, w), 0.01 * dot(d, d) - 1e-12);
  }
}

TEST(FlowTest, TapeFlowLossEqualsNormWeight) {
  Rng rng(69);
  Tensor m({5, 5});
  for (double& x : m.data()) x = rng.uniform();
  const NormWeight w = lift_norm_weight(m, 3, 0.02);
  const Tensor d = sample_gaussian(rng, {5, 3});
  Tape tape;
  const double tape_value = loss_flow(tape.leaf(d), tape.constant(m), w.shift + w.eps_pd).value().item();
  EXPECT_NEAR(tape_value, topo_norm_sq(w, d), 1e-10);
}

TEST(FlowTest, TopoLossCases) {
  Rng rng(70);
  const Tensor v = sample_gaussian(rng, {2, 3}), u = sample_gaussian(rng, {2, 3});
  EXPECT_EQ(loss_topo(v, v, Tensor::identity(6)), 0.0);
  const Tensor d = sub(v, u);
  EXPECT_NEAR(loss_topo(v, u, Tensor::identity(6)), dot(d, d), 1e-12);
  Tensor e1({1, 6});
  e1[0] = 1.0;
  Tensor diff({2, 3});
  diff[0] = 3.0;
  diff[1] = 4.0;
  EXPECT_DOUBLE_EQ(loss_topo(diff, Tensor({2, 3}), e1), 9.0);
  EXPECT_THROW(loss_topo(v, u, scale(Tensor::identity(6), 2.0)), ContractError);

  Tape tape;
  EXPECT_NEAR(loss_topo(tape.leaf(d), Tensor::identity(6)).value().item(), dot(d, d), 1e-12);
}

TEST(FlowTest, TaskAndSmoothLosses) {
  Rng rng(71);
  const Tensor a = sample_gaussian(rng, {4, 2});
  EXPECT_EQ(loss_task(a, a), 0.0);
  Tensor ramp({5, 2});
  for (std::size_t t = 0; t < 5; ++t) ramp(t, 0) = ramp(t, 1) = 0.3 * static_cast<double>(t);
  EXPECT_NEAR(loss_smooth(ramp), 0.0, 1e-24);
  EXPECT_DOUBLE_EQ(loss_smooth(Tensor::matrix({{0}, {1}, {0}})), 4.0);
  EXPECT_EQ(loss_smooth(Tensor::matrix({{0}, {1}})), 0.0);

  Tape tape;
  const Tensor b = sample_gaussian(rng, {4, 2});
  EXPECT_NEAR(loss_task(tape.leaf(b), a).value().item(), loss_task(b, a), 1e-14);
  EXPECT_NEAR(loss_smooth(tape.leaf(b)).value().item(), loss_smooth(b), 1e-14);
  EXPECT_EQ(denoised_estimate(a, 0.25, b), axpy(a, 0.75, b));
}

TEST(FlowTest, StackedBasisHasOrthonormalRows) {
  Tensor b1({4, 1}), b2({4, 2});
  b1(0, 0) = 1.0;
  b2(1, 0) = 1.0;
  b2(2, 1) = 1.0;
  const std::vector<Projector> ps{make_projector(0, b1), make_projector(1, b2)};
  const Tensor basis = stacked_projector_basis(ps);
  EXPECT_EQ(basis.shape(), (Shape{3, 4}));
  EXPECT_LE(max_abs_diff(matmul_nt(basis, basis), Tensor::identity(3)), 1e-15);
}

TEST(FlowTest, EulerDecayIsPowerOfPointNine) {
  const Field decay = [](const Tensor& x, double) { return scale(x, -1.0); };
  const auto r = integrate(decay, Tensor::scalar(1.0), IntegratorSpec::uniform(IntegratorMethod::euler, 10));
  EXPECT_NEAR(r.A.item(), std::pow(0.9, 10), 1e-12);
  EXPECT_NEAR(r.A.item(), 0.3486784401, 1e-10);
  EXPECT_EQ(r.evaluations, 10);
}

TEST(FlowTest, Rk4DecayMatchesStepPolynomial) {
  const Field decay = [](const Tensor& x, double) { return scale(x, -1.0); };
  const auto r = integrate(decay, Tensor::scalar(1.0), IntegratorSpec{});
  const double h = 0.25;
  const double factor = 1 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24;
  EXPECT_NEAR(r.A.item(), std::pow(factor, 4), 1e-15);
  EXPECT_NEAR(std::abs(r.A.item() - std::exp(-1.0)), 1.4758e-5, 1e-8);
  EXPECT_EQ(r.evaluations, 16);
}

TEST(FlowTest, Rk4ErrorIsFourthOrder) {
  const Field decay = [](const Tensor& x, double) { return scale(x, -1.0); };
  double prev = 0.0;
  for (int n : {2, 4, 8, 16}) {
    const double err =
        std::abs(integrate(decay, Tensor::scalar(1.0), IntegratorSpec::uniform(IntegratorMethod::rk4, n)).A.item() -
                 std::exp(-1.0));
    if (prev > 0.0) EXPECT_GE(prev / err, 12.0) << n;
    prev = err;
  }
}

TEST(FlowTest, ZeroAndConstantFields) {
  Rng rng(72);
  const Tensor a0 = sample_gaussian(rng, {3, 2}), c = sample_gaussian(rng, {3, 2});
  const Field zero = [](const Tensor& x, double) { return Tensor(x.shape()); };
  const Field constant = [&](const Tensor&, double) { return c; };
  for (IntegratorSpec spec : {IntegratorSpec{}, IntegratorSpec::uniform(IntegratorMethod::euler, 10)}) {
    EXPECT_EQ(integrate(zero, a0, spec).A, a0);
    EXPECT_LE(max_abs_diff(integrate(constant, a0, spec).A, add(a0, c)), 1e-14);
  }
}

TEST(FlowTest, TimeDependentFieldSeesStageTimes) {
  // dA/dτ = τ³ integrates exactly under RK4 (Simpson weights).
  const Field cubic = [](const Tensor& x, double tau) { return Tensor(x.shape(), tau * tau * tau); };
  EXPECT_NEAR(integrate(cubic, Tensor::scalar(0.0), IntegratorSpec{}).A.item(), 0.25, 1e-15);
  std::vector<double> seen;
  integrate(cubic, Tensor::scalar(0.0), IntegratorSpec{}, [&](double tau, const Tensor&) { seen.push_back(tau); });
  EXPECT_EQ(seen, (std::vector<double>{0.25, 0.5, 0.75, 1.0}));
}

TEST(FlowTest, IntegratorSpecValidation) {
  EXPECT_THROW((IntegratorSpec{IntegratorMethod::rk4, 4, 0.2}.validate()), ContractError);
  EXPECT_THROW(IntegratorSpec::uniform(IntegratorMethod::euler, 0), ContractError);
  EXPECT_EQ(parse_integrator("euler"), IntegratorMethod::euler);
  EXPECT_THROW(parse_integrator("heun"), ParseError);
  EXPECT_EQ(IntegratorSpec::uniform(IntegratorMethod::rk4, 4).evals_per_run(), 16);
}

TEST(FlowTest, TauSamplerRespectsPriorAndClamp) {
  Rng rng(73);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double t = sample_tau(rng, 1.5, 1.0);
    ASSERT_LE(t, 1.0 - kDefaultEpsTau);
    mean += t;
  }
  mean /= 1e5;
  const double var = 1.5 / (2.5 * 2.5 * 3.5);
  EXPECT_NEAR(mean, 0.6, 3.0 * std::sqrt(var / 1e5));
}

}  // namespace
}  // namespace topoflow
