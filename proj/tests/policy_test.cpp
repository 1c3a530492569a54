// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"
#include "topoflow/errors.hpp"
#include "topoflow/policy.hpp"

namespace topoflow {
namespace {

ModelConfig small_model() {
  ModelConfig m;
  m.d_model = 16;
  m.d_ff = 32;
  m.n_heads = 4;
  return m;
}

// Every array drawn at a scale where all paths carry gradient.
PolicyParams random_params(const ModelConfig& m, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  PolicyParams p = init_params(m, rng);
  for (auto& [name, t] : p.tensors)
    for (double& v : t.data()) v = scale * rng.normal();
  return p;
}

Episode demo(std::uint64_t seed, std::size_t cameras = 1) {
  Rng rng(seed);
  return script_demo("sort-3", rng, 0.01, 20, cameras);
}

TopoMask blockworld_mask(const ModelConfig& m) {
  return build_mask(blockworld_fusion_system(enumerate_transitions(), m.horizon_layout()), 1e-6,
                    m.mask_mode);
}

TEST(PolicyTest, TokenLayoutAndBiasOnlyEmbedding) {
  const ModelConfig m = small_model();
  const PolicyParams p = random_params(m, 1);
  Observation zero;
  zero.grids = {Tensor({8, 8})};
  zero.proprio = Tensor({1, 4});
  const Tensor a0({20, m.d_a});
  ModelConfig no_time = m;
  no_time.time_conditioning = false;
  const Tensor x = encode(p, zero, a0, 0.3, no_time);
  EXPECT_EQ(x.shape(), (Shape{23, 16}));
  for (std::size_t c = 0; c < 16; ++c) {
    EXPECT_DOUBLE_EQ(x(0, c), p.at("vis.b")[c] + p.at("cam.E")(0, c));
    EXPECT_DOUBLE_EQ(x(2, c), p.at("state.b")[c]);
    EXPECT_DOUBLE_EQ(x(3, c), p.at("act.b")[c]);
  }
}

TEST(PolicyTest, PermutingActionRowsPermutesEmbeddings) {
  const ModelConfig m = small_model();
  const PolicyParams p = random_params(m, 2);
  const Episode ep = demo(3);
  Rng rng(4);
  Tensor a = sample_gaussian(rng, {20, m.d_a});
  const Tensor x = encode(p, ep.observation, a, 0.4, m);
  for (std::size_t c = 0; c < m.d_a; ++c) std::swap(a(2, c), a(9, c));
  const Tensor y = encode(p, ep.observation, a, 0.4, m);
  const std::size_t ctx = m.n_context_tokens();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::size_t src = r;
    if (r == ctx + 2) src = ctx + 9;
    if (r == ctx + 9) src = ctx + 2;
    for (std::size_t c = 0; c < x.cols(); ++c) ASSERT_EQ(y(r, c), x(src, c));
  }
}

TEST(PolicyTest, ZeroParamsPredictZeroSequence) {
  ModelConfig m = small_model();
  const Episode ep = demo(5);
  Rng rng(6);
  const Tensor a = sample_gaussian(rng, {20, m.d_a});
  // Â = 0, so v is the field toward the origin.
  const Tensor v = forward(zero_params(m), ep.observation, a, 0.7, blockworld_mask(m), m);
  EXPECT_LE(max_abs_diff(v, scale(a, -0.7 / (1 - 0.49))), 1e-12);
  EXPECT_EQ(forward(zero_params(m), ep.observation, a, 0.0, blockworld_mask(m), m), Tensor({20, m.d_a}));
  m.time_conditioning = false;
  for (double x : forward(zero_params(m), ep.observation, a, 0.7, blockworld_mask(m), m).data()) EXPECT_EQ(x, 0.0);
}

TEST(PolicyTest, OutputShapeIndependentOfCameras) {
  for (std::size_t cams : {1u, 2u, 3u}) {
    ModelConfig m = small_model();
    m.n_cameras = cams;
    const PolicyParams p = random_params(m, 7);
    Rng rng(8);
    const Tensor v = forward(p, demo(9, cams).observation, sample_gaussian(rng, {20, m.d_a}), 0.2,
                             blockworld_mask(m), m);
    EXPECT_EQ(v.shape(), (Shape{20, m.d_a}));
  }
  ModelConfig m = small_model();
  EXPECT_THROW(forward(random_params(m, 7), demo(9, 2).observation, Tensor({20, m.d_a}), 0.2,
                       blockworld_mask(m), m),
               DimensionError);
  EXPECT_THROW(forward(random_params(m, 7), demo(9).observation, Tensor({19, m.d_a}), 0.2,
                       blockworld_mask(m), m),
               DimensionError);
}

TEST(PolicyTest, ForwardIsBitDeterministic) {
  const ModelConfig m = small_model();
  const PolicyParams p = random_params(m, 10);
  const Episode ep = demo(11);
  Rng rng(12);
  const Tensor a = sample_gaussian(rng, {20, m.d_a});
  const TopoMask mask = blockworld_mask(m);
  EXPECT_EQ(forward(p, ep.observation, a, 0.55, mask, m), forward(p, ep.observation, a, 0.55, mask, m));
}

TEST(PolicyTest, NeutralMasksMatchUnmaskedReference) {
  const ModelConfig m = small_model();
  const std::size_t t = m.n_tokens();
  const Tensor ones({t, t}, 1.0);
  TopoMask neutral;
  neutral.M = Tensor({kNumActionTypes, kNumActionTypes}, 1.0);
  neutral.hard_zero = Tensor({kNumActionTypes, kNumActionTypes});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PolicyParams p = random_params(m, 20 + seed);
    const Episode ep = demo(30 + seed);
    Rng rng(40 + seed);
    const Tensor a = sample_gaussian(rng, {20, m.d_a});
    for (double tau : {0.0, 0.5, 0.99}) {
      Tape tape;
      const ParamVars pv = bind_params(tape, p, false);
      const Tensor v = forward(pv, ep.observation, a, tau, tape.constant(neutral.M), m, &ones).value();
      EXPECT_LE(max_abs_diff(v, forward_unmasked(p, ep.observation, a, tau, m)), 1e-12);
    }
  }
}

TEST(PolicyTest, GradientsMatchFiniteDifferences) {
  const ModelConfig m = small_model();
  const PolicyParams p = random_params(m, 50);
  const Episode ep = demo(51);
  Rng rng(52);
  const Tensor a = sample_gaussian(rng, {20, m.d_a});
  const Tensor weights = sample_gaussian(rng, {20, m.d_a});
  const TopoMask mask = blockworld_mask(m);
  const double tau = 0.6;

  Tape tape;
  const ParamVars pv = bind_params(tape, p, true);
  Var loss = sum(mul(forward(pv, ep.observation, a, tau, tape.constant(mask.M), m), tape.constant(weights)));
  tape.backward(loss);

  std::vector<std::string> names;
  for (const auto& [name, t] : p.tensors) names.push_back(name);
  std::size_t checked = 0;
  std::set<std::string> touched;
  for (int draw = 0; draw < 80; ++draw) {
    const std::string& name = names[rng.below(names.size())];
    const std::size_t i = rng.below(p.at(name).size());
    const double fd = oracle::central_diff(
        [&](const Tensor& value) {
          PolicyParams q = p;
          q.tensors.at(name) = value;
          const Tensor v = forward(q, ep.observation, a, tau, mask, m);
          double s = 0.0;
          for (std::size_t k = 0; k < v.size(); ++k) s += v[k] * weights[k];
          return s;
        },
        p.at(name), i, 1e-5);
    const double analytic = pv[name].grad()[i];
    EXPECT_LE(oracle::rel_err(analytic, fd, 1e-6), 1e-4) << name << "[" << i << "] " << analytic << " vs " << fd;
    ++checked;
    touched.insert(name);
  }
  EXPECT_GE(checked, 50u);
  EXPECT_GE(touched.size(), 10u);
}

TEST(PolicyTest, SplitPrimitivesRoundTrip) {
  const Episode ep = demo(60);
  for (auto [k, len] : std::vector<std::pair<std::size_t, std::size_t>>{{4, 5}, {1, 20}, {20, 1}}) {
    const auto parts = split_primitives(ep.actions, k, len);
    ASSERT_EQ(parts.size(), k);
    ActionSequence joined;
    for (const auto& part : parts) {
      EXPECT_EQ(part.size(), len);
      joined.insert(joined.end(), part.begin(), part.end());
    }
    EXPECT_EQ(joined, ep.actions);
  }
  EXPECT_THROW(split_primitives(ep.actions, 3, 5), ContractError);
  const Tensor a = ActionCodec{}.encode(ep.actions);
  const auto rows = split_primitives(a, 4, 5);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[2](0, 0), a(10, 0));
  EXPECT_THROW(split_primitives(a, 6, 3), ContractError);
}

TEST(PolicyTest, ConfigValidation) {
  ModelConfig m = small_model();
  m.primitives = 3;
  EXPECT_THROW(m.validate(), ContractError);
  m = small_model();
  m.n_heads = 5;
  EXPECT_THROW(m.validate(), ContractError);
  m = small_model();
  m.precond_tau_cap = 1.0;
  EXPECT_THROW(m.validate(), ContractError);
  Rng rng(1);
  EXPECT_GT(init_params(small_model(), rng).parameter_count(), 1000u);
  EXPECT_THROW(init_params(small_model(), rng).at("nope"), LookupError);
}

}  // namespace
}  // namespace topoflow
