// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "topoflow/blockworld.hpp"
#include "topoflow/codec.hpp"
#include "topoflow/errors.hpp"

namespace topoflow {
namespace {

TEST(CodecTest, DemoRoundTripsExactly) {
  const ActionCodec codec;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Episode ep = script_demo(builtin_task_names()[seed % 3], rng, 0.0);
    const Tensor a = codec.encode(ep.actions);
    EXPECT_EQ(a.shape(), (Shape{20, ActionCodec::width()}));
    EXPECT_EQ(codec.decode(a), ep.actions) << seed;
  }
}

TEST(CodecTest, JitteredDemoDecodesToLegalSnappedActions) {
  const ActionCodec codec;
  Rng rng(90);
  const Episode ep = script_demo("sort-3", rng, 0.02);
  const ActionSequence back = codec.decode(codec.encode(ep.actions));
  EXPECT_EQ(violation_rate(back, ep.start), 0.0);
  EXPECT_EQ(atp(back, ep.start, builtin_task("sort-3")), 1.0);
}

TEST(CodecTest, EncodingLayout) {
  const ActionCodec codec;
  const ActionSequence seq{ActionToken{ActionType::move, {0.75, 0.25, 0.5, 1.0}}};
  const Tensor a = codec.encode(seq);
  EXPECT_EQ(a(0, type_index(ActionType::move)), 2.0);
  EXPECT_EQ(a(0, 8), 2.0);
  EXPECT_EQ(a(0, 9), -2.0);
  EXPECT_EQ(a(0, 10), 0.5);
  EXPECT_EQ(a(0, 11), 1.0);
  EXPECT_EQ(codec.token_types(a), std::vector<int>{3});
}

TEST(CodecTest, OutOfBoundsPositionsSurviveDecoding) {
  const ActionCodec codec;
  Tensor a({1, ActionCodec::width()});
  a(0, 0) = 1.0;
  a(0, 8) = 6.0;   // x = 1.25
  a(0, 9) = 0.1;   // y = 0.5125, snaps to 0.5625
  const ActionToken t = codec.decode(a)[0];
  EXPECT_EQ(t.params[0], 1.25);
  EXPECT_EQ(t.params[1], 0.5625);
}

TEST(CodecTest, ConstrainedDecodingFollowsAllowedSuccessors) {
  const ActionCodec codec;
  const Tensor allowed = enumerate_transitions().allowed;
  Rng rng(91);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor a = sample_gaussian(rng, {20, ActionCodec::width()});
    EXPECT_EQ(transition_violations(codec.decode(a, &allowed), allowed), 0u);
  }
  // Unconstrained decoding of random rows does break the relation.
  std::size_t broken = 0;
  for (int trial = 0; trial < 50; ++trial)
    broken += transition_violations(codec.decode(sample_gaussian(rng, {20, ActionCodec::width()})), allowed);
  EXPECT_GT(broken, 0u);
}

TEST(CodecTest, ShapeErrors) {
  const ActionCodec codec;
  EXPECT_THROW(codec.decode(Tensor({3, 5})), DimensionError);
  const Tensor bad({3, 3});
  EXPECT_THROW(codec.decode(Tensor({2, ActionCodec::width()}), &bad), DimensionError);
}

}  // namespace
}  // namespace topoflow
