// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>

#include "topoflow/checkpoint.hpp"
#include "topoflow/errors.hpp"
#include "topoflow/io.hpp"

namespace topoflow {
namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.model.d_model = 16;
  ck.model.d_ff = 24;
  ck.model.mask_mode = MaskMode::literal;
  ck.train.lr = 1.25e-3;
  ck.train.seed = 77;
  ck.train.epochs = 3;
  ck.variant = "NR";
  Rng rng(7);
  ck.params = init_params(ck.model, rng);
  const FusionSystem fs = blockworld_fusion_system(enumerate_transitions(), ck.model.horizon_layout());
  ck.mask = build_mask(fs, 1e-6, MaskMode::literal);
  ck.mask.M(0, 0) = 0.123456789012345678;
  ck.fusion = fs;
  ck.run_config = R"({"command":"train","seed":77})";
  return ck;
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  const Checkpoint ck = sample_checkpoint();
  const std::string bytes = serialize_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 4), "OPLC");
  const Checkpoint back = parse_checkpoint(bytes);
  EXPECT_EQ(back.variant, "NR");
  EXPECT_EQ(back.model.d_model, 16u);
  EXPECT_EQ(back.model.mask_mode, MaskMode::literal);
  EXPECT_EQ(back.train.lr, 1.25e-3);
  EXPECT_EQ(back.train.seed, 77u);
  EXPECT_EQ(back.mask.M, ck.mask.M);
  EXPECT_EQ(back.mask.hard_zero, ck.mask.hard_zero);
  EXPECT_EQ(back.mask.mode, MaskMode::literal);
  ASSERT_TRUE(back.fusion.has_value());
  EXPECT_EQ(back.fusion->fusion(), ck.fusion->fusion());
  ASSERT_EQ(back.params.tensors.size(), ck.params.tensors.size());
  for (const auto& [name, t] : ck.params.tensors) EXPECT_EQ(back.params.at(name), t) << name;
  EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(CheckpointTest, SaveAndLoadThroughFile) {
  const auto dir = std::filesystem::temp_directory_path() / "topoflow_checkpoint_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.oplc").string();
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint(path, ck);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), serialize_checkpoint(ck));
  EXPECT_THROW(load_checkpoint((dir / "missing").string()), ParseError);
}

TEST(CheckpointTest, CorruptInputsAreParseErrors) {
  const std::string bytes = serialize_checkpoint(sample_checkpoint());
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), ParseError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(parse_checkpoint(bad), ParseError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 5)), ParseError);
  EXPECT_THROW(parse_checkpoint(bytes + "x"), ParseError);
  EXPECT_THROW(parse_checkpoint(""), ParseError);
}

TEST(CheckpointTest, ConfigJsonRoundTrips) {
  ModelConfig m;
  m.n_cameras = 2;
  m.topo_mask = false;
  m.precond_tau_cap = 0.9;
  const ModelConfig mb = model_config_from_json(model_config_json(m));
  EXPECT_EQ(mb.n_cameras, 2u);
  EXPECT_FALSE(mb.topo_mask);
  EXPECT_EQ(mb.precond_tau_cap, 0.9);
  TrainConfig t;
  t.clip_per_example = false;
  t.mask_project_every = 7;
  const TrainConfig tb = train_config_from_json(train_config_json(t));
  EXPECT_FALSE(tb.clip_per_example);
  EXPECT_EQ(tb.mask_project_every, 7u);
  EXPECT_THROW(model_config_from_json("{"), ParseError);
}

}  // namespace
}  // namespace topoflow
