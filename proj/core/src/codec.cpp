// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/codec.hpp"

#include <cmath>

#include "topoflow/errors.hpp"

namespace topoflow {

Tensor ActionCodec::encode(const ActionSequence& seq) const {
  Tensor out({seq.size(), width()});
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const ActionToken& a = seq[t];
    out(t, type_index(a.type)) = type_scale;
    out(t, kNumActionTypes + 0) = pos_scale * (a.params[0] - 0.5);
    out(t, kNumActionTypes + 1) = pos_scale * (a.params[1] - 0.5);
    out(t, kNumActionTypes + 2) = a.params[2];
    out(t, kNumActionTypes + 3) = grip_scale * (a.params[3] - 0.5);
  }
  return out;
}

std::vector<int> ActionCodec::token_types(const Tensor& A) const {
  require_rank2(A, "token_types");
  if (A.cols() != width()) {
    throw DimensionError("action encoding has width " + std::to_string(A.cols()) + ", expected " +
                         std::to_string(width()));
  }
  std::vector<int> out(A.rows());
  for (std::size_t t = 0; t < A.rows(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumActionTypes; ++k)
      if (A(t, k) > A(t, best)) best = k;
    out[t] = static_cast<int>(best);
  }
  return out;
}

ActionSequence ActionCodec::decode(const Tensor& A, const Tensor* allowed) const {
  require_rank2(A, "decode");
  if (A.cols() != width()) {
    throw DimensionError("action encoding has width " + std::to_string(A.cols()) + ", expected " +
                         std::to_string(width()));
  }
  if (allowed && allowed->shape() != Shape{kNumActionTypes, kNumActionTypes}) {
    throw DimensionError("transition matrix must be " +
                         shape_string({kNumActionTypes, kNumActionTypes}));
  }
  const double g = static_cast<double>(grid);
  auto position = [&](double enc) {
    const double v = enc / pos_scale + 0.5;
    if (!(v >= 0.0 && v <= 1.0)) return v;
    const double cell = std::min(std::floor(v * g), g - 1.0);
    return (cell + 0.5) / g;
  };

  ActionSequence seq(A.rows());
  int prev = -1;
  for (std::size_t t = 0; t < A.rows(); ++t) {
    int best = -1;
    for (std::size_t k = 0; k < kNumActionTypes; ++k) {
      if (allowed && prev >= 0 && (*allowed)(static_cast<std::size_t>(prev), k) <= 0.0) continue;
      if (best < 0 || A(t, k) > A(t, static_cast<std::size_t>(best))) best = static_cast<int>(k);
    }
    if (best < 0) best = static_cast<int>(type_index(ActionType::noop));
    ActionToken& tok = seq[t];
    tok.type = action_type(static_cast<std::size_t>(best));
    tok.params[0] = position(A(t, kNumActionTypes + 0));
    tok.params[1] = position(A(t, kNumActionTypes + 1));
    tok.params[2] = A(t, kNumActionTypes + 2);
    tok.params[3] = A(t, kNumActionTypes + 3) / grip_scale + 0.5 >= 0.5 ? 1.0 : 0.0;
    prev = best;
  }
  return seq;
}

std::size_t transition_violations(const ActionSequence& seq, const Tensor& allowed) {
  std::size_t count = 0;
  for (std::size_t t = 1; t < seq.size(); ++t)
    if (allowed(type_index(seq[t - 1].type), type_index(seq[t].type)) <= 0.0) ++count;
  return count;
}

}  // namespace topoflow
