// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "topoflow/attention.hpp"
#include "topoflow/blockworld.hpp"
#include "topoflow/codec.hpp"
#include "topoflow/rng.hpp"
#include "topoflow/tape.hpp"
#include "topoflow/tensor.hpp"
#include "topoflow/topomask.hpp"

namespace topoflow {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t d_a = ActionCodec::width();
  std::size_t horizon = 20;    // H
  std::size_t primitives = 4;  // K
  std::size_t primitive_len = 5;  // m
  std::size_t n_cameras = 1;
  std::size_t grid = 8;
  std::size_t task_vocab = 3;
  MaskMode mask_mode = MaskMode::hard;
  /// false replaces the topological mask by all-ones (no-topology ablation).
  bool topo_mask = true;
  bool time_conditioning = true;
  /// The head predicts the clean sequence Â and v = (Â − τA_τ)/(1 − τ²), with
  /// τ clamped to this cap so that the sampler's last stages stay stable.
  double precond_tau_cap = 0.95;

  std::size_t n_context_tokens() const { return n_cameras + 2; }
  std::size_t n_tokens() const { return n_context_tokens() + horizon; }
  /// [vision + language | state | actions].
  BlockLayout block_layout() const;
  HorizonLayout horizon_layout() const { return HorizonLayout{horizon, primitives, d_a}; }
  void validate() const;
};

/// Named parameter arrays in a fixed (sorted) order.
struct PolicyParams {
  std::map<std::string, Tensor> tensors;

  std::size_t parameter_count() const;
  bool all_finite() const;
  const Tensor& at(const std::string& name) const;
};

/// N(0, 0.02²) for embeddings, attention and feed-forward weights, zero biases
/// and a zero output head, so Â starts at 0.
PolicyParams init_params(const ModelConfig& cfg, Rng& rng);
/// Every array zero.
PolicyParams zero_params(const ModelConfig& cfg);

/// Parameters recorded on a tape, as leaves (trainable) or constants.
struct ParamVars {
  std::map<std::string, Var> vars;
  const Var& operator[](const std::string& name) const;
};
ParamVars bind_params(Tape& tape, const PolicyParams& params, bool trainable);

/// Token embeddings [vision × n_cameras | language | state | H actions], each a
/// linear map of its input plus bias; τ features join the action tokens when
/// time conditioning is on. Positional embeddings are added in forward().
Var encode(const ParamVars& p, const Observation& obs, const Tensor& A_tau, double tau,
           const ModelConfig& cfg);
Tensor encode(const PolicyParams& params, const Observation& obs, const Tensor& A_tau, double tau,
              const ModelConfig& cfg);

/// v_θ on the tape. `mask` is the type-level matrix (n_types × n_types);
/// action tokens take the type decoded from their own row of A_τ.
/// `structural` replaces the blockwise-causal mask when given.
Var forward(const ParamVars& p, const Observation& obs, const Tensor& A_tau, double tau, Var mask,
            const ModelConfig& cfg, const Tensor* structural = nullptr);
Tensor forward(const PolicyParams& params, const Observation& obs, const Tensor& A_tau, double tau,
               const TopoMask& mask, const ModelConfig& cfg);

/// Position-level mask fed to attention: type lookup on action rows, ones on
/// context rows/columns and on the diagonal.
Var position_mask(Var mask, std::span<const int> action_types, const ModelConfig& cfg);

/// Reference transformer without any masking (neither structural nor
/// topological). Used to check mask neutrality.
Tensor forward_unmasked(const PolicyParams& params, const Observation& obs, const Tensor& A_tau,
                        double tau, const ModelConfig& cfg);

/// Contiguous runs of length m; ContractError unless K·m == H.
std::vector<ActionSequence> split_primitives(const ActionSequence& seq, std::size_t K, std::size_t m);
std::vector<Tensor> split_primitives(const Tensor& A, std::size_t K, std::size_t m);

}  // namespace topoflow
