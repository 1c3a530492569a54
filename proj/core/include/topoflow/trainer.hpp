// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "topoflow/blockworld.hpp"
#include "topoflow/flow.hpp"
#include "topoflow/fusion.hpp"
#include "topoflow/policy.hpp"
#include "topoflow/topomask.hpp"

namespace topoflow {

struct TrainConfig {
  double lr = 3e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  LossWeights lambdas;
  double tau_alpha = 1.5;
  double tau_beta = 1.0;
  double eps_tau = kDefaultEpsTau;
  double eta_mask = 1e-3;
  std::size_t mask_project_every = 1;
  /// Lower bound for learned (non-forbidden) mask cells.
  double allowed_floor = 0.05;
  /// eps_pd of the norm weight used by the flow loss.
  double norm_eps_pd = 1.0;
  double grad_clip = 1.0;
  /// Clip each example's gradient to grad_clip before averaging, instead of
  /// clipping the batch mean. High-τ draws carry loss weights up to 1/(1−τ²)²
  /// and would otherwise set the direction of every step.
  bool clip_per_example = true;
  /// Train with the uncapped output preconditioner; precond_tau_cap then only
  /// applies while sampling.
  bool exact_precond = true;
  std::uint64_t seed = 0;
  /// Examples in the fixed probe set used to track the flow loss.
  std::size_t probe_size = 64;
  bool learn_mask = true;

  void validate() const;
};

/// Settings that train the default model on 2000 demos in a few minutes on
/// one core: lr 1e-3, batch 16, 30 epochs.
TrainConfig desk_train_config();

using GradMap = std::map<std::string, Tensor>;

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  GradMap m;
  GradMap v;
};

/// Bias-corrected adaptive-moment update of every parameter that has a gradient.
void optimizer_step(PolicyParams& params, const GradMap& grads, AdamState& state, double lr);

/// √(Σ‖g‖²) over every gradient array.
double global_norm(const GradMap& grads);

struct LossParts {
  double flow = 0.0;
  double task = 0.0;
  double smooth = 0.0;
  double topo = 0.0;
  double total = 0.0;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  LossParts loss;
  double grad_norm = 0.0;
  bool clipped = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossParts loss;
  double probe_flow = 0.0;
  double mask_residual = 0.0;
  double grad_norm = 0.0;
  std::size_t clipped_steps = 0;
};

struct TrainReport {
  double initial_probe_flow = 0.0;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  /// Wall-clock per epoch, kept apart from the reproducible fields.
  std::vector<double> epoch_wall_ms;
  bool aborted = false;
  std::string abort_reason;
};

struct TrainResult {
  PolicyParams params;
  TopoMask mask;
  TrainReport report;
};

/// Called after each epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Training loop. Parameters start from init_params(model, Rng(seed)) unless
/// `initial` is given. Deterministic for a fixed (data, config). A non-finite
/// loss or a failed mask projection stops the run with report.aborted set and
/// the last good parameters and mask returned.
TrainResult train(const std::vector<Episode>& data, const TrainConfig& cfg,
                  const ModelConfig& model, const FusionSystem& fs,
                  const std::optional<PolicyParams>& initial = std::nullopt,
                  const EpochCallback& on_epoch = {});

/// Loss of one example on a tape whose parameters are already bound.
struct ExampleInputs {
  const Observation* obs = nullptr;
  const Tensor* A = nullptr;  // encoded demonstration
  double tau = 0.0;
  const Tensor* eps = nullptr;
};
Var example_loss(const ParamVars& p, Var mask, const ExampleInputs& in, const TrainConfig& cfg,
                 const ModelConfig& model, const Tensor& topo_basis, LossParts* parts);

/// Mean flow loss on `probe_size` fixed (example, τ, ε) draws.
struct Probe {
  std::vector<std::size_t> index;
  std::vector<double> tau;
  std::vector<Tensor> eps;
};
Probe make_probe(const std::vector<Episode>& data, const TrainConfig& cfg, const ModelConfig& model);
double probe_flow_loss(const PolicyParams& params, const TopoMask& mask, const std::vector<Episode>& data,
                       const std::vector<Tensor>& encoded, const Probe& probe, const TrainConfig& cfg,
                       const ModelConfig& model);

struct SampleResult {
  Tensor A;
  ActionSequence actions;
  int evaluations = 0;
  double wall_ms = 0.0;
};

/// Integrates the learned field from a Gaussian draw and decodes it. With
/// `constrained`, each decoded type must follow the previous one under the
/// mask's nonzero pattern.
SampleResult sample_actions(const PolicyParams& params, const TopoMask& mask, const ModelConfig& model,
                            const Observation& obs, const IntegratorSpec& integrator, Rng& rng,
                            bool constrained, double eps_tau = kDefaultEpsTau,
                            const StepObserver& observer = {});

struct EvalConfig {
  std::vector<std::string> tasks{"stack-2", "sort-3"};
  std::size_t n_episodes = 25;
  IntegratorSpec integrator;
  std::uint64_t seed = 1;
  bool constrained = true;
  double eps_tau = kDefaultEpsTau;
};

struct EvalRow {
  std::string task;
  std::string variant;
  double atp_mean = 0.0;
  double violation_rate = 0.0;
  double d_phys_mean = 0.0;
  double transition_violations = 0.0;  // mean per sequence, under the mask
  double invariant_ok = 0.0;           // fraction with conserved invariants
  int fn_evals = 0;                    // per sequence
  double wall_ms = 0.0;                // per sequence
};

/// Produces an action sequence for an evaluation episode; reports the number
/// of field evaluations it used.
using SequencePolicy = std::function<ActionSequence(const Episode& ep, Rng& rng, int* evals)>;

/// Evaluation episodes come from script_demo on stream seed ^ i, so the
/// layouts are reproducible and disjoint from training seeds by choice of seed.
std::vector<EvalRow> evaluate_policy(const SequencePolicy& policy, const EvalConfig& cfg,
                                     const std::string& variant, const Tensor* allowed,
                                     const ModelConfig& model);

std::vector<EvalRow> evaluate(const PolicyParams& params, const TopoMask& mask, const ModelConfig& model,
                              const EvalConfig& cfg, const std::string& variant);

}  // namespace topoflow
