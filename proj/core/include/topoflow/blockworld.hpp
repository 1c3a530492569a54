// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "topoflow/fusion.hpp"
#include "topoflow/rng.hpp"
#include "topoflow/task_spec.hpp"
#include "topoflow/tensor.hpp"

namespace topoflow {

enum class ActionType : int { approach, grasp, lift, move, place, release, push, noop };
inline constexpr std::size_t kNumActionTypes = 8;

std::string_view to_string(ActionType type);
ActionType parse_action_type(std::string_view text);
inline ActionType action_type(std::size_t index) { return static_cast<ActionType>(index); }
inline std::size_t type_index(ActionType type) { return static_cast<std::size_t>(type); }

struct ActionToken {
  ActionType type = ActionType::noop;
  std::array<double, kParamDim> params{};

  friend bool operator==(const ActionToken&, const ActionToken&) = default;
};

using ActionSequence = std::vector<ActionToken>;

struct ObjectPose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  int on = -1;  // object underneath, -1 for the table or the air

  friend bool operator==(const ObjectPose&, const ObjectPose&) = default;
};

/// Table-top state. A held object's pose equals the gripper pose.
struct WorldState {
  std::vector<ObjectPose> objects;
  double gripper_x = 0.5;
  double gripper_y = 0.5;
  int held = -1;
  bool lifted = false;
  int near = -1;  // object under the gripper after an approach, -1 if none
  int stage_counter = 0;

  /// No other object rests on `object`.
  bool clear(int object) const;
  int held_count() const { return held >= 0 ? 1 : 0; }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct StepResult {
  WorldState state;
  bool legal = true;
  std::string reason;  // empty when legal
};

/// Deterministic transition. An illegal action leaves the state unchanged and
/// names the rule it broke.
StepResult oracle_step(const WorldState& state, const ActionToken& action,
                       const WorldLimits& limits = {});

/// Occupancy-grid cameras, a task token and the proprioceptive vector
/// [gripper x, gripper y, holding, lifted].
struct Observation {
  std::vector<Tensor> grids;  // one grid × grid tensor per camera
  int task_token = 0;
  Tensor proprio;             // 1 × 4

  friend bool operator==(const Observation&, const Observation&) = default;
};

inline constexpr std::size_t kProprioDim = 4;

/// Camera c sees the occupancy grid rotated by c quarter turns.
Observation observe(const WorldState& state, const TaskSpec& task, std::size_t n_cameras = 1);

struct TraceStep {
  bool legal = true;
  std::string reason;
  WorldState state;  // state after the step
};

struct Episode {
  std::string task_id;
  WorldState start;
  Observation observation;
  ActionSequence actions;
  std::vector<TraceStep> trace;
};

/// Oracle replay; illegal steps are skipped. With a task, stage progress is
/// tracked after every step.
struct Replay {
  std::vector<TraceStep> steps;
  WorldState final_state;
  std::size_t violations = 0;
};

Replay replay(const ActionSequence& seq, const WorldState& start, const TaskSpec* task = nullptr,
              const WorldLimits& limits = {});

/// Random layout: objects on distinct cell centers of the spawn region, at
/// least two cells apart, ids sorted by (x, y).
WorldState sample_layout(const TaskSpec& task, Rng& rng);

/// Action plan that completes every stage from `start`, without padding.
ActionSequence plan_task(const TaskSpec& task, const WorldState& start);

/// Scripted demonstration padded with noop to `horizon` steps. Gaussian
/// jitter of the given σ perturbs x, y and rotation; grip stays binary.
/// Layouts whose plan does not fit or does not replay cleanly are resampled.
Episode script_demo(const TaskSpec& task, Rng& rng, double jitter_sigma, std::size_t horizon = 20,
                    std::size_t n_cameras = 1);
Episode script_demo(std::string_view task_id, Rng& rng, double jitter_sigma,
                    std::size_t horizon = 20, std::size_t n_cameras = 1);

double violation_rate(const ActionSequence& seq, const WorldState& start,
                      const WorldLimits& limits = {});

struct RepairResult {
  ActionSequence repaired;
  double cost = 0.0;
  std::size_t substitutions = 0;
  double clamp_l2 = 0.0;
};

/// Greedy repair, first violation first: clamp the parameters into bounds
/// (cost = L2 size of the clamp); if the step is still illegal, substitute
/// the first legal type in declaration order (cost 1). An upper bound on the
/// minimal repair cost.
RepairResult repair(const ActionSequence& seq, const WorldState& start,
                    const WorldLimits& limits = {});
double d_phys(const ActionSequence& seq, const WorldState& start, const WorldLimits& limits = {});

/// Per-step rows [object count, held count, completed stages] after each step.
Tensor invariant_measure(const ActionSequence& seq, const WorldState& start, const TaskSpec& task);

/// Completed stages / total stages after replay.
double atp(const ActionSequence& seq, const WorldState& start, const TaskSpec& task);

/// Pairs (and triples) of action types that some reachable state executes
/// legally back to back.
struct TransitionTables {
  Tensor allowed;  // n × n, allowed(i, j) = 1 if j can legally follow i
  Tensor rules;    // n × n × n, rules[c][a][b] = 1 if c can continue a, b
  std::size_t states_visited = 0;
};

/// Breadth-first exploration of states reachable from canonical layouts,
/// using representative parameters (object positions, the gripper position,
/// an empty cell, an off-table point). Pairs (a, b) that never occur take
/// the continuations of a.
TransitionTables enumerate_transitions(const WorldLimits& limits = {}, int depth = 7);

/// Sequence geometry used by the fusion projectors.
struct HorizonLayout {
  std::size_t horizon = 20;
  std::size_t primitives = 4;  // K
  std::size_t width = 12;      // per-step encoding width
};

/// Fusion system whose mask reproduces the legal-transition relation:
/// F_k^{ij} = allowed(i, j)·[k = i], local rules from the triple table,
/// identity couplings between primitives, and one projector per primitive
/// onto its per-channel mean.
FusionSystem blockworld_fusion_system(const TransitionTables& tables, const HorizonLayout& layout);

}  // namespace topoflow
