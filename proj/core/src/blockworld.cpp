// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/blockworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <unordered_map>

#include "topoflow/errors.hpp"

namespace topoflow {

namespace {

constexpr std::array<std::string_view, kNumActionTypes> kTypeNames{
    "approach", "grasp", "lift", "move", "place", "release", "push", "noop"};

double dist(double ax, double ay, double bx, double by) { return std::hypot(ax - bx, ay - by); }

bool params_in_bounds(const ActionToken& a, const WorldLimits& limits) {
  for (std::size_t p = 0; p < kParamDim; ++p) {
    const double v = a.params[p];
    if (!std::isfinite(v) || v < limits.param_lo[p] || v > limits.param_hi[p]) return false;
  }
  return true;
}

// Object closest to (x, y) within the radius; clear objects (stack tops) win.
int find_near(const WorldState& s, double x, double y, double radius, int exclude = -1) {
  int best = -1;
  double best_d = 0.0;
  bool best_clear = false;
  for (std::size_t o = 0; o < s.objects.size(); ++o) {
    const int id = static_cast<int>(o);
    if (id == exclude) continue;
    const double d = dist(s.objects[o].x, s.objects[o].y, x, y);
    if (d > radius) continue;
    const bool c = s.clear(id);
    if (best < 0 || (c && !best_clear) || (c == best_clear && d < best_d)) {
      best = id;
      best_d = d;
      best_clear = c;
    }
  }
  return best;
}

// Sets the held object down at the gripper: on top of the nearest stack
// within reach, otherwise on the table.
void land(WorldState& s, const WorldLimits& limits) {
  const int obj = s.held;
  ObjectPose& pose = s.objects[static_cast<std::size_t>(obj)];
  const int support = find_near(s, s.gripper_x, s.gripper_y, limits.near_radius, obj);
  if (support >= 0) {
    const ObjectPose& base = s.objects[static_cast<std::size_t>(support)];
    pose.x = base.x;
    pose.y = base.y;
    pose.on = support;
  } else {
    pose.on = -1;
  }
  s.lifted = false;
}

StepResult reject(const WorldState& s, const char* reason) { return StepResult{s, false, reason}; }

}  // namespace

std::string_view to_string(ActionType type) { return kTypeNames[type_index(type)]; }

ActionType parse_action_type(std::string_view text) {
  for (std::size_t i = 0; i < kNumActionTypes; ++i)
    if (kTypeNames[i] == text) return action_type(i);
  throw ParseError("unknown action type '" + std::string(text) + "'");
}

bool WorldState::clear(int object) const {
  for (const ObjectPose& p : objects)
    if (p.on == object) return false;
  return true;
}

StepResult oracle_step(const WorldState& state, const ActionToken& action,
                       const WorldLimits& limits) {
  if (action.type == ActionType::noop) return StepResult{state, true, {}};
  if (!params_in_bounds(action, limits)) return reject(state, "params-out-of-bounds");

  const double x = action.params[0];
  const double y = action.params[1];
  WorldState s = state;
  auto held_pose = [&]() -> ObjectPose& { return s.objects[static_cast<std::size_t>(s.held)]; };

  switch (action.type) {
    case ActionType::approach:
      if (s.held >= 0) return reject(state, "approach-while-holding");
      s.gripper_x = x;
      s.gripper_y = y;
      s.near = find_near(s, x, y, limits.near_radius);
      break;
    case ActionType::grasp: {
      if (s.held >= 0) return reject(state, "grasp-while-holding");
      if (s.near < 0) return reject(state, "grasp-nothing-near");
      if (!s.clear(s.near)) return reject(state, "grasp-blocked");
      s.held = s.near;
      s.lifted = false;
      s.gripper_x = held_pose().x;
      s.gripper_y = held_pose().y;
      break;
    }
    case ActionType::lift:
      if (s.held < 0) return reject(state, "lift-without-grasp");
      if (s.lifted) return reject(state, "lift-while-lifted");
      s.lifted = true;
      held_pose().on = -1;
      break;
    case ActionType::move:
      if (s.held < 0) return reject(state, "move-without-grasp");
      if (!s.lifted) return reject(state, "move-without-lift");
      s.gripper_x = x;
      s.gripper_y = y;
      held_pose().x = x;
      held_pose().y = y;
      held_pose().theta = action.params[2];
      break;
    case ActionType::place:
      if (s.held < 0) return reject(state, "place-without-grasp");
      if (!s.lifted) return reject(state, "place-without-lift");
      land(s, limits);
      s.gripper_x = held_pose().x;
      s.gripper_y = held_pose().y;
      break;
    case ActionType::release: {
      if (s.held < 0) return reject(state, "release-without-grasp");
      if (s.lifted) land(s, limits);
      const int obj = s.held;
      s.gripper_x = held_pose().x;
      s.gripper_y = held_pose().y;
      s.held = -1;
      s.lifted = false;
      s.near = obj;
      break;
    }
    case ActionType::push: {
      if (s.held >= 0) return reject(state, "push-while-holding");
      if (s.near < 0) return reject(state, "push-nothing-near");
      ObjectPose& obj = s.objects[static_cast<std::size_t>(s.near)];
      if (!s.clear(s.near) || obj.on != -1) return reject(state, "push-blocked");
      if (find_near(s, x, y, limits.near_radius, s.near) >= 0) return reject(state, "push-blocked");
      obj.x = x;
      obj.y = y;
      s.gripper_x = x;
      s.gripper_y = y;
      break;
    }
    case ActionType::noop:
      break;
  }
  return StepResult{std::move(s), true, {}};
}

Observation observe(const WorldState& state, const TaskSpec& task, std::size_t n_cameras) {
  const std::size_t g = task.limits.grid;
  Observation obs;
  obs.task_token = task.token;
  auto cell = [g](double v) {
    const double c = std::floor(v * static_cast<double>(g));
    return static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(g - 1)));
  };
  for (std::size_t cam = 0; cam < n_cameras; ++cam) {
    Tensor grid({g, g});
    for (const ObjectPose& p : state.objects) {
      std::size_t cx = cell(p.x), cy = cell(p.y);
      for (std::size_t r = 0; r < cam % 4; ++r) {
        const std::size_t nx = g - 1 - cy;
        cy = cx;
        cx = nx;
      }
      grid(cy, cx) = 1.0;
    }
    obs.grids.push_back(std::move(grid));
  }
  obs.proprio = Tensor({1, kProprioDim}, {state.gripper_x, state.gripper_y,
                                          state.held >= 0 ? 1.0 : 0.0, state.lifted ? 1.0 : 0.0});
  return obs;
}

Replay replay(const ActionSequence& seq, const WorldState& start, const TaskSpec* task,
              const WorldLimits& limits) {
  Replay out;
  WorldState s = start;
  if (task) advance_stages(*task, s);
  out.steps.reserve(seq.size());
  for (const ActionToken& a : seq) {
    StepResult r = oracle_step(s, a, limits);
    if (r.legal) {
      s = std::move(r.state);
      if (task) advance_stages(*task, s);
    } else {
      ++out.violations;
    }
    out.steps.push_back(TraceStep{r.legal, std::move(r.reason), s});
  }
  out.final_state = std::move(s);
  return out;
}

WorldState sample_layout(const TaskSpec& task, Rng& rng) {
  const CellRect& r = task.spawn;
  const std::size_t w = r.x1 - r.x0 + 1, h = r.y1 - r.y0 + 1;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::array<std::size_t, 2>> cells;
    for (int tries = 0; tries < 200 && cells.size() < task.n_objects; ++tries) {
      const std::size_t cx = r.x0 + rng.below(w);
      const std::size_t cy = r.y0 + rng.below(h);
      bool ok = true;
      for (const auto& c : cells) {
        const auto dx = static_cast<long>(c[0]) - static_cast<long>(cx);
        const auto dy = static_cast<long>(c[1]) - static_cast<long>(cy);
        if (std::max(std::labs(dx), std::labs(dy)) < 2) ok = false;
      }
      if (ok) cells.push_back({cx, cy});
    }
    if (cells.size() < task.n_objects) continue;
    std::sort(cells.begin(), cells.end());
    WorldState s;
    for (const auto& c : cells) {
      s.objects.push_back(ObjectPose{task.limits.cell_center(c[0]), task.limits.cell_center(c[1]), 0.0, -1});
    }
    return s;
  }
  throw Error("task '" + task.name + "': could not place " + std::to_string(task.n_objects) +
              " objects in the spawn region");
}

namespace {

class Planner {
 public:
  Planner(const TaskSpec& task, WorldState start) : task_(task), s_(std::move(start)) {}

  void achieve(const StagePredicate& st) {
    using K = StagePredicate::Kind;
    switch (st.kind) {
      case K::holding:
        if (s_.held == st.a) return;
        if (s_.held >= 0) emit(ActionType::release, here_x(), here_y(), 1.0);
        emit(ActionType::approach, obj(st.a).x, obj(st.a).y, 1.0);
        emit(ActionType::grasp, here_x(), here_y(), 0.0);
        return;
      case K::lifted:
        achieve({K::holding, st.a, 0});
        if (!s_.lifted) emit(ActionType::lift, here_x(), here_y(), 0.0);
        return;
      case K::on:
        if (obj(st.a).on == st.b) return;
        achieve({K::lifted, st.a, 0});
        emit(ActionType::move, obj(st.b).x, obj(st.b).y, 0.0);
        emit(ActionType::place, here_x(), here_y(), 0.0);
        return;
      case K::rest_on:
        achieve({K::on, st.a, st.b});
        if (s_.held == st.a) emit(ActionType::release, here_x(), here_y(), 1.0);
        return;
      case K::rest_at: {
        if (stage_satisfied(task_, s_, st)) return;
        achieve({K::lifted, st.a, 0});
        const auto& slot = task_.slots[static_cast<std::size_t>(st.b)];
        emit(ActionType::move, task_.limits.cell_center(slot[0]), task_.limits.cell_center(slot[1]), 0.0);
        emit(ActionType::release, here_x(), here_y(), 1.0);
        return;
      }
    }
  }

  ActionSequence take() { return std::move(seq_); }

 private:
  const ObjectPose& obj(int id) const { return s_.objects[static_cast<std::size_t>(id)]; }
  double here_x() const { return s_.gripper_x; }
  double here_y() const { return s_.gripper_y; }

  void emit(ActionType type, double x, double y, double grip) {
    const ActionToken tok{type, {x, y, 0.0, grip}};
    StepResult r = oracle_step(s_, tok, task_.limits);
    if (!r.legal) throw ContractError("planner produced an illegal step: " + r.reason);
    s_ = std::move(r.state);
    seq_.push_back(tok);
  }

  const TaskSpec& task_;
  WorldState s_;
  ActionSequence seq_;
};

ActionToken noop_at(const WorldState& s) {
  return ActionToken{ActionType::noop, {s.gripper_x, s.gripper_y, 0.0, s.held >= 0 ? 0.0 : 1.0}};
}

}  // namespace

ActionSequence plan_task(const TaskSpec& task, const WorldState& start) {
  Planner p(task, start);
  for (const StagePredicate& st : task.stages) p.achieve(st);
  return p.take();
}

Episode script_demo(const TaskSpec& task, Rng& rng, double jitter_sigma, std::size_t horizon,
                    std::size_t n_cameras) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    WorldState start = sample_layout(task, rng);
    ActionSequence seq;
    try {
      seq = plan_task(task, start);
    } catch (const ContractError&) {
      continue;
    }
    if (seq.size() > horizon) continue;
    {
      WorldState end = replay(seq, start, nullptr, task.limits).final_state;
      while (seq.size() < horizon) seq.push_back(noop_at(end));
    }
    for (ActionToken& tok : seq)
      for (std::size_t p = 0; p < 3; ++p) tok.params[p] += jitter_sigma * rng.normal();

    Replay r = replay(seq, start, &task, task.limits);
    if (r.violations != 0 || static_cast<std::size_t>(r.final_state.stage_counter) != task.n_stages()) {
      continue;
    }
    Episode ep;
    ep.task_id = task.name;
    ep.observation = observe(start, task, n_cameras);
    ep.start = std::move(start);
    ep.actions = std::move(seq);
    ep.trace = std::move(r.steps);
    return ep;
  }
  throw Error("task '" + task.name + "': no valid demonstration after 100 layouts");
}

Episode script_demo(std::string_view task_id, Rng& rng, double jitter_sigma, std::size_t horizon,
                    std::size_t n_cameras) {
  return script_demo(builtin_task(task_id), rng, jitter_sigma, horizon, n_cameras);
}

double violation_rate(const ActionSequence& seq, const WorldState& start, const WorldLimits& limits) {
  if (seq.empty()) return 0.0;
  return static_cast<double>(replay(seq, start, nullptr, limits).violations) /
         static_cast<double>(seq.size());
}

RepairResult repair(const ActionSequence& seq, const WorldState& start, const WorldLimits& limits) {
  RepairResult out;
  WorldState s = start;
  for (const ActionToken& tok : seq) {
    StepResult r = oracle_step(s, tok, limits);
    if (r.legal) {
      s = std::move(r.state);
      out.repaired.push_back(tok);
      continue;
    }
    ActionToken fixed = tok;
    double sq = 0.0;
    for (std::size_t p = 0; p < kParamDim; ++p) {
      const double lo = limits.param_lo[p], hi = limits.param_hi[p];
      const double v = tok.params[p];
      const double c = std::isfinite(v) ? std::clamp(v, lo, hi) : lo;
      const double d = std::isfinite(v) ? c - v : hi - lo;
      fixed.params[p] = c;
      sq += d * d;
    }
    const double clamp = std::sqrt(sq);
    out.clamp_l2 += clamp;
    out.cost += clamp;
    r = oracle_step(s, fixed, limits);
    if (!r.legal) {
      for (std::size_t t = 0; t < kNumActionTypes; ++t) {
        fixed.type = action_type(t);
        r = oracle_step(s, fixed, limits);
        if (r.legal) break;
      }
      out.cost += 1.0;
      ++out.substitutions;
    }
    s = std::move(r.state);
    out.repaired.push_back(fixed);
  }
  return out;
}

double d_phys(const ActionSequence& seq, const WorldState& start, const WorldLimits& limits) {
  return repair(seq, start, limits).cost;
}

Tensor invariant_measure(const ActionSequence& seq, const WorldState& start, const TaskSpec& task) {
  const Replay r = replay(seq, start, &task, task.limits);
  Tensor out({seq.size(), 3});
  for (std::size_t t = 0; t < r.steps.size(); ++t) {
    const WorldState& s = r.steps[t].state;
    out(t, 0) = static_cast<double>(s.objects.size());
    out(t, 1) = s.held_count();
    out(t, 2) = s.stage_counter;
  }
  return out;
}

double atp(const ActionSequence& seq, const WorldState& start, const TaskSpec& task) {
  if (task.n_stages() == 0) return 0.0;
  const Replay r = replay(seq, start, &task, task.limits);
  return static_cast<double>(r.final_state.stage_counter) / static_cast<double>(task.n_stages());
}

namespace {

std::string state_key(const WorldState& s) {
  std::string key;
  char buf[96];
  for (const ObjectPose& p : s.objects) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d;", p.x, p.y, p.on);
    key += buf;
  }
  std::snprintf(buf, sizeof(buf), "g%.6f,%.6f,h%d,l%d,n%d", s.gripper_x, s.gripper_y, s.held,
                s.lifted ? 1 : 0, s.near);
  key += buf;
  return key;
}

// Parameter choices that exercise every branch of the oracle from state s.
std::vector<std::array<double, 2>> representative_targets(const WorldState& s,
                                                          const WorldLimits& limits) {
  std::vector<std::array<double, 2>> out;
  for (const ObjectPose& p : s.objects) out.push_back({p.x, p.y});
  out.push_back({s.gripper_x, s.gripper_y});
  for (std::size_t cy = 0; cy < limits.grid; ++cy) {
    bool found = false;
    for (std::size_t cx = 0; cx < limits.grid && !found; ++cx) {
      const double x = limits.cell_center(cx), y = limits.cell_center(cy);
      if (find_near(s, x, y, 2.0 * limits.near_radius) < 0) {
        out.push_back({x, y});
        found = true;
      }
    }
    if (found) break;
  }
  out.push_back({-0.5, -0.5});
  return out;
}

std::vector<WorldState> canonical_starts(const WorldLimits& limits) {
  const double a = limits.cell_center(1), b = limits.cell_center(5);
  WorldState apart;
  apart.objects = {ObjectPose{a, a, 0.0, -1}, ObjectPose{b, b, 0.0, -1}};
  WorldState stacked;
  stacked.objects = {ObjectPose{a, a, 0.0, 1}, ObjectPose{a, a, 0.0, -1}, ObjectPose{b, b, 0.0, -1}};
  return {apart, stacked};
}

}  // namespace

TransitionTables enumerate_transitions(const WorldLimits& limits, int depth) {
  constexpr std::size_t n = kNumActionTypes;
  struct Node {
    WorldState state;
    int depth = 0;
    unsigned legal_mask = 0;
    std::vector<std::pair<std::size_t, std::size_t>> succ;  // (type, node)
  };
  std::vector<Node> nodes;
  std::unordered_map<std::string, std::size_t> index;
  std::deque<std::size_t> queue;
  for (WorldState& s : canonical_starts(limits)) {
    std::string key = state_key(s);
    if (index.emplace(key, nodes.size()).second) {
      nodes.push_back(Node{std::move(s), 0, 0, {}});
      queue.push_back(nodes.size() - 1);
    }
  }
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    const WorldState state = nodes[u].state;
    const int d = nodes[u].depth;
    for (const auto& target : representative_targets(state, limits)) {
      for (std::size_t t = 0; t < n; ++t) {
        const ActionToken tok{action_type(t), {target[0], target[1], 0.0, 0.0}};
        StepResult r = oracle_step(state, tok, limits);
        if (!r.legal) continue;
        nodes[u].legal_mask |= 1u << t;
        if (d >= depth) continue;
        std::string key = state_key(r.state);
        auto [it, inserted] = index.emplace(std::move(key), nodes.size());
        if (inserted) {
          nodes.push_back(Node{std::move(r.state), d + 1, 0, {}});
          queue.push_back(it->second);
        }
        auto& succ = nodes[u].succ;
        const std::pair<std::size_t, std::size_t> edge{t, it->second};
        if (std::find(succ.begin(), succ.end(), edge) == succ.end()) succ.push_back(edge);
      }
    }
  }

  TransitionTables tables;
  tables.allowed = Tensor({n, n});
  tables.rules = Tensor({n, n, n});
  tables.states_visited = nodes.size();
  for (const Node& u : nodes) {
    for (const auto& [a, v] : u.succ) {
      const Node& nv = nodes[v];
      for (std::size_t b = 0; b < n; ++b)
        if (nv.legal_mask & (1u << b)) tables.allowed(a, b) = 1.0;
      if (nv.depth >= depth) continue;
      for (const auto& [b, w] : nv.succ)
        for (std::size_t c = 0; c < n; ++c)
          if (nodes[w].legal_mask & (1u << c)) tables.rules[fusion_index(n, c, a, b)] = 1.0;
    }
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      double total = 0.0;
      for (std::size_t c = 0; c < n; ++c) total += tables.rules[fusion_index(n, c, a, b)];
      if (total == 0.0)
        for (std::size_t c = 0; c < n; ++c) tables.rules[fusion_index(n, c, a, b)] = tables.allowed(a, c);
    }
  return tables;
}

FusionSystem blockworld_fusion_system(const TransitionTables& tables, const HorizonLayout& layout) {
  constexpr std::size_t n = kNumActionTypes;
  if (layout.primitives == 0 || layout.horizon % layout.primitives != 0) {
    throw ContractError("horizon " + std::to_string(layout.horizon) + " is not divisible into " +
                        std::to_string(layout.primitives) + " primitives");
  }
  FusionSystem::Parts parts;
  parts.n_types = n;
  parts.fusion = Tensor({n, n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) parts.fusion[fusion_index(n, i, i, j)] = tables.allowed(i, j);
  parts.local_rules = tables.rules;

  for (std::size_t i = 0; i < layout.primitives; ++i)
    for (std::size_t j = 0; j < layout.primitives; ++j)
      if (i != j) parts.couplings.emplace(PrimitivePair{i, j}, Tensor::identity(2));

  const std::size_t m = layout.horizon / layout.primitives;
  const std::size_t w = layout.width;
  const double norm = 1.0 / std::sqrt(static_cast<double>(m));
  for (std::size_t k = 0; k < layout.primitives; ++k) {
    Tensor basis({layout.horizon * w, w});
    for (std::size_t p = k * m; p < (k + 1) * m; ++p)
      for (std::size_t c = 0; c < w; ++c) basis(p * w + c, c) = norm;
    parts.projectors.push_back(make_projector(static_cast<int>(k), std::move(basis)));
  }
  return FusionSystem::create(std::move(parts));
}

}  // namespace topoflow
