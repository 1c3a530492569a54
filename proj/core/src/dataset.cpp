// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/dataset.hpp"

#include <algorithm>
#include <json.hpp>
#include <sstream>

#include "topoflow/errors.hpp"
#include "topoflow/io.hpp"

namespace topoflow {

namespace {

using nlohmann::json;

json state_json(const WorldState& s) {
  json objects = json::array();
  for (const ObjectPose& p : s.objects) {
    objects.push_back({{"x", p.x}, {"y", p.y}, {"theta", p.theta}, {"on", p.on}});
  }
  return {{"objects", objects},
          {"gripper", {s.gripper_x, s.gripper_y}},
          {"held", s.held},
          {"lifted", s.lifted},
          {"near", s.near},
          {"stage_counter", s.stage_counter}};
}

WorldState state_from(const json& j) {
  WorldState s;
  for (const json& o : j.at("objects")) {
    s.objects.push_back(ObjectPose{o.at("x").get<double>(), o.at("y").get<double>(),
                                   o.at("theta").get<double>(), o.at("on").get<int>()});
  }
  s.gripper_x = j.at("gripper").at(0).get<double>();
  s.gripper_y = j.at("gripper").at(1).get<double>();
  s.held = j.at("held").get<int>();
  s.lifted = j.at("lifted").get<bool>();
  s.near = j.at("near").get<int>();
  s.stage_counter = j.at("stage_counter").get<int>();
  return s;
}

json tensor_values(const Tensor& t) { return json(std::vector<double>(t.data().begin(), t.data().end())); }

}  // namespace

std::string episode_to_json(const Episode& ep) {
  json grids = json::array();
  for (const Tensor& g : ep.observation.grids) grids.push_back(tensor_values(g));
  json actions = json::array();
  for (const ActionToken& a : ep.actions) {
    actions.push_back({{"type", std::string(to_string(a.type))},
                       {"params", std::vector<double>(a.params.begin(), a.params.end())}});
  }
  json trace = json::array();
  for (const TraceStep& t : ep.trace) {
    trace.push_back({{"legal", t.legal}, {"reason", t.reason}, {"state", state_json(t.state)}});
  }
  const json j{{"schema_version", kDatasetSchemaVersion},
               {"task", ep.task_id},
               {"start", state_json(ep.start)},
               {"observation",
                {{"grids", grids},
                 {"task_token", ep.observation.task_token},
                 {"proprio", tensor_values(ep.observation.proprio)}}},
               {"actions", actions},
               {"trace", trace}};
  return j.dump();
}

Episode episode_from_json(std::string_view line, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no) + ": ";
  try {
    const json j = json::parse(line);
    const int version = j.at("schema_version").get<int>();
    if (version != kDatasetSchemaVersion) {
      throw ParseError(where + "schema version " + std::to_string(version) + ", expected " +
                       std::to_string(kDatasetSchemaVersion));
    }
    Episode ep;
    ep.task_id = j.at("task").get<std::string>();
    ep.start = state_from(j.at("start"));
    const json& obs = j.at("observation");
    for (const json& g : obs.at("grids")) {
      std::vector<double> v = g.get<std::vector<double>>();
      std::size_t side = 0;
      while (side * side < v.size()) ++side;
      if (side * side != v.size()) throw ParseError(where + "camera grid is not square");
      ep.observation.grids.emplace_back(Shape{side, side}, std::move(v));
    }
    ep.observation.task_token = obs.at("task_token").get<int>();
    std::vector<double> proprio = obs.at("proprio").get<std::vector<double>>();
    const std::size_t n_proprio = proprio.size();
    ep.observation.proprio = Tensor({1, n_proprio}, std::move(proprio));
    for (const json& a : j.at("actions")) {
      ActionToken tok;
      tok.type = parse_action_type(a.at("type").get<std::string>());
      const auto params = a.at("params").get<std::vector<double>>();
      if (params.size() != kParamDim) throw ParseError(where + "action needs 4 parameters");
      std::copy(params.begin(), params.end(), tok.params.begin());
      ep.actions.push_back(tok);
    }
    for (const json& t : j.at("trace")) {
      ep.trace.push_back(TraceStep{t.at("legal").get<bool>(), t.at("reason").get<std::string>(),
                                   state_from(t.at("state"))});
    }
    return ep;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(where + e.what());
  }
}

void write_dataset(const std::string& path, const std::vector<Episode>& episodes,
                   const std::string& header_json) {
  std::string out;
  if (!header_json.empty()) {
    out += std::string(kHeaderPrefix) + header_json + "}\n";
  }
  for (const Episode& ep : episodes) {
    out += episode_to_json(ep);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<Episode> read_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<Episode> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.starts_with(kHeaderPrefix)) continue;
    out.push_back(episode_from_json(line, line_no));
  }
  return out;
}

std::vector<Episode> generate_dataset(const DatasetSpec& spec) {
  if (spec.tasks.empty()) throw ContractError("dataset needs at least one task");
  std::vector<const TaskSpec*> tasks;
  for (const std::string& t : spec.tasks) tasks.push_back(&builtin_task(t));
  const Rng root(spec.seed);
  std::vector<Episode> out;
  out.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng rng = root.stream(i);
    out.push_back(script_demo(*tasks[i % tasks.size()], rng, spec.jitter_sigma, spec.horizon,
                              spec.n_cameras));
  }
  return out;
}

std::map<std::string, std::size_t> task_counts(const std::vector<Episode>& episodes) {
  std::map<std::string, std::size_t> out;
  for (const Episode& ep : episodes) ++out[ep.task_id];
  return out;
}

}  // namespace topoflow
