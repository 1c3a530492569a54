// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

// topoflow command-line tool.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli_support.hpp"
#include "json.hpp"
#include "topoflow/blockworld.hpp"
#include "topoflow/checkpoint.hpp"
#include "topoflow/codec.hpp"
#include "topoflow/dataset.hpp"
#include "topoflow/errors.hpp"
#include "topoflow/flow.hpp"
#include "topoflow/fusion.hpp"
#include "topoflow/fusion_io.hpp"
#include "topoflow/io.hpp"
#include "topoflow/task_spec.hpp"
#include "topoflow/topomask.hpp"
#include "topoflow/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace topoflow::cli {
namespace {

using Clock = std::chrono::steady_clock;

/// Raised by check-fusion when a residual exceeds its tolerance.
struct ThresholdBreach : Error {
  using Error::Error;
};

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw Error(what + " '" + path + "' does not exist");
  if (fs::is_directory(path)) throw Error(what + " '" + path + "' is a directory");
}

void make_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

json provenance(const RunConfig& rc) { return json::parse(rc.json()); }

std::vector<std::string> provenance_comments(const RunConfig& rc) {
  return {"version: " + version_string(), "run_config: " + rc.json()};
}

std::vector<Episode> load_dataset(const std::string& path) {
  require_file(path, "dataset file");
  std::vector<Episode> data = read_dataset(path);
  if (data.empty()) throw Error("dataset file '" + path + "' has no episodes");
  return data;
}

Checkpoint load_model(const std::string& path) {
  require_file(path, "checkpoint file");
  return load_checkpoint(path);
}

IntegratorSpec integrator_for(const std::string& method, int steps, const std::string& variant) {
  const bool euler = method.empty() ? variant == "NR" : parse_integrator(method) == IntegratorMethod::euler;
  const IntegratorMethod m = euler ? IntegratorMethod::euler : IntegratorMethod::rk4;
  return IntegratorSpec::uniform(m, steps > 0 ? steps : (euler ? 10 : 4));
}

json action_json(const ActionToken& a) {
  return json{{"type", std::string(to_string(a.type))},
              {"params", std::vector<double>(a.params.begin(), a.params.end())}};
}

// ---------------------------------------------------------------------------
// Model and training options shared by train and ablate.

struct ModelOptions {
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  std::size_t primitives = 4;
  std::string mask_mode = "hard";
  bool no_time_conditioning = false;

  void add(OptionSet& o) {
    o.add("d-model", d_model, "Transformer width");
    o.add("layers", layers, "Transformer layers");
    o.add("heads", heads, "Attention heads");
    o.add("d-ff", d_ff, "Feed-forward width");
    o.add("primitives", primitives, "Primitives per horizon (K)");
    o.add("mask-mode", mask_mode, "hard | literal");
    o.flag("no-time-conditioning", no_time_conditioning, "Drop the τ features from action tokens");
  }

  /// Horizon, cameras and grid come from the data.
  ModelConfig build(const std::vector<Episode>& data, const std::string& variant) const {
    ModelConfig m;
    m.d_model = d_model;
    m.n_layers = layers;
    m.n_heads = heads;
    m.d_ff = d_ff;
    m.horizon = data.front().actions.size();
    m.n_cameras = data.front().observation.grids.size();
    m.grid = data.front().observation.grids.front().rows();
    m.primitives = variant == "NH" ? 1 : primitives;
    if (m.primitives == 0 || m.horizon % m.primitives != 0) {
      throw UsageError("primitives (" + std::to_string(m.primitives) + ") must divide the horizon (" +
                       std::to_string(m.horizon) + ")");
    }
    m.primitive_len = m.horizon / m.primitives;
    m.mask_mode = parse_mask_mode(mask_mode);
    m.topo_mask = variant != "NT";
    m.time_conditioning = !no_time_conditioning;
    m.validate();
    return m;
  }
};

struct TrainOptions {
  std::size_t epochs = desk_train_config().epochs;
  std::size_t batch_size = desk_train_config().batch_size;
  double lr = desk_train_config().lr;
  double lambda1 = 0.1;
  double lambda2 = 0.05;
  double lambda3 = 0.2;
  double tau_alpha = 1.5;
  double tau_beta = 1.0;
  double eta_mask = 1e-3;
  std::size_t mask_project_every = 1;
  double grad_clip = 1.0;
  std::string clip = "per-example";
  std::size_t probe_size = 64;
  bool paper_scale = false;

  void add(OptionSet& o) {
    o.add("epochs", epochs, "Passes over the dataset");
    o.add("batch-size", batch_size, "Examples per update");
    o.add("lr", lr, "Learning rate");
    o.add("lambda1", lambda1, "Weight of the task loss");
    o.add("lambda2", lambda2, "Weight of the smoothness loss");
    o.add("lambda3", lambda3, "Weight of the projector loss");
    o.add("tau-alpha", tau_alpha, "Beta(α, β) time distribution, α");
    o.add("tau-beta", tau_beta, "Beta(α, β) time distribution, β");
    o.add("eta-mask", eta_mask, "Mask step size");
    o.add("mask-project-every", mask_project_every, "Project the mask every N updates");
    o.add("grad-clip", grad_clip, "Gradient norm bound");
    o.add("clip", clip, "per-example | batch");
    o.add("probe-size", probe_size, "Fixed draws used to track the flow loss");
    o.flag("paper-scale", paper_scale, "lr 3e-4 and batch 256 unless given explicitly");
  }

  /// Runs before the run config is captured, so artifacts record the values used.
  void apply_paper_scale(const OptionSet& o) {
    if (!paper_scale) return;
    if (!o.given("lr")) lr = 3e-4;
    if (!o.given("batch-size")) batch_size = 256;
  }

  TrainConfig build(std::uint64_t seed, const std::string& variant) const {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.lr = lr;
    c.lambdas.lambda1 = lambda1;
    c.lambdas.lambda2 = lambda2;
    c.lambdas.lambda3 = lambda3;
    c.tau_alpha = tau_alpha;
    c.tau_beta = tau_beta;
    c.eta_mask = eta_mask;
    c.mask_project_every = mask_project_every;
    c.grad_clip = grad_clip;
    if (clip != "per-example" && clip != "batch") throw UsageError("clip must be per-example or batch, got '" + clip + "'");
    c.clip_per_example = clip == "per-example";
    c.probe_size = probe_size;
    c.seed = seed;
    if (variant == "NT") {
      // Without topology there is no mask to learn and no sector projectors.
      c.learn_mask = false;
      c.lambdas.lambda3 = 0.0;
    }
    c.validate();
    return c;
  }
};

struct TrainOutput {
  Checkpoint checkpoint;
  TrainReport report;
  double wall_ms = 0.0;
};

TrainOutput train_variant(const std::vector<Episode>& data, const ModelConfig& model, const TrainConfig& cfg,
                          const std::string& variant, const RunConfig& rc, bool verbose) {
  const FusionSystem system = blockworld_fusion_system(enumerate_transitions(), model.horizon_layout());
  const auto t0 = Clock::now();
  const EpochCallback progress = [&](const EpochRecord& e) {
    if (verbose) {
      std::fprintf(stderr, "[%s] epoch %zu/%zu flow %.4g probe %.4g residual %.2e\n", variant.c_str(), e.epoch,
                   cfg.epochs, e.loss.flow, e.probe_flow, e.mask_residual);
    }
    return true;
  };
  TrainResult res = train(data, cfg, model, system, std::nullopt, progress);
  TrainOutput out;
  out.wall_ms = ms_since(t0);
  out.checkpoint.model = model;
  out.checkpoint.train = cfg;
  out.checkpoint.variant = variant;
  out.checkpoint.params = std::move(res.params);
  out.checkpoint.mask = std::move(res.mask);
  out.checkpoint.fusion = system;
  out.checkpoint.run_config = rc.json();
  out.report = std::move(res.report);
  return out;
}

/// checkpoint.oplc, train_report.json and loss_curve.csv are reproducible;
/// timing.json holds the wall-clock figures.
void write_train_outputs(const std::string& dir, const TrainOutput& t, const RunConfig& rc) {
  fs::create_directories(dir);
  const TrainReport& r = t.report;
  json epochs = json::array();
  for (const EpochRecord& e : r.epochs) {
    epochs.push_back(json{{"epoch", e.epoch},
                          {"loss",
                           {{"total", e.loss.total},
                            {"flow", e.loss.flow},
                            {"task", e.loss.task},
                            {"smooth", e.loss.smooth},
                            {"topo", e.loss.topo}}},
                          {"probe_flow", e.probe_flow},
                          {"mask_residual", e.mask_residual},
                          {"grad_norm", e.grad_norm},
                          {"clipped_steps", e.clipped_steps}});
  }
  json report{{"version", version_string()},
              {"run_config", provenance(rc)},
              {"variant", t.checkpoint.variant},
              {"checkpoint", "checkpoint.oplc"},
              {"loss_curve", "loss_curve.csv"},
              {"timing", "timing.json"},
              {"initial_probe_flow", r.initial_probe_flow},
              {"final_probe_flow", r.epochs.empty() ? r.initial_probe_flow : r.epochs.back().probe_flow},
              {"aborted", r.aborted},
              {"abort_reason", r.abort_reason},
              {"steps", r.steps.size()},
              {"epochs", epochs}};

  Csv curve;
  curve.comments = provenance_comments(rc);
  curve.header = {"epoch",     "loss_total", "loss_flow",     "loss_task",     "loss_smooth",
                  "loss_topo", "probe_flow", "mask_residual", "grad_norm",     "clipped_steps"};
  curve.rows.push_back({"0", "", "", "", "", "", fmt(r.initial_probe_flow), "", "", ""});
  for (const EpochRecord& e : r.epochs) {
    curve.rows.push_back({std::to_string(e.epoch), fmt(e.loss.total), fmt(e.loss.flow), fmt(e.loss.task),
                          fmt(e.loss.smooth), fmt(e.loss.topo), fmt(e.probe_flow), fmt(e.mask_residual),
                          fmt(e.grad_norm), std::to_string(e.clipped_steps)});
  }
  json timing{{"version", version_string()},
              {"run_config", provenance(rc)},
              {"epoch_wall_ms", r.epoch_wall_ms},
              {"total_wall_ms", t.wall_ms}};

  save_checkpoint(join_path(dir, "checkpoint.oplc"), t.checkpoint);
  write_file_atomic(join_path(dir, "train_report.json"), report.dump(2) + "\n");
  write_file_atomic(join_path(dir, "loss_curve.csv"), curve.str());
  write_file_atomic(join_path(dir, "timing.json"), timing.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Evaluation tables.

const std::vector<std::string> kMetricsHeader{"task",    "model_variant", "atp_mean", "violation_rate",
                                              "d_phys_mean", "fn_evals", "wall_ms"};

std::vector<std::string> metrics_row(const EvalRow& r) {
  return {r.task, r.variant, fmt(r.atp_mean), fmt(r.violation_rate), fmt(r.d_phys_mean),
          std::to_string(r.fn_evals), fixed(r.wall_ms)};
}

std::vector<EvalRow> evaluate_checkpoint(const Checkpoint& ck, const std::vector<std::string>& tasks,
                                         std::size_t episodes, std::uint64_t seed, const IntegratorSpec& integ,
                                         const std::string& label) {
  EvalConfig ec;
  ec.tasks = tasks;
  ec.n_episodes = episodes;
  ec.integrator = integ;
  ec.seed = seed;
  // Constrained decoding is part of the topology; the no-topology model decodes freely.
  ec.constrained = ck.model.topo_mask;
  return evaluate(ck.params, ck.mask, ck.model, ec, label);
}

// ---------------------------------------------------------------------------
// Commands.

struct GenData {
  std::vector<std::string> tasks{"stack-2", "sort-3"};
  std::size_t n = 2000;
  std::uint64_t seed = 0;
  double jitter = 0.01;
  std::size_t horizon = 20;
  std::size_t cameras = 1;
  std::string out = "demos.jsonl";

  void add(OptionSet& o) {
    o.add("task", tasks, "Task names, comma separated; episodes cycle through them");
    o.add("n", n, "Number of demonstrations");
    o.add("seed", seed, "Dataset seed (falls back to OPAL_SEED)");
    o.add("jitter", jitter, "σ of the Gaussian jitter on x, y and rotation");
    o.add("horizon", horizon, "Steps per demonstration");
    o.add("cameras", cameras, "Camera views per observation");
    o.add("out", out, "Output JSONL; the manifest goes to <out>.manifest.json");
  }

  int run(const OptionSet& o) const {
    const RunConfig rc = o.run_config();
    DatasetSpec spec;
    spec.tasks = tasks;
    spec.n = n;
    spec.seed = seed;
    spec.jitter_sigma = jitter;
    spec.horizon = horizon;
    spec.n_cameras = cameras;
    for (const std::string& t : tasks) builtin_task(t);
    const std::vector<Episode> data = generate_dataset(spec);
    json counts = json::object();
    for (const auto& [task, count] : task_counts(data)) counts[task] = count;
    json mix = json::object();
    for (const auto& [task, count] : task_counts(data))
      mix[task] = n ? static_cast<double>(count) / static_cast<double>(n) : 0.0;
    json manifest{{"version", version_string()},
                  {"run_config", provenance(rc)},
                  {"dataset", fs::path(out).filename().string()},
                  {"schema_version", kDatasetSchemaVersion},
                  {"seed", seed},
                  {"n", n},
                  {"counts", counts},
                  {"task_mix", mix}};
    make_parent(out);
    write_dataset(out, data, json{{"version", version_string()}, {"run_config", provenance(rc)}}.dump());
    write_file_atomic(out + ".manifest.json", manifest.dump(2) + "\n");
    std::printf("wrote %zu episodes to %s\n", data.size(), out.c_str());
    return kExitOk;
  }
};

struct Train {
  std::string data;
  std::string out = "run";
  std::string variant = "full";
  std::uint64_t seed = 0;
  bool quiet = false;
  ModelOptions model;
  TrainOptions train;

  void add(OptionSet& o) {
    o.add("data", data, "Dataset JSONL from gen-data")->required();
    o.add("out", out, "Output directory");
    o.add("variant", variant, "full | NT (no topology) | NH (no hierarchy)");
    o.add("seed", seed, "Training seed (falls back to OPAL_SEED)");
    model.add(o);
    train.add(o);
    o.flag("quiet", quiet, "No per-epoch progress on stderr");
  }

  int run(const OptionSet& o) {
    if (variant == "NR") throw UsageError("NR is the full model sampled with Euler-10: train 'full' and use eval --integrator euler");
    if (variant != "full" && variant != "NT" && variant != "NH")
      throw UsageError("variant must be full, NT or NH, got '" + variant + "'");
    train.apply_paper_scale(o);
    const RunConfig rc = o.run_config();
    const std::vector<Episode> episodes = load_dataset(data);
    const ModelConfig m = model.build(episodes, variant);
    const TrainConfig c = train.build(seed, variant);
    const TrainOutput t = train_variant(episodes, m, c, variant, rc, !quiet);
    write_train_outputs(out, t, rc);
    if (t.report.aborted) {
      std::fprintf(stderr, "error: training aborted: %s (last good state saved in %s)\n",
                   t.report.abort_reason.c_str(), out.c_str());
      return kExitRuntime;
    }
    std::printf("trained %s in %.1f s; probe flow %.4g -> %.4g; outputs in %s\n", variant.c_str(),
                t.wall_ms / 1000.0, t.report.initial_probe_flow,
                t.report.epochs.empty() ? t.report.initial_probe_flow : t.report.epochs.back().probe_flow,
                out.c_str());
    return kExitOk;
  }
};

struct Sample {
  std::string checkpoint;
  std::string data;
  std::vector<std::string> tasks{"stack-2", "sort-3"};
  std::size_t n = 10;
  std::uint64_t seed = 0;
  std::string integrator;
  int steps = 0;
  bool unconstrained = false;
  std::string out = "samples.jsonl";

  void add(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Checkpoint from train")->required();
    o.add("data", data, "Take observations from this dataset instead of fresh layouts");
    o.add("task", tasks, "Tasks for fresh layouts");
    o.add("n", n, "Number of sequences");
    o.add("seed", seed, "Sampling seed (falls back to OPAL_SEED)");
    o.add("integrator", integrator, "euler | rk4 (default: euler for NR, rk4 otherwise)");
    o.add("steps", steps, "Integrator steps (default: 10 for euler, 4 for rk4)");
    o.flag("unconstrained", unconstrained, "Decode token types without the mask");
    o.add("out", out, "Output JSONL");
  }

  int run(const OptionSet& o) const {
    const RunConfig rc = o.run_config();
    const Checkpoint ck = load_model(checkpoint);
    const IntegratorSpec integ = integrator_for(integrator, steps, ck.variant);
    std::vector<Episode> episodes;
    if (!data.empty()) {
      episodes = load_dataset(data);
      if (episodes.size() > n) episodes.resize(n);
    } else {
      const Rng root(seed);
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng = root.stream(i);
        episodes.push_back(script_demo(tasks[i % tasks.size()], rng, 0.0, ck.model.horizon, ck.model.n_cameras));
      }
    }
    Rng rng = Rng(seed).stream(0x73616d706c65ULL);
    std::string body = json{{"header", {{"version", version_string()}, {"run_config", provenance(rc)}}}}.dump() + "\n";
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      const SampleResult s = sample_actions(ck.params, ck.mask, ck.model, episodes[i].observation, integ, rng,
                                            !unconstrained && ck.model.topo_mask);
      json actions = json::array();
      for (const ActionToken& a : s.actions) actions.push_back(action_json(a));
      body += json{{"index", i}, {"task", episodes[i].task_id}, {"fn_evals", s.evaluations}, {"actions", actions}}
                  .dump() +
              "\n";
    }
    make_parent(out);
    write_file_atomic(out, body);
    std::printf("wrote %zu sequences to %s\n", episodes.size(), out.c_str());
    return kExitOk;
  }
};

struct Eval {
  std::string checkpoint;
  std::vector<std::string> tasks{"stack-2", "sort-3"};
  std::size_t episodes = 25;
  std::uint64_t seed = 1;
  std::string integrator;
  int steps = 0;
  std::string label;
  std::string out = "metrics.csv";

  void add(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Checkpoint from train")->required();
    o.add("task", tasks, "Tasks to evaluate");
    o.add("episodes", episodes, "Episodes per task");
    o.add("seed", seed, "Evaluation seed (falls back to OPAL_SEED)");
    o.add("integrator", integrator, "euler | rk4 (default: euler for NR, rk4 otherwise)");
    o.add("steps", steps, "Integrator steps (default: 10 for euler, 4 for rk4)");
    o.add("label", label, "model_variant column (default: the checkpoint's variant)");
    o.add("out", out, "Output CSV");
  }

  int run(const OptionSet& o) const {
    const RunConfig rc = o.run_config();
    const Checkpoint ck = load_model(checkpoint);
    const IntegratorSpec integ = integrator_for(integrator, steps, ck.variant);
    Csv csv;
    csv.comments = provenance_comments(rc);
    csv.header = kMetricsHeader;
    for (const EvalRow& r : evaluate_checkpoint(ck, tasks, episodes, seed, integ, label.empty() ? ck.variant : label))
      csv.rows.push_back(metrics_row(r));
    make_parent(out);
    write_file_atomic(out, csv.str());
    std::cout << render_table(csv.header, csv.rows);
    return kExitOk;
  }
};

struct Ablate {
  std::string data;
  std::string out = "ablation";
  std::vector<std::string> tasks{"stack-2", "sort-3"};
  std::size_t episodes = 25;
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 1;
  bool quiet = false;
  ModelOptions model;
  TrainOptions train;

  void add(OptionSet& o) {
    o.add("data", data, "Dataset JSONL from gen-data")->required();
    o.add("out", out, "Output directory");
    o.add("task", tasks, "Tasks to evaluate");
    o.add("episodes", episodes, "Episodes per task");
    o.add("seed", seed, "Training seed (falls back to OPAL_SEED)");
    o.add("eval-seed", eval_seed, "Evaluation seed");
    model.add(o);
    train.add(o);
    o.flag("quiet", quiet, "No per-epoch progress on stderr");
  }

  int run(const OptionSet& o) {
    train.apply_paper_scale(o);
    const RunConfig rc = o.run_config();
    const std::vector<Episode> episodes_data = load_dataset(data);
    std::map<std::string, std::vector<EvalRow>> rows;
    for (const std::string variant : {"full", "NT", "NH"}) {
      const TrainOutput t = train_variant(episodes_data, model.build(episodes_data, variant),
                                          train.build(seed, variant), variant, rc, !quiet);
      if (t.report.aborted) throw Error("training " + variant + " aborted: " + t.report.abort_reason);
      write_train_outputs(join_path(out, variant), t, rc);
      rows[variant] = evaluate_checkpoint(t.checkpoint, tasks, episodes, eval_seed,
                                          IntegratorSpec::uniform(IntegratorMethod::rk4, 4), variant);
      if (variant == "full") {
        rows["NR"] = evaluate_checkpoint(t.checkpoint, tasks, episodes, eval_seed,
                                         IntegratorSpec::uniform(IntegratorMethod::euler, 10), "NR");
      }
    }
    Csv csv;
    csv.comments = provenance_comments(rc);
    csv.header = kMetricsHeader;
    json details = json::array();
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      for (const std::string variant : {"full", "NT", "NR", "NH"}) {
        const EvalRow& r = rows.at(variant).at(t);
        csv.rows.push_back(metrics_row(r));
        details.push_back(json{{"task", r.task},
                               {"model_variant", r.variant},
                               {"transition_violations", r.transition_violations},
                               {"invariant_ok", r.invariant_ok}});
      }
    }
    write_file_atomic(join_path(out, "ablation.csv"), csv.str());
    write_file_atomic(join_path(out, "ablation_details.json"),
                      json{{"version", version_string()}, {"run_config", provenance(rc)}, {"rows", details}}.dump(2) +
                          "\n");
    std::cout << render_table(csv.header, csv.rows) << "\n" << render_grid(csv, "atp_mean");
    return kExitOk;
  }
};

struct BenchIntegrators {
  bool analytic = false;
  std::string checkpoint;
  std::size_t episodes = 10;
  std::uint64_t seed = 0;
  int repeats = 1000;
  int reference_steps = 64;
  std::string out = "bench_integrators.csv";

  void add(OptionSet& o) {
    o.flag("analytic", analytic, "Decay field v = -x from x0 = 1 (the default without --checkpoint)");
    o.add("checkpoint", checkpoint, "Also benchmark a trained model");
    o.add("episodes", episodes, "Sequences per task for the model benchmark");
    o.add("seed", seed, "Sampling seed (falls back to OPAL_SEED)");
    o.add("repeats", repeats, "Timing repetitions on the analytic field");
    o.add("reference-steps", reference_steps, "RK4 steps of the model reference solution");
    o.add("out", out, "Output CSV");
  }

  int run(const OptionSet& o) const {
    const RunConfig rc = o.run_config();
    std::optional<Checkpoint> ck;
    if (!checkpoint.empty()) ck = load_model(checkpoint);
    Csv csv;
    csv.comments = provenance_comments(rc);
    csv.header = {"field", "method", "steps", "fn_evals", "endpoint", "abs_error", "atp_mean", "wall_ms"};
    const std::vector<IntegratorSpec> specs{IntegratorSpec::uniform(IntegratorMethod::euler, 10),
                                            IntegratorSpec::uniform(IntegratorMethod::rk4, 4)};
    if (analytic || !ck) {
      const Field decay = [](const Tensor& a, double) { return scale(a, -1.0); };
      const double exact = std::exp(-1.0);
      for (const IntegratorSpec& spec : specs) {
        IntegrationResult r;
        const auto t0 = Clock::now();
        for (int i = 0; i < std::max(repeats, 1); ++i) r = integrate(decay, Tensor({1}, 1.0), spec);
        const double ms = ms_since(t0) / std::max(repeats, 1);
        const double end = r.A[0];
        csv.rows.push_back({"analytic", std::string(to_string(spec.method)), std::to_string(spec.n_steps),
                            std::to_string(r.evaluations), fmt(end), fmt(std::abs(end - exact)), "", fixed(ms, 6)});
        char line[160];
        std::snprintf(line, sizeof line, "analytic %s-%d: endpoint %.10f, error %.3e, %d evaluations\n",
                      std::string(to_string(spec.method)).c_str(), spec.n_steps, end, std::abs(end - exact),
                      r.evaluations);
        std::cout << line;
      }
    }
    if (ck) {
      const IntegratorSpec reference = IntegratorSpec::uniform(IntegratorMethod::rk4, reference_steps);
      for (const IntegratorSpec& spec : specs) {
        double err = 0.0, atp_sum = 0.0, ms = 0.0;
        int evals = 0;
        std::size_t count = 0;
        const Rng root(seed);
        for (const std::string task_name : {"stack-2", "sort-3"}) {
          const TaskSpec& task = builtin_task(task_name);
          for (std::size_t i = 0; i < episodes; ++i, ++count) {
            Rng layout = root.stream(count);
            const Episode ep = script_demo(task, layout, 0.0, ck->model.horizon, ck->model.n_cameras);
            // Same noise draw for the method and the reference.
            Rng a = root.stream(0x6e6f697365ULL + count), b = a;
            const SampleResult s = sample_actions(ck->params, ck->mask, ck->model, ep.observation, spec, a,
                                                  ck->model.topo_mask);
            const SampleResult ref = sample_actions(ck->params, ck->mask, ck->model, ep.observation, reference, b,
                                                    ck->model.topo_mask);
            double dev = 0.0;
            for (std::size_t k = 0; k < s.A.size(); ++k) dev = std::max(dev, std::abs(s.A[k] - ref.A[k]));
            err += dev;
            atp_sum += atp(s.actions, ep.start, task);
            ms += s.wall_ms;
            evals = s.evaluations;
          }
        }
        const double n = static_cast<double>(std::max<std::size_t>(count, 1));
        csv.rows.push_back({"model:" + ck->variant, std::string(to_string(spec.method)),
                            std::to_string(spec.n_steps), std::to_string(evals), "", fmt(err / n), fmt(atp_sum / n),
                            fixed(ms / n)});
      }
    }
    make_parent(out);
    write_file_atomic(out, csv.str());
    std::cout << render_table(csv.header, csv.rows);
    return kExitOk;
  }
};

struct DumpMask {
  std::string checkpoint;
  std::string what = "M";
  std::string out;

  void add(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Checkpoint whose learned mask to dump (default: the built BlockWorld mask)");
    o.add("what", what, "M | hard-zero");
    o.add("out", out, "Output CSV (default: standard output)");
  }

  int run(const OptionSet& o) const {
    if (what != "M" && what != "hard-zero") throw UsageError("what must be M or hard-zero, got '" + what + "'");
    const RunConfig rc = o.run_config();
    TopoMask mask;
    if (!checkpoint.empty()) {
      mask = load_model(checkpoint).mask;
    } else {
      ModelConfig m;
      mask = build_mask(blockworld_fusion_system(enumerate_transitions(), m.horizon_layout()));
    }
    const Tensor& t = what == "M" ? mask.M : mask.hard_zero;
    Csv csv;
    csv.comments = provenance_comments(rc);
    csv.header = {"from"};
    const bool named = t.rows() == kNumActionTypes;
    auto name = [&](std::size_t i) {
      return named ? std::string(to_string(action_type(i))) : std::to_string(i);
    };
    for (std::size_t j = 0; j < t.cols(); ++j) csv.header.push_back(name(j));
    for (std::size_t i = 0; i < t.rows(); ++i) {
      std::vector<std::string> row{name(i)};
      for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(fmt(t(i, j)));
      csv.rows.push_back(std::move(row));
    }
    if (out.empty()) {
      std::cout << csv.str();
    } else {
      make_parent(out);
      write_file_atomic(out, csv.str());
    }
    return kExitOk;
  }
};

struct CheckFusion {
  std::string spec;
  double tol = -1.0;
  std::string out;

  void add(OptionSet& o) {
    o.add("spec", spec, "Fusion system description file")->required();
    o.add("tol", tol, "Residual tolerance (default: the file's tolerance)");
    o.add("out", out, "Also write the report as JSON");
  }

  int run(const OptionSet& o) const {
    const RunConfig rc = o.run_config();
    require_file(spec, "fusion spec file");
    const FusionSpec parsed = read_fusion_spec_file(spec);
    const double tolerance = tol >= 0.0 ? tol : parsed.tolerance;
    // Structural checks only; the residuals are judged below.
    const FusionSystem system = FusionSystem::create(parsed.parts, std::numeric_limits<double>::infinity());
    const double pentagon = pentagon_residual(system);
    const double hexagon = hexagon_residual(system);
    double braiding = 0.0;
    for (const auto& [ij, omega] : system.couplings()) {
      for (const auto& [jk, other] : system.couplings()) {
        if (jk.first == ij.second) braiding = std::max(braiding, braiding_residual(system, ij.first, ij.second, jk.second));
      }
    }
    const TopoMask mask = build_mask(system, tolerance);
    const double mask_res = mask_residual(mask, system);
    std::size_t hard_zeros = 0;
    for (std::size_t k = 0; k < mask.hard_zero.size(); ++k) hard_zeros += mask.hard_zero[k] != 0.0;
    // The three-index hexagon reading is reported but not enforced.
    const bool ok = pentagon <= tolerance && braiding <= tolerance;

    std::vector<std::vector<std::string>> rows{
        {"pentagon", fmt(pentagon), fmt(tolerance), pentagon <= tolerance ? "ok" : "BREACH"},
        {"hexagon", fmt(hexagon), "-", "info"},
        {"braiding", fmt(braiding), fmt(tolerance), braiding <= tolerance ? "ok" : "BREACH"},
        {"mask", fmt(mask_res), "-", "info"}};
    std::cout << "fusion system " << spec << ": " << system.n_types() << " types, " << system.couplings().size()
              << " couplings, " << system.projectors().size() << " projectors, " << hard_zeros
              << " forbidden transitions\n"
              << render_table({"check", "residual", "tolerance", "status"}, rows);
    if (!out.empty()) {
      json report{{"version", version_string()},
                  {"run_config", provenance(rc)},
                  {"spec", spec},
                  {"n_types", system.n_types()},
                  {"tolerance", tolerance},
                  {"pentagon_residual", pentagon},
                  {"hexagon_residual", hexagon},
                  {"braiding_residual", braiding},
                  {"mask_residual", mask_res},
                  {"forbidden_transitions", hard_zeros},
                  {"pass", ok}};
      make_parent(out);
      write_file_atomic(out, report.dump(2) + "\n");
    }
    if (!ok) throw ThresholdBreach("residual above tolerance " + fmt(tolerance));
    return kExitOk;
  }
};

struct Report {
  std::string in;
  std::string metric = "atp_mean";
  std::string plot;

  void add(OptionSet& o) {
    o.add("in", in, "Metrics or loss-curve CSV")->required();
    o.add("metric", metric, "Column shown in the variant × task grid");
    o.add("plot", plot, "Directory for SVG plots");
  }

  int run(const OptionSet&) const {
    require_file(in, "CSV file");
    Csv csv = parse_csv(read_file(in));
    if (csv.header.empty()) csv.header = kMetricsHeader;
    std::cout << render_table(csv.header, csv.rows);
    const std::string grid = render_grid(csv, metric);
    if (!grid.empty()) std::cout << "\n" << grid;
    if (!plot.empty()) write_plots(csv);
    return kExitOk;
  }

  void write_plots(const Csv& csv) const {
    fs::create_directories(plot);
    const std::string stem = fs::path(in).stem().string();
    auto number = [](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      return s.empty() || end != s.c_str() + s.size() ? NAN : v;
    };
    std::vector<std::string> written;
    if (const std::size_t ce = csv.column("epoch"); ce != std::string::npos) {
      for (std::size_t c = 0; c < csv.header.size(); ++c) {
        if (c == ce) continue;
        Series s{csv.header[c], {}, {}};
        for (const auto& row : csv.rows) {
          s.x.push_back(number(row[ce]));
          s.y.push_back(number(row[c]));
        }
        const std::string path = join_path(plot, stem + "_" + csv.header[c] + ".svg");
        write_file_atomic(path, svg_line_plot(csv.header[c], "epoch", {s}));
        written.push_back(path);
      }
    }
    const std::size_t ct = csv.column("task"), cv = csv.column("model_variant");
    if (ct != std::string::npos && cv != std::string::npos) {
      std::vector<std::string> tasks, variants;
      for (const auto& row : csv.rows) {
        if (std::find(tasks.begin(), tasks.end(), row[ct]) == tasks.end()) tasks.push_back(row[ct]);
        if (std::find(variants.begin(), variants.end(), row[cv]) == variants.end()) variants.push_back(row[cv]);
      }
      for (const std::string col : {"atp_mean", "violation_rate", "d_phys_mean", "wall_ms"}) {
        const std::size_t cm = csv.column(col);
        if (cm == std::string::npos) continue;
        std::vector<Series> series;
        for (const std::string& v : variants) {
          Series s{v, {}, std::vector<double>(tasks.size(), NAN)};
          for (const auto& row : csv.rows) {
            if (row[cv] != v) continue;
            const auto t = std::find(tasks.begin(), tasks.end(), row[ct]) - tasks.begin();
            s.y[static_cast<std::size_t>(t)] = number(row[cm]);
          }
          series.push_back(std::move(s));
        }
        const std::string path = join_path(plot, stem + "_" + col + ".svg");
        write_file_atomic(path, svg_bar_plot(col, tasks, series));
        written.push_back(path);
      }
    }
    for (const std::string& p : written) std::cout << "plot: " << p << "\n";
  }
};

}  // namespace

int run_main(int argc, char** argv) {
  CLI::App app{"topoflow: topologically masked flow-matching policies on a block world"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  GenData gen;
  Train tr;
  Sample smp;
  Eval ev;
  Ablate abl;
  BenchIntegrators bench;
  DumpMask dump;
  CheckFusion check;
  Report rep;

  std::vector<std::pair<CLI::App*, std::unique_ptr<OptionSet>>> subs;
  std::map<CLI::App*, std::function<int(const OptionSet&)>> runners;
  auto reg = [&](auto& cmd, const char* name, const char* desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    auto opts = std::make_unique<OptionSet>(sub);
    cmd.add(*opts);
    runners[sub] = [&cmd](const OptionSet& o) { return cmd.run(o); };
    subs.emplace_back(sub, std::move(opts));
    return sub;
  };
  reg(gen, "gen-data", "Generate scripted demonstrations");
  reg(tr, "train", "Train a policy");
  reg(smp, "sample", "Sample action sequences from a checkpoint");
  reg(ev, "eval", "Evaluate a checkpoint in the block world");
  reg(abl, "ablate", "Train and evaluate the full, NT, NR and NH variants");
  reg(bench, "bench-integrators", "Euler-10 versus RK4-4");
  reg(dump, "dump-mask", "Print a topological mask as CSV");
  reg(check, "check-fusion", "Residual report for a fusion system file");
  reg(rep, "report", "Render a metrics CSV as a table")->alias("render");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  for (auto& [sub, opts] : subs) {
    if (!sub->parsed()) continue;
    try {
      opts->resolve();
      return runners.at(sub)(*opts);
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const ThresholdBreach& e) {
      std::cerr << "check failed: " << e.what() << "\n";
      return kExitThreshold;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  return kExitUsage;
}

}  // namespace topoflow::cli

int main(int argc, char** argv) { return topoflow::cli::run_main(argc, argv); }
