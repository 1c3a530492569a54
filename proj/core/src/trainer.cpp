// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "topoflow/codec.hpp"
#include "topoflow/errors.hpp"

namespace topoflow {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void accumulate(Tensor& acc, const Tensor& g, double scale = 1.0) {
  if (acc.empty()) acc = Tensor(g.shape());
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * g[i];
}

void add_parts(LossParts& acc, const LossParts& p, double w) {
  acc.flow += w * p.flow;
  acc.task += w * p.task;
  acc.smooth += w * p.smooth;
  acc.topo += w * p.topo;
  acc.total += w * p.total;
}

bool finite_parts(const LossParts& p) {
  return std::isfinite(p.flow) && std::isfinite(p.task) && std::isfinite(p.smooth) &&
         std::isfinite(p.topo) && std::isfinite(p.total);
}

bool hard_zeros_intact(const TopoMask& mask) {
  for (std::size_t i = 0; i < mask.n(); ++i)
    for (std::size_t j = 0; j < mask.n(); ++j)
      if (mask.forbidden(i, j) && mask.M(i, j) != 0.0) return false;
  return true;
}

Tensor topo_basis_for(const FusionSystem& fs, const ModelConfig& model) {
  Tensor basis = stacked_projector_basis(fs.projectors());
  if (!basis.empty() && basis.cols() != model.horizon * model.d_a) {
    throw DimensionError("fusion projectors act on " + std::to_string(basis.cols()) +
                         " coordinates, the action block has " +
                         std::to_string(model.horizon * model.d_a));
  }
  return basis;
}

std::vector<Tensor> encode_all(const std::vector<Episode>& data, const ModelConfig& model) {
  const ActionCodec codec;
  std::vector<Tensor> out;
  out.reserve(data.size());
  for (const Episode& ep : data) {
    if (ep.actions.size() != model.horizon) {
      throw DimensionError("episode of " + std::to_string(ep.actions.size()) +
                           " steps, model horizon is " + std::to_string(model.horizon));
    }
    out.push_back(codec.encode(ep.actions));
  }
  return out;
}

}  // namespace

TrainConfig desk_train_config() {
  TrainConfig c;
  c.lr = 1e-3;
  c.batch_size = 16;
  c.epochs = 30;
  return c;
}

void TrainConfig::validate() const {
  lambdas.validate();
  if (!(lr > 0.0)) throw ContractError("lr must be positive");
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  if (!(tau_alpha > 0.0 && tau_beta > 0.0)) throw ContractError("tau prior parameters must be positive");
  if (!(eps_tau > 0.0 && eps_tau < 1.0)) throw ContractError("eps_tau must lie in (0, 1)");
  if (!(eta_mask >= 0.0)) throw ContractError("eta_mask must be nonnegative");
  if (mask_project_every == 0) throw ContractError("mask_project_every must be positive");
  if (!(allowed_floor >= 0.0 && allowed_floor < 1.0)) throw ContractError("allowed_floor must lie in [0, 1)");
  if (!(norm_eps_pd > 0.0)) throw ContractError("norm_eps_pd must be positive");
  if (!(grad_clip > 0.0)) throw ContractError("grad_clip must be positive");
}

void optimizer_step(PolicyParams& params, const GradMap& grads, AdamState& state, double lr) {
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end()) throw LookupError("gradient for unknown parameter '" + name + "'");
    Tensor& p = it->second;
    require_same_shape(p, g, "optimizer_step");
    Tensor& m = state.m.try_emplace(name, p.shape()).first->second;
    Tensor& v = state.v.try_emplace(name, p.shape()).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

double global_norm(const GradMap& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) sq += v * v;
  return std::sqrt(sq);
}

Var example_loss(const ParamVars& p, Var mask, const ExampleInputs& in, const TrainConfig& cfg,
                 const ModelConfig& model, const Tensor& topo_basis, LossParts* parts) {
  Tape& tape = mask.tape();
  const Tensor& A = *in.A;
  const NoisySample sample = noise_sample(A, in.tau, *in.eps, cfg.eps_tau);
  const Tensor u = ot_target(sample, A, cfg.eps_tau);

  ModelConfig field_cfg = model;
  if (cfg.exact_precond) field_cfg.precond_tau_cap = std::max(model.precond_tau_cap, 1.0 - cfg.eps_tau);
  Var v = forward(p, *in.obs, sample.A_tau, in.tau, mask, field_cfg);
  Var diff = sub(v, tape.constant(u));

  Var norm_mask;
  if (model.topo_mask) {
    const std::vector<int> types = ActionCodec{}.token_types(A);
    norm_mask = index_expand(mask, types, types, 1.0, true);
  } else {
    norm_mask = tape.constant(Tensor({model.horizon, model.horizon}, 1.0));
  }
  const Tensor& nm = norm_mask.value();
  Tensor sym(nm.shape());
  for (std::size_t i = 0; i < nm.rows(); ++i)
    for (std::size_t j = 0; j < nm.cols(); ++j) sym(i, j) = 0.5 * (nm(i, j) + nm(j, i));
  const double diag = psd_shift(sym) + cfg.norm_eps_pd;

  Var l_flow = loss_flow(diff, norm_mask, diag);
  Var a_hat = add(tape.constant(sample.A_tau), scale(v, 1.0 - in.tau));
  Var l_task = loss_task(a_hat, A);
  Var l_smooth = loss_smooth(a_hat);
  Var l_topo = (cfg.lambdas.lambda3 > 0.0 && !topo_basis.empty())
                   ? loss_topo(diff, topo_basis)
                   : tape.constant(Tensor::scalar(0.0));

  Var total = add(add(l_flow, scale(l_task, cfg.lambdas.lambda1)),
                  add(scale(l_smooth, cfg.lambdas.lambda2), scale(l_topo, cfg.lambdas.lambda3)));
  if (parts) {
    parts->flow = l_flow.value().item();
    parts->task = l_task.value().item();
    parts->smooth = l_smooth.value().item();
    parts->topo = l_topo.value().item();
    parts->total = total.value().item();
  }
  return total;
}

Probe make_probe(const std::vector<Episode>& data, const TrainConfig& cfg, const ModelConfig& model) {
  Probe probe;
  Rng rng(cfg.seed ^ 0x70726f6265ULL);
  // Evenly spaced examples; small datasets repeat with fresh (τ, ε) draws.
  for (std::size_t k = 0; k < cfg.probe_size; ++k) {
    probe.index.push_back(data.size() >= cfg.probe_size ? k * data.size() / cfg.probe_size
                                                        : k % data.size());
    probe.tau.push_back(sample_tau(rng, cfg.tau_alpha, cfg.tau_beta, cfg.eps_tau));
    probe.eps.push_back(sample_gaussian(rng, {model.horizon, model.d_a}));
  }
  return probe;
}

double probe_flow_loss(const PolicyParams& params, const TopoMask& mask, const std::vector<Episode>& data,
                       const std::vector<Tensor>& encoded, const Probe& probe, const TrainConfig& cfg,
                       const ModelConfig& model) {
  if (probe.index.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < probe.index.size(); ++k) {
    const std::size_t i = probe.index[k];
    Tape tape;
    const ParamVars p = bind_params(tape, params, false);
    LossParts parts;
    const ExampleInputs in{&data[i].observation, &encoded[i], probe.tau[k], &probe.eps[k]};
    example_loss(p, tape.constant(mask.M), in, cfg, model, Tensor(), &parts);
    acc += parts.flow;
  }
  return acc / static_cast<double>(probe.index.size());
}

TrainResult train(const std::vector<Episode>& data, const TrainConfig& cfg, const ModelConfig& model,
                  const FusionSystem& fs, const std::optional<PolicyParams>& initial,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  if (data.empty()) throw ContractError("training needs a nonempty dataset");
  if (fs.n_types() != kNumActionTypes) {
    throw DimensionError("fusion system has " + std::to_string(fs.n_types()) + " types, expected " +
                         std::to_string(kNumActionTypes));
  }

  TrainResult res;
  if (initial) {
    res.params = *initial;
  } else {
    Rng init_rng = Rng(cfg.seed).stream(1);
    res.params = init_params(model, init_rng);
  }
  res.mask = build_mask(fs, 1e-6, model.mask_mode);
  const std::vector<Tensor> encoded = encode_all(data, model);
  const Tensor basis = topo_basis_for(fs, model);
  const Probe probe = make_probe(data, cfg, model);
  const bool learn_mask = cfg.learn_mask && model.topo_mask && cfg.eta_mask > 0.0;
  const ProjectionOptions proj{100, cfg.allowed_floor};

  res.report.initial_probe_flow = probe_flow_loss(res.params, res.mask, data, encoded, probe, cfg, model);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamState adam;
  Tensor mask_grad_acc(res.mask.M.shape());
  std::size_t since_projection = 0;
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t n_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double w = 1.0 / static_cast<double>(end - start);
      GradMap grads;
      Tensor mask_grad(res.mask.M.shape());
      LossParts batch;
      bool clipped = false;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const double tau = sample_tau(rng, cfg.tau_alpha, cfg.tau_beta, cfg.eps_tau);
        const Tensor eps = sample_gaussian(rng, {model.horizon, model.d_a});
        Tape tape;
        const ParamVars p = bind_params(tape, res.params, true);
        Var m = learn_mask ? tape.leaf(res.mask.M) : tape.constant(res.mask.M);
        LossParts parts;
        const ExampleInputs in{&data[i].observation, &encoded[i], tau, &eps};
        Var loss = example_loss(p, m, in, cfg, model, basis, &parts);
        add_parts(batch, parts, w);
        if (!finite_parts(parts)) break;
        tape.backward(loss);
        double example_scale = 1.0;
        if (cfg.clip_per_example) {
          double sq = 0.0;
          for (const auto& [name, var] : p.vars)
            if (!var.grad().empty()) sq += dot(var.grad(), var.grad());
          const double norm = std::sqrt(sq);
          if (norm > cfg.grad_clip) {
            example_scale = cfg.grad_clip / norm;
            clipped = true;
          }
        }
        for (const auto& [name, var] : p.vars)
          if (!var.grad().empty()) accumulate(grads[name], var.grad(), example_scale);
        if (learn_mask && !m.grad().empty()) mask_grad = axpy(mask_grad, 1.0, m.grad());
      }
      if (!finite_parts(batch)) {
        res.report.aborted = true;
        res.report.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(global_step + 1);
        return res;
      }
      for (auto& [name, g] : grads)
        for (double& v : g.data()) v *= w;
      StepRecord step{epoch, ++global_step, batch, global_norm(grads), clipped};
      if (clipped) ++rec.clipped_steps;
      if (!cfg.clip_per_example && step.grad_norm > cfg.grad_clip) {
        const double s = cfg.grad_clip / step.grad_norm;
        for (auto& [name, g] : grads)
          for (double& v : g.data()) v *= s;
        step.clipped = true;
        ++rec.clipped_steps;
      }
      optimizer_step(res.params, grads, adam, cfg.lr);

      if (learn_mask) {
        mask_grad_acc = axpy(mask_grad_acc, w, mask_grad);
        if (++since_projection >= cfg.mask_project_every) {
          const Tensor update = scale(mask_grad_acc, -1.0 / static_cast<double>(since_projection));
          try {
            res.mask = project_mask(res.mask, fs, update, cfg.eta_mask, proj);
          } catch (const ProjectionError& e) {
            res.report.aborted = true;
            res.report.abort_reason = std::string("mask projection failed: ") + e.what();
            return res;
          }
          mask_grad_acc = Tensor(res.mask.M.shape());
          since_projection = 0;
        }
      }

      add_parts(rec.loss, batch, 1.0);
      rec.grad_norm += step.grad_norm;
      ++n_steps;
      res.report.steps.push_back(step);
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(n_steps, 1));
    LossParts mean;
    add_parts(mean, rec.loss, inv);
    rec.loss = mean;
    rec.grad_norm *= inv;
    rec.probe_flow = probe_flow_loss(res.params, res.mask, data, encoded, probe, cfg, model);
    rec.mask_residual = mask_residual(res.mask, fs);
    res.report.epochs.push_back(rec);
    res.report.epoch_wall_ms.push_back(ms_since(t0));

    if (rec.mask_residual > res.mask.tol_consistency || !hard_zeros_intact(res.mask)) {
      res.report.aborted = true;
      res.report.abort_reason = "mask left the consistent set after epoch " + std::to_string(epoch);
      return res;
    }
    if (on_epoch && !on_epoch(rec)) break;
  }
  return res;
}

SampleResult sample_actions(const PolicyParams& params, const TopoMask& mask, const ModelConfig& model,
                            const Observation& obs, const IntegratorSpec& integrator, Rng& rng,
                            bool constrained, double eps_tau, const StepObserver& observer) {
  const auto t0 = Clock::now();
  const Tensor a0 = sample_gaussian(rng, {model.horizon, model.d_a});
  const Field field = [&](const Tensor& a, double tau) {
    return forward(params, obs, a, std::min(tau, 1.0 - eps_tau), mask, model);
  };
  IntegrationResult r = integrate(field, a0, integrator, observer);
  SampleResult out;
  out.actions = ActionCodec{}.decode(r.A, constrained ? &mask.M : nullptr);
  out.A = std::move(r.A);
  out.evaluations = r.evaluations;
  out.wall_ms = ms_since(t0);
  return out;
}

std::vector<EvalRow> evaluate_policy(const SequencePolicy& policy, const EvalConfig& cfg,
                                     const std::string& variant, const Tensor* allowed,
                                     const ModelConfig& model) {
  std::vector<EvalRow> rows;
  const Rng root(cfg.seed);
  for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
    const TaskSpec& task = builtin_task(cfg.tasks[t]);
    EvalRow row;
    row.task = task.name;
    row.variant = variant;
    for (std::size_t i = 0; i < cfg.n_episodes; ++i) {
      // High tag bits keep evaluation layouts apart from dataset streams.
      Rng rng = root.stream((0x5eedULL << 40) + (static_cast<std::uint64_t>(t) << 24) + i);
      const Episode ep = script_demo(task, rng, 0.0, model.horizon, model.n_cameras);
      int evals = 0;
      const auto t0 = Clock::now();
      const ActionSequence seq = policy(ep, rng, &evals);
      row.wall_ms += ms_since(t0);
      row.fn_evals = evals;
      row.atp_mean += atp(seq, ep.start, task);
      row.violation_rate += violation_rate(seq, ep.start, task.limits);
      row.d_phys_mean += d_phys(seq, ep.start, task.limits);
      if (allowed) row.transition_violations += static_cast<double>(transition_violations(seq, *allowed));
      const Tensor inv = invariant_measure(seq, ep.start, task);
      bool ok = true;
      for (std::size_t s = 0; s < inv.rows(); ++s) {
        ok = ok && inv(s, 0) == static_cast<double>(task.n_objects) && inv(s, 1) <= 1.0 &&
             (s == 0 || inv(s, 2) >= inv(s - 1, 2));
      }
      row.invariant_ok += ok ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(std::max<std::size_t>(cfg.n_episodes, 1));
    row.atp_mean /= n;
    row.violation_rate /= n;
    row.d_phys_mean /= n;
    row.transition_violations /= n;
    row.invariant_ok /= n;
    row.wall_ms /= n;
    rows.push_back(row);
  }
  return rows;
}

std::vector<EvalRow> evaluate(const PolicyParams& params, const TopoMask& mask, const ModelConfig& model,
                              const EvalConfig& cfg, const std::string& variant) {
  const SequencePolicy policy = [&](const Episode& ep, Rng& rng, int* evals) {
    SampleResult s = sample_actions(params, mask, model, ep.observation, cfg.integrator, rng,
                                    cfg.constrained, cfg.eps_tau);
    if (evals) *evals = s.evaluations;
    return s.actions;
  };
  return evaluate_policy(policy, cfg, variant, &mask.M, model);
}

}  // namespace topoflow
