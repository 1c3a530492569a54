// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "topoflow/errors.hpp"

namespace topoflow {

namespace {

constexpr std::size_t kTauFeatures = 4;

std::string layer_key(std::size_t l, const std::string& rest) {
  return "L" + std::to_string(l) + "." + rest;
}

std::string head_key(std::size_t l, std::size_t h, const char* w) {
  return layer_key(l, "h" + std::to_string(h) + "." + w);
}

Tensor tau_features(double tau) {
  const double pi = std::numbers::pi;
  return Tensor({1, kTauFeatures}, {tau, tau * tau, std::sin(pi * tau), std::cos(pi * tau)});
}

struct Shapes {
  std::vector<std::pair<std::string, Shape>> weights;  // N(0, 0.02²)
  std::vector<std::pair<std::string, Shape>> zeros;    // biases and head
};

Shapes param_shapes(const ModelConfig& cfg) {
  const std::size_t d = cfg.d_model, dh = cfg.d_model / cfg.n_heads;
  Shapes s;
  s.weights = {{"vis.W", {cfg.grid * cfg.grid, d}},
               {"cam.E", {cfg.n_cameras, d}},
               {"lang.W", {cfg.task_vocab, d}},
               {"state.W", {kProprioDim, d}},
               {"act.W", {cfg.d_a, d}},
               {"tau.W", {kTauFeatures, d}},
               {"pos.prim", {cfg.primitives, d}},
               {"pos.step", {cfg.primitive_len, d}}};
  s.zeros = {{"vis.b", {1, d}},     {"lang.b", {1, d}},        {"state.b", {1, d}},
             {"act.b", {1, d}},     {"head.W", {d, cfg.d_a}}, {"head.b", {1, cfg.d_a}}};
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      s.weights.push_back({head_key(l, h, "Wq"), {d, dh}});
      s.weights.push_back({head_key(l, h, "Wk"), {d, dh}});
      s.weights.push_back({head_key(l, h, "Wv"), {d, dh}});
      s.weights.push_back({head_key(l, h, "Wo"), {dh, d}});
    }
    s.weights.push_back({layer_key(l, "ff.W1"), {d, cfg.d_ff}});
    s.weights.push_back({layer_key(l, "ff.W2"), {cfg.d_ff, d}});
    s.zeros.push_back({layer_key(l, "ff.b1"), {1, cfg.d_ff}});
    s.zeros.push_back({layer_key(l, "ff.b2"), {1, d}});
  }
  return s;
}

void require_obs(const Observation& obs, const Tensor& A_tau, const ModelConfig& cfg) {
  if (obs.grids.size() != cfg.n_cameras) {
    throw DimensionError("observation has " + std::to_string(obs.grids.size()) +
                         " cameras, model expects " + std::to_string(cfg.n_cameras));
  }
  for (const Tensor& g : obs.grids)
    if (g.size() != cfg.grid * cfg.grid) throw DimensionError("camera grid has wrong size");
  if (obs.proprio.size() != kProprioDim) throw DimensionError("proprio vector has wrong size");
  if (obs.task_token < 0 || static_cast<std::size_t>(obs.task_token) >= cfg.task_vocab) {
    throw DimensionError("task token " + std::to_string(obs.task_token) + " outside vocabulary");
  }
  if (A_tau.shape() != Shape{cfg.horizon, cfg.d_a}) {
    throw DimensionError("A_tau has shape " + shape_string(A_tau.shape()) + ", expected " +
                         shape_string({cfg.horizon, cfg.d_a}));
  }
}

Var forward_impl(const ParamVars& p, const Observation& obs, const Tensor& A_tau, double tau,
                 Var mask, const ModelConfig& cfg, const Tensor* structural) {
  Tape& tape = mask.tape();
  const std::size_t ctx = cfg.n_context_tokens();
  const std::size_t t_total = cfg.n_tokens();
  Var x = encode(p, obs, A_tau, tau, cfg);

  // Hierarchical positions on action rows: primitive index plus step within it.
  std::vector<std::size_t> prim(cfg.horizon), step(cfg.horizon);
  for (std::size_t i = 0; i < cfg.horizon; ++i) {
    prim[i] = i / cfg.primitive_len;
    step[i] = i % cfg.primitive_len;
  }
  Var pos_actions = add(gather_rows(p["pos.prim"], prim), gather_rows(p["pos.step"], step));
  const std::vector<Var> pos_parts{tape.constant(Tensor({ctx, cfg.d_model})), pos_actions};
  x = add(x, concat_rows(pos_parts));

  Var m_pos;
  if (cfg.topo_mask) {
    const std::vector<int> types = ActionCodec{}.token_types(A_tau);
    m_pos = position_mask(mask, types, cfg);
  } else {
    m_pos = tape.constant(Tensor({t_total, t_total}, 1.0));
  }
  const Tensor block_mask = structural ? *structural : blockwise_structural_mask(cfg.block_layout());

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    Var attn;
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      Var q = matmul(x, p[head_key(l, h, "Wq")]);
      Var k = matmul(x, p[head_key(l, h, "Wk")]);
      Var v = matmul(x, p[head_key(l, h, "Wv")]);
      Var o = matmul(topo_attention(q, k, v, m_pos, block_mask, cfg.mask_mode), p[head_key(l, h, "Wo")]);
      attn = attn.valid() ? add(attn, o) : o;
    }
    x = add(x, attn);
    Var hidden = tanh(add_row(matmul(x, p[layer_key(l, "ff.W1")]), p[layer_key(l, "ff.b1")]));
    x = add(x, add_row(matmul(hidden, p[layer_key(l, "ff.W2")]), p[layer_key(l, "ff.b2")]));
  }

  std::vector<std::size_t> action_rows(cfg.horizon);
  for (std::size_t i = 0; i < cfg.horizon; ++i) action_rows[i] = ctx + i;
  Var h = gather_rows(x, action_rows);
  Var out = add_row(matmul(h, p["head.W"]), p["head.b"]);
  if (!cfg.time_conditioning) return out;

  // The head predicts the clean sequence Â; v = (Â − τA_τ)/(1 − τ²) is the
  // conditional field toward it, with τ clamped to the preconditioner cap.
  const double tc = std::clamp(tau, 0.0, cfg.precond_tau_cap);
  const double s = 1.0 / (1.0 - tc * tc);
  return sub(scale(out, s), tape.constant(scale(A_tau, tc * s)));
}

}  // namespace

BlockLayout ModelConfig::block_layout() const {
  return BlockLayout{{n_cameras + 1, 1, horizon}};
}

void ModelConfig::validate() const {
  if (primitives * primitive_len != horizon) {
    throw ContractError("horizon " + std::to_string(horizon) + " != K·m = " +
                        std::to_string(primitives) + "·" + std::to_string(primitive_len));
  }
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ContractError("d_model " + std::to_string(d_model) + " is not divisible by " +
                        std::to_string(n_heads) + " heads");
  }
  if (n_cameras == 0 || d_ff == 0 || n_layers == 0 || task_vocab == 0) {
    throw ContractError("model sizes must be positive");
  }
  if (d_a != ActionCodec::width()) {
    throw ContractError("d_a must equal the action encoding width " +
                        std::to_string(ActionCodec::width()));
  }
  if (!(precond_tau_cap >= 0.0 && precond_tau_cap < 1.0)) {
    throw ContractError("precond_tau_cap must lie in [0, 1)");
  }
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.size();
  return n;
}

bool PolicyParams::all_finite() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const auto& kv) { return kv.second.all_finite(); });
}

const Tensor& PolicyParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw LookupError("no parameter named '" + name + "'");
  return it->second;
}

PolicyParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const Shapes shapes = param_shapes(cfg);
  PolicyParams p;
  for (const auto& [name, shape] : shapes.weights) {
    Tensor t = sample_gaussian(rng, shape);
    for (double& v : t.data()) v *= 0.02;
    p.tensors.emplace(name, std::move(t));
  }
  for (const auto& [name, shape] : shapes.zeros) p.tensors.emplace(name, Tensor(shape));
  return p;
}

PolicyParams zero_params(const ModelConfig& cfg) {
  cfg.validate();
  const Shapes shapes = param_shapes(cfg);
  PolicyParams p;
  for (const auto& [name, shape] : shapes.weights) p.tensors.emplace(name, Tensor(shape));
  for (const auto& [name, shape] : shapes.zeros) p.tensors.emplace(name, Tensor(shape));
  return p;
}

const Var& ParamVars::operator[](const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw LookupError("no parameter named '" + name + "'");
  return it->second;
}

ParamVars bind_params(Tape& tape, const PolicyParams& params, bool trainable) {
  ParamVars out;
  for (const auto& [name, t] : params.tensors)
    out.vars.emplace(name, trainable ? tape.leaf(t) : tape.constant(t));
  return out;
}

Var encode(const ParamVars& p, const Observation& obs, const Tensor& A_tau, double tau,
           const ModelConfig& cfg) {
  require_obs(obs, A_tau, cfg);
  Tape& tape = p["vis.W"].tape();
  std::vector<Var> rows;
  for (std::size_t c = 0; c < cfg.n_cameras; ++c) {
    Var g = tape.constant(obs.grids[c].reshaped({1, cfg.grid * cfg.grid}));
    const std::vector<std::size_t> cam{c};
    rows.push_back(add(add_row(matmul(g, p["vis.W"]), p["vis.b"]), gather_rows(p["cam.E"], cam)));
  }
  Tensor one_hot({1, cfg.task_vocab});
  one_hot[static_cast<std::size_t>(obs.task_token)] = 1.0;
  rows.push_back(add_row(matmul(tape.constant(std::move(one_hot)), p["lang.W"]), p["lang.b"]));
  rows.push_back(add_row(matmul(tape.constant(obs.proprio.reshaped({1, kProprioDim})), p["state.W"]),
                         p["state.b"]));
  Var actions = add_row(matmul(tape.constant(A_tau), p["act.W"]), p["act.b"]);
  if (cfg.time_conditioning) {
    actions = add_row(actions, matmul(tape.constant(tau_features(tau)), p["tau.W"]));
  }
  rows.push_back(actions);
  return concat_rows(rows);
}

Tensor encode(const PolicyParams& params, const Observation& obs, const Tensor& A_tau, double tau,
              const ModelConfig& cfg) {
  Tape tape;
  return encode(bind_params(tape, params, false), obs, A_tau, tau, cfg).value();
}

Var position_mask(Var mask, std::span<const int> action_types, const ModelConfig& cfg) {
  std::vector<int> types(cfg.n_context_tokens(), -1);
  types.insert(types.end(), action_types.begin(), action_types.end());
  return index_expand(mask, types, types, 1.0, true);
}

Var forward(const ParamVars& p, const Observation& obs, const Tensor& A_tau, double tau, Var mask,
            const ModelConfig& cfg, const Tensor* structural) {
  return forward_impl(p, obs, A_tau, tau, mask, cfg, structural);
}

Tensor forward(const PolicyParams& params, const Observation& obs, const Tensor& A_tau, double tau,
               const TopoMask& mask, const ModelConfig& cfg) {
  Tape tape;
  ParamVars p = bind_params(tape, params, false);
  return forward(p, obs, A_tau, tau, tape.constant(mask.M), cfg).value();
}

Tensor forward_unmasked(const PolicyParams& params, const Observation& obs, const Tensor& A_tau,
                        double tau, const ModelConfig& cfg) {
  const Tensor x0 = encode(params, obs, A_tau, tau, cfg);
  const std::size_t ctx = cfg.n_context_tokens();
  Tensor x = x0;
  for (std::size_t i = 0; i < cfg.horizon; ++i)
    for (std::size_t c = 0; c < cfg.d_model; ++c)
      x(ctx + i, c) += params.at("pos.prim")(i / cfg.primitive_len, c) +
                       params.at("pos.step")(i % cfg.primitive_len, c);

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.d_model / cfg.n_heads));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    Tensor attn(x.shape());
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const Tensor q = matmul(x, params.at(head_key(l, h, "Wq")));
      const Tensor k = matmul(x, params.at(head_key(l, h, "Wk")));
      const Tensor v = matmul(x, params.at(head_key(l, h, "Wv")));
      const Tensor w = softmax_rows(scale(matmul_nt(q, k), inv_sqrt));
      attn = add(attn, matmul(matmul(w, v), params.at(head_key(l, h, "Wo"))));
    }
    x = add(x, attn);
    Tensor hidden = matmul(x, params.at(layer_key(l, "ff.W1")));
    const Tensor& b1 = params.at(layer_key(l, "ff.b1"));
    for (std::size_t r = 0; r < hidden.rows(); ++r)
      for (std::size_t c = 0; c < hidden.cols(); ++c) hidden(r, c) = std::tanh(hidden(r, c) + b1[c]);
    Tensor ff = matmul(hidden, params.at(layer_key(l, "ff.W2")));
    const Tensor& b2 = params.at(layer_key(l, "ff.b2"));
    for (std::size_t r = 0; r < ff.rows(); ++r)
      for (std::size_t c = 0; c < ff.cols(); ++c) x(r, c) += ff(r, c) + b2[c];
  }

  Tensor out({cfg.horizon, cfg.d_a});
  const Tensor& hw = params.at("head.W");
  const Tensor& hb = params.at("head.b");
  const double tc = std::clamp(tau, 0.0, cfg.precond_tau_cap);
  const double s = cfg.time_conditioning ? 1.0 / (1.0 - tc * tc) : 1.0;
  const double psi = cfg.time_conditioning ? tc * s : 0.0;
  for (std::size_t i = 0; i < cfg.horizon; ++i)
    for (std::size_t a = 0; a < cfg.d_a; ++a) {
      double acc = hb[a];
      for (std::size_t c = 0; c < cfg.d_model; ++c) acc += x(ctx + i, c) * hw(c, a);
      out(i, a) = s * acc - psi * A_tau(i, a);
    }
  return out;
}

std::vector<ActionSequence> split_primitives(const ActionSequence& seq, std::size_t K, std::size_t m) {
  if (K * m != seq.size()) {
    throw ContractError("cannot split " + std::to_string(seq.size()) + " steps into " +
                        std::to_string(K) + " × " + std::to_string(m));
  }
  std::vector<ActionSequence> out;
  for (std::size_t k = 0; k < K; ++k) out.emplace_back(seq.begin() + k * m, seq.begin() + (k + 1) * m);
  return out;
}

std::vector<Tensor> split_primitives(const Tensor& A, std::size_t K, std::size_t m) {
  require_rank2(A, "split_primitives");
  if (K * m != A.rows()) {
    throw ContractError("cannot split " + std::to_string(A.rows()) + " steps into " +
                        std::to_string(K) + " × " + std::to_string(m));
  }
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < K; ++k) {
    Tensor part({m, A.cols()});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < A.cols(); ++c) part(r, c) = A(k * m + r, c);
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace topoflow
