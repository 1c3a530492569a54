// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/checkpoint.hpp"

#include <cstring>
#include <json.hpp>

#include "topoflow/errors.hpp"
#include "topoflow/fusion_io.hpp"
#include "topoflow/io.hpp"

namespace topoflow {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'O', 'P', 'L', 'C'};

json model_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},
          {"d_a", c.d_a},
          {"horizon", c.horizon},
          {"primitives", c.primitives},
          {"primitive_len", c.primitive_len},
          {"n_cameras", c.n_cameras},
          {"grid", c.grid},
          {"task_vocab", c.task_vocab},
          {"mask_mode", std::string(to_string(c.mask_mode))},
          {"topo_mask", c.topo_mask},
          {"time_conditioning", c.time_conditioning},
          {"precond_tau_cap", c.precond_tau_cap}};
}

ModelConfig model_from(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.d_a = j.at("d_a").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.primitives = j.at("primitives").get<std::size_t>();
  c.primitive_len = j.at("primitive_len").get<std::size_t>();
  c.n_cameras = j.at("n_cameras").get<std::size_t>();
  c.grid = j.at("grid").get<std::size_t>();
  c.task_vocab = j.at("task_vocab").get<std::size_t>();
  c.mask_mode = parse_mask_mode(j.at("mask_mode").get<std::string>());
  c.topo_mask = j.at("topo_mask").get<bool>();
  c.time_conditioning = j.at("time_conditioning").get<bool>();
  c.precond_tau_cap = j.at("precond_tau_cap").get<double>();
  return c;
}

json train_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lambda1", c.lambdas.lambda1},
          {"lambda2", c.lambdas.lambda2},
          {"lambda3", c.lambdas.lambda3},
          {"tau_alpha", c.tau_alpha},
          {"tau_beta", c.tau_beta},
          {"eps_tau", c.eps_tau},
          {"eta_mask", c.eta_mask},
          {"mask_project_every", c.mask_project_every},
          {"allowed_floor", c.allowed_floor},
          {"norm_eps_pd", c.norm_eps_pd},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"probe_size", c.probe_size},
          {"learn_mask", c.learn_mask},
          {"clip_per_example", c.clip_per_example},
          {"exact_precond", c.exact_precond}};
}

TrainConfig train_from(const json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.lambdas.lambda1 = j.at("lambda1").get<double>();
  c.lambdas.lambda2 = j.at("lambda2").get<double>();
  c.lambdas.lambda3 = j.at("lambda3").get<double>();
  c.tau_alpha = j.at("tau_alpha").get<double>();
  c.tau_beta = j.at("tau_beta").get<double>();
  c.eps_tau = j.at("eps_tau").get<double>();
  c.eta_mask = j.at("eta_mask").get<double>();
  c.mask_project_every = j.at("mask_project_every").get<std::size_t>();
  c.allowed_floor = j.at("allowed_floor").get<double>();
  c.norm_eps_pd = j.at("norm_eps_pd").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.probe_size = j.at("probe_size").get<std::size_t>();
  c.learn_mask = j.at("learn_mask").get<bool>();
  c.clip_per_example = j.at("clip_per_example").get<bool>();
  c.exact_precond = j.at("exact_precond").get<bool>();
  return c;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_array(std::string& out, const std::string& name, const Tensor& t) {
  put<std::uint64_t>(out, name.size());
  out += name;
  put<std::uint64_t>(out, t.rank());
  for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
  for (double v : t.data()) put<double>(out, v);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string text(std::uint64_t n) {
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) {
      throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string model_config_json(const ModelConfig& cfg) { return model_json(cfg).dump(); }

ModelConfig model_config_from_json(std::string_view text) {
  try {
    return model_from(json::parse(text));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
}

std::string train_config_json(const TrainConfig& cfg) { return train_json(cfg).dump(); }

TrainConfig train_config_from_json(std::string_view text) {
  try {
    return train_from(json::parse(text));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  json header{{"model", model_json(ck.model)},
              {"train", train_json(ck.train)},
              {"variant", ck.variant},
              {"mask", {{"mode", std::string(to_string(ck.mask.mode))}, {"tol", ck.mask.tol_consistency}}},
              {"fusion", ck.fusion ? json(format_fusion_spec(*ck.fusion)) : json(nullptr)},
              {"run_config", json::parse(ck.run_config.empty() ? "{}" : ck.run_config)}};
  const std::string h = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  put<std::uint64_t>(out, ck.params.tensors.size() + 2);
  for (const auto& [name, t] : ck.params.tensors) put_array(out, "param/" + name, t);
  put_array(out, "mask/M", ck.mask.M);
  put_array(out, "mask/hard_zero", ck.mask.hard_zero);
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.text(4) != std::string_view(kMagic, 4)) throw ParseError("not a topoflow checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  Checkpoint ck;
  try {
    const json header = json::parse(r.text(r.get<std::uint64_t>()));
    ck.model = model_from(header.at("model"));
    ck.train = train_from(header.at("train"));
    ck.variant = header.at("variant").get<std::string>();
    ck.mask.mode = parse_mask_mode(header.at("mask").at("mode").get<std::string>());
    ck.mask.tol_consistency = header.at("mask").at("tol").get<double>();
    if (!header.at("fusion").is_null()) {
      ck.fusion.emplace(load_fusion_system(header.at("fusion").get<std::string>()));
    }
    ck.run_config = header.at("run_config").dump();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }

  const auto n_arrays = r.get<std::uint64_t>();
  bool have_m = false, have_hz = false;
  for (std::uint64_t a = 0; a < n_arrays; ++a) {
    const std::string name = r.text(r.get<std::uint64_t>());
    const auto rank = r.get<std::uint64_t>();
    if (rank > 8) throw ParseError("array '" + name + "' has implausible rank");
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      shape.push_back(r.get<std::uint64_t>());
      count *= shape.back();
    }
    if (count > bytes.size()) throw ParseError("array '" + name + "' larger than the file");
    std::vector<double> data(count);
    for (double& v : data) v = r.get<double>();
    Tensor t(shape, std::move(data));
    if (name.rfind("param/", 0) == 0) {
      ck.params.tensors.emplace(name.substr(6), std::move(t));
    } else if (name == "mask/M") {
      ck.mask.M = std::move(t);
      have_m = true;
    } else if (name == "mask/hard_zero") {
      ck.mask.hard_zero = std::move(t);
      have_hz = true;
    } else {
      throw ParseError("unknown checkpoint array '" + name + "'");
    }
  }
  if (!have_m || !have_hz) throw ParseError("checkpoint has no mask arrays");
  if (!r.done()) throw ParseError("trailing bytes after checkpoint arrays");
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  write_file_atomic(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace topoflow
