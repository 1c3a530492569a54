// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "topoflow/tensor.hpp"

namespace topoflow {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning Tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a straight-line computation over a fixed vocabulary of primitive
/// ops and replays it backwards.
///
/// Nodes are appended in evaluation order, so parents always precede their
/// children and a single reverse sweep visits every node once. One Tape per
/// thread of execution; tapes are not shared.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() target; empty tensor if never reached.
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar node. Clears previous gradients first.
  void backward(Var loss);

  /// Appends a node. `requires_grad` is inherited from the parents; the
  /// backward closure is dropped when no parent needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var record(Tensor value, std::span<const Var> parents, Backward backward);

  /// Gradient buffer of a node, zero-initialized on first touch.
  Tensor& grad_slot(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Differentiable primitives. Each one evaluates eagerly and records itself.

Var matmul(Var a, Var b);
/// a · bᵀ.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// x (r×c) + row (1×c) broadcast over rows.
Var add_row(Var x, Var row);
/// x (r×c) ⊙ row (1×c) broadcast over rows.
Var mul_row(Var x, Var row);
Var tanh(Var a);
Var square(Var a);
/// Sum of all elements, shape {1}.
Var sum(Var a);
Var softmax_rows(Var x);
Var reshape(Var a, Shape shape);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var concat_rows(std::span<const Var> parts);

/// logits ⊙ mask, then cells flagged in `forbidden` (row-major, 1 = forbidden)
/// are set to -inf. Gradients do not flow through forbidden cells.
Var mask_logits(Var logits, Var mask, std::span<const std::uint8_t> forbidden);

/// Expands a type-by-type matrix to a position-by-position one:
/// out(p, q) = m(row_type[p], col_type[q]) when both types are >= 0, `fill`
/// otherwise; with `unit_diagonal`, out(p, p) = 1 regardless. Gradients
/// scatter-add back into m.
Var index_expand(Var m, std::span<const int> row_type, std::span<const int> col_type,
                 double fill, bool unit_diagonal);

}  // namespace topoflow
