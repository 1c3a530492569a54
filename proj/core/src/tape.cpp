// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "topoflow/tape.hpp"

#include <cmath>
#include <limits>

#include "topoflow/errors.hpp"

namespace topoflow {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw ContractError("operands recorded on different tapes");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, needs ? std::move(backward) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss recorded on another tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(nodes_[loss.id()].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor{};
  grad_slot(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }
}

namespace {

// Accumulates g into the gradient of v when v participates in differentiation.
void accumulate(Tape& t, Var v, const Tensor& g) {
  if (!t.requires_grad(v.id())) return;
  Tensor& slot = t.grad_slot(v.id());
  auto s = slot.data();
  auto d = g.data();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += d[i];
}

bool wants(Tape& t, Var v) { return t.requires_grad(v.id()); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = a.tape();
  return t.record(matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (wants(t, a)) accumulate(t, a, matmul_nt(g, b.value()));
    if (wants(t, b)) accumulate(t, b, matmul_tn(a.value(), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = a.tape();
  return t.record(matmul_nt(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (wants(t, a)) accumulate(t, a, matmul(g, b.value()));
    if (wants(t, b)) accumulate(t, b, matmul_tn(g, a.value()));
  });
}

Var transpose(Var a) {
  Tape& t = a.tape();
  return t.record(transpose(a.value()), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, transpose(t.grad(self)));
  });
}

Var add(Var a, Var b) {
  Tape& t = a.tape();
  return t.record(add(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self));
    accumulate(t, b, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = a.tape();
  return t.record(sub(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self));
    if (wants(t, b)) accumulate(t, b, scale(t.grad(self), -1.0));
  });
}

Var mul(Var a, Var b) {
  Tape& t = a.tape();
  return t.record(hadamard(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (wants(t, a)) accumulate(t, a, hadamard(g, b.value()));
    if (wants(t, b)) accumulate(t, b, hadamard(g, a.value()));
  });
}

Var scale(Var a, double s) {
  Tape& t = a.tape();
  return t.record(scale(a.value(), s), {a}, [a, s](Tape& t, std::size_t self) {
    accumulate(t, a, scale(t.grad(self), s));
  });
}

namespace {

void require_row_broadcast(const Tensor& x, const Tensor& row, const char* op) {
  require_rank2(x, op);
  if (row.rank() != 2 || row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(row.shape()) +
                         " over " + shape_string(x.shape()));
  }
}

}  // namespace

Var add_row(Var x, Var row) {
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  require_row_broadcast(xv, rv, "add_row");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv(0, j);
  Tape& t = x.tape();
  return t.record(std::move(out), {x, row}, [x, row](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, x, g);
    if (wants(t, row)) {
      Tensor r({1, g.cols()});
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) r(0, j) += g(i, j);
      accumulate(t, row, r);
    }
  });
}

Var mul_row(Var x, Var row) {
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  require_row_broadcast(xv, rv, "mul_row");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= rv(0, j);
  Tape& t = x.tape();
  return t.record(std::move(out), {x, row}, [x, row](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = x.value();
    const Tensor& rv = row.value();
    if (wants(t, x)) {
      Tensor gx(g.shape());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = g(i, j) * rv(0, j);
      accumulate(t, x, gx);
    }
    if (wants(t, row)) {
      Tensor gr({1, g.cols()});
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j) * xv(i, j);
      accumulate(t, row, gr);
    }
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  Tape& t = a.tape();
  return t.record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    Tensor g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
    accumulate(t, a, g);
  });
}

Var square(Var a) {
  Tape& t = a.tape();
  return t.record(hadamard(a.value(), a.value()), {a}, [a](Tape& t, std::size_t self) {
    Tensor g = hadamard(t.grad(self), a.value());
    accumulate(t, a, scale(g, 2.0));
  });
}

Var sum(Var a) {
  Tape& t = a.tape();
  return t.record(Tensor::scalar(sum(a.value())), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, Tensor(a.value().shape(), t.grad(self)[0]));
  });
}

Var softmax_rows(Var x) {
  Tape& t = x.tape();
  return t.record(softmax_rows(x.value()), {x}, [x](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor gx(y.shape());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) d += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = y(i, j) * (g(i, j) - d);
    }
    accumulate(t, x, gx);
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = a.tape();
  return t.record(a.value().reshaped(std::move(shape)), {a}, [a](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(self).reshaped(a.value().shape()));
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  require_rank2(av, "gather_rows");
  Tensor out({rows.size(), av.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                           shape_string(av.shape()));
    }
    auto src = av.row_span(rows[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tape& t = a.tape();
  return t.record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor ga(a.value().shape());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(idx[i], j) += g(i, j);
    accumulate(t, a, ga);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  const std::size_t c = parts.front().value().cols();
  std::size_t r = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(p.value().shape()) +
                           " vs width " + std::to_string(c));
    }
    r += p.value().rows();
  }
  Tensor out({r, c});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset * c));
    offset += p.value().rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  Tape& t = parts.front().tape();
  return t.record(std::move(out), parts, [ps](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (const Var& p : ps) {
      const std::size_t rows = p.value().rows();
      if (t.requires_grad(p.id())) {
        Tensor gp(p.value().shape());
        std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(offset * g.cols()), gp.size(),
                    gp.data().begin());
        accumulate(t, p, gp);
      }
      offset += rows;
    }
  });
}

Var mask_logits(Var logits, Var mask, std::span<const std::uint8_t> forbidden) {
  const Tensor& lv = logits.value();
  const Tensor& mv = mask.value();
  require_same_shape(lv, mv, "mask_logits");
  if (forbidden.size() != lv.size()) {
    throw DimensionError("mask_logits: forbidden pattern has " + std::to_string(forbidden.size()) +
                         " cells, logits " + shape_string(lv.shape()));
  }
  Tensor out(lv.shape());
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forbidden[i] ? neg_inf : lv[i] * mv[i];
  std::vector<std::uint8_t> f(forbidden.begin(), forbidden.end());
  Tape& t = logits.tape();
  return t.record(std::move(out), {logits, mask},
                  [logits, mask, f = std::move(f)](Tape& t, std::size_t self) {
                    const Tensor& g = t.grad(self);
                    const Tensor& lv = logits.value();
                    const Tensor& mv = mask.value();
                    if (wants(t, logits)) {
                      Tensor gl(lv.shape());
                      for (std::size_t i = 0; i < gl.size(); ++i)
                        gl[i] = f[i] ? 0.0 : g[i] * mv[i];
                      accumulate(t, logits, gl);
                    }
                    if (wants(t, mask)) {
                      Tensor gm(mv.shape());
                      for (std::size_t i = 0; i < gm.size(); ++i)
                        gm[i] = f[i] ? 0.0 : g[i] * lv[i];
                      accumulate(t, mask, gm);
                    }
                  });
}

Var index_expand(Var m, std::span<const int> row_type, std::span<const int> col_type,
                 double fill, bool unit_diagonal) {
  const Tensor& mv = m.value();
  require_rank2(mv, "index_expand");
  const std::size_t r = row_type.size(), c = col_type.size();
  Tensor out({r, c});
  for (std::size_t p = 0; p < r; ++p) {
    for (std::size_t q = 0; q < c; ++q) {
      if (unit_diagonal && p == q) {
        out(p, q) = 1.0;
      } else if (row_type[p] >= 0 && col_type[q] >= 0) {
        const auto a = static_cast<std::size_t>(row_type[p]);
        const auto b = static_cast<std::size_t>(col_type[q]);
        if (a >= mv.rows() || b >= mv.cols()) {
          throw DimensionError("index_expand: type index out of range for " +
                               shape_string(mv.shape()));
        }
        out(p, q) = mv(a, b);
      } else {
        out(p, q) = fill;
      }
    }
  }
  std::vector<int> rt(row_type.begin(), row_type.end());
  std::vector<int> ct(col_type.begin(), col_type.end());
  Tape& t = m.tape();
  return t.record(std::move(out), {m},
                  [m, rt = std::move(rt), ct = std::move(ct), unit_diagonal](Tape& t,
                                                                            std::size_t self) {
                    const Tensor& g = t.grad(self);
                    Tensor gm(m.value().shape());
                    for (std::size_t p = 0; p < rt.size(); ++p) {
                      for (std::size_t q = 0; q < ct.size(); ++q) {
                        if (unit_diagonal && p == q) continue;
                        if (rt[p] < 0 || ct[q] < 0) continue;
                        gm(static_cast<std::size_t>(rt[p]), static_cast<std::size_t>(ct[q])) +=
                            g(p, q);
                      }
                    }
                    accumulate(t, m, gm);
                  });
}

}  // namespace topoflow
