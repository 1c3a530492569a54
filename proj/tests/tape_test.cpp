// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <functional>
#include <vector>

#include "oracles.hpp"
#include "topoflow/errors.hpp"
#include "topoflow/rng.hpp"
#include "topoflow/tape.hpp"

namespace topoflow {
namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Projects the op output onto a fixed random direction so every output entry
// contributes to the scalar.
double probe_value(const Builder& build, const std::vector<Tensor>& inputs, const Tensor* dir,
                   std::vector<Tensor>* grads) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  Var out = build(tape, leaves);
  Var loss = dir ? sum(mul(out, tape.constant(*dir))) : sum(out);
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (const Var& l : leaves) grads->push_back(l.grad());
  }
  return loss.value().item();
}

void check_gradients(const Builder& build, std::vector<Tensor> inputs, Rng& rng) {
  Tensor dir;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    dir = sample_gaussian(rng, build(tape, leaves).shape());
  }
  std::vector<Tensor> grads;
  probe_value(build, inputs, &dir, &grads);
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const auto f = [&](const Tensor& x) {
        std::vector<Tensor> in = inputs;
        in[a] = x;
        return probe_value(build, in, &dir, nullptr);
      };
      const double fd = oracle::central_diff(f, inputs[a], i, 1e-5);
      const double an = grads[a].empty() ? 0.0 : grads[a][i];
      EXPECT_LE(oracle::rel_err(an, fd, 1e-6), 1e-4)
          << "operand " << a << " entry " << i << ": analytic " << an << " fd " << fd;
    }
  }
}

class TapeGradientTest : public ::testing::Test {
 protected:
  Rng rng{99};
  std::size_t dim() { return 1 + rng.below(8); }
  Tensor randn(std::size_t r, std::size_t c) { return sample_gaussian(rng, {r, c}); }
};

TEST_F(TapeGradientTest, Matmul) {
  for (int t = 0; t < 5; ++t) {
    const std::size_t r = dim(), k = dim(), c = dim();
    check_gradients([](Tape&, const auto& v) { return matmul(v[0], v[1]); }, {randn(r, k), randn(k, c)}, rng);
  }
}

TEST_F(TapeGradientTest, MatmulTransposed) {
  for (int t = 0; t < 5; ++t) {
    const std::size_t r = dim(), k = dim(), c = dim();
    check_gradients([](Tape&, const auto& v) { return matmul_nt(v[0], v[1]); }, {randn(r, k), randn(c, k)},
                    rng);
  }
}

TEST_F(TapeGradientTest, ElementwiseOps) {
  for (int t = 0; t < 5; ++t) {
    const std::size_t r = dim(), c = dim();
    check_gradients([](Tape&, const auto& v) { return add(v[0], v[1]); }, {randn(r, c), randn(r, c)}, rng);
    check_gradients([](Tape&, const auto& v) { return sub(v[0], v[1]); }, {randn(r, c), randn(r, c)}, rng);
    check_gradients([](Tape&, const auto& v) { return mul(v[0], v[1]); }, {randn(r, c), randn(r, c)}, rng);
    check_gradients([](Tape&, const auto& v) { return scale(v[0], -1.7); }, {randn(r, c)}, rng);
    check_gradients([](Tape&, const auto& v) { return tanh(v[0]); }, {randn(r, c)}, rng);
    check_gradients([](Tape&, const auto& v) { return square(v[0]); }, {randn(r, c)}, rng);
    check_gradients([](Tape&, const auto& v) { return transpose(v[0]); }, {randn(r, c)}, rng);
  }
}

TEST_F(TapeGradientTest, RowBroadcasts) {
  for (int t = 0; t < 5; ++t) {
    const std::size_t r = dim(), c = dim();
    check_gradients([](Tape&, const auto& v) { return add_row(v[0], v[1]); }, {randn(r, c), randn(1, c)}, rng);
    check_gradients([](Tape&, const auto& v) { return mul_row(v[0], v[1]); }, {randn(r, c), randn(1, c)}, rng);
  }
}

TEST_F(TapeGradientTest, SoftmaxRows) {
  for (int t = 0; t < 5; ++t) {
    check_gradients([](Tape&, const auto& v) { return softmax_rows(v[0]); }, {scale(randn(dim(), dim()), 2.0)},
                    rng);
  }
}

TEST_F(TapeGradientTest, ShapeOps) {
  const Tensor a = randn(4, 6);
  check_gradients([](Tape&, const auto& v) { return reshape(v[0], {3, 8}); }, {a}, rng);
  const std::vector<std::size_t> rows{3, 0, 3, 1};
  check_gradients([&](Tape&, const auto& v) { return gather_rows(v[0], rows); }, {a}, rng);
  check_gradients(
      [](Tape&, const auto& v) {
        const std::vector<Var> parts{v[0], v[1]};
        return concat_rows(parts);
      },
      {randn(2, 5), randn(3, 5)}, rng);
}

TEST_F(TapeGradientTest, MaskLogitsSkipsForbiddenCells) {
  const std::size_t n = 5;
  std::vector<std::uint8_t> forbidden(n * n, 0);
  forbidden[1] = forbidden[7] = forbidden[18] = 1;
  const Builder build = [&](Tape&, const std::vector<Var>& v) {
    return softmax_rows(mask_logits(v[0], v[1], forbidden));
  };
  check_gradients(build, {randn(n, n), randn(n, n)}, rng);

  Tape tape;
  Var logits = tape.leaf(randn(n, n));
  Var mask = tape.leaf(randn(n, n));
  Var w = softmax_rows(mask_logits(logits, mask, forbidden));
  for (std::size_t i = 0; i < n * n; ++i)
    if (forbidden[i]) EXPECT_EQ(w.value()[i], 0.0);
  tape.backward(sum(mul(w, tape.constant(randn(n, n)))));
  for (std::size_t i = 0; i < n * n; ++i)
    if (forbidden[i]) {
      EXPECT_EQ(logits.grad()[i], 0.0);
      EXPECT_EQ(mask.grad()[i], 0.0);
    }
}

TEST_F(TapeGradientTest, IndexExpandScattersIntoTypeMatrix) {
  const std::vector<int> rows{0, 2, -1, 2, 1};
  const std::vector<int> cols{1, -1, 2, 0, 2};
  check_gradients([&](Tape&, const auto& v) { return index_expand(v[0], rows, cols, 1.0, false); },
                  {randn(3, 3)}, rng);
  check_gradients([&](Tape&, const auto& v) { return index_expand(v[0], rows, rows, 0.5, true); },
                  {randn(3, 3)}, rng);

  Tape tape;
  Var m = tape.leaf(Tensor::matrix({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}));
  const Tensor out = index_expand(m, rows, rows, -1.0, true).value();
  EXPECT_EQ(out(0, 1), 3.0);   // m(0, 2)
  EXPECT_EQ(out(2, 0), -1.0);  // context row takes the fill
  EXPECT_EQ(out(1, 1), 1.0);   // unit diagonal
  EXPECT_EQ(out(1, 3), 9.0);   // m(2, 2) off the diagonal
}

TEST(TapeTest, SumGivesAllOnes) {
  Tape tape;
  Var x = tape.leaf(Tensor({3, 2}, 0.7));
  tape.backward(sum(x));
  EXPECT_EQ(x.grad(), Tensor({3, 2}, 1.0));
}

TEST(TapeTest, SquareAtThreeGivesSix) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0));
  tape.backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(TapeTest, NonScalarLossIsAContractError) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}, 1.0));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(TapeTest, ReusedNodeAccumulatesGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(2.0));
  Var y = add(mul(x, x), scale(x, 3.0));  // x² + 3x
  tape.backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad().item(), 7.0);
}

TEST(TapeTest, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor::scalar(2.0));
  Var x = tape.leaf(Tensor::scalar(5.0));
  tape.backward(sum(mul(c, x)));
  EXPECT_TRUE(c.grad().empty());
  EXPECT_DOUBLE_EQ(x.grad().item(), 2.0);
}

TEST(TapeTest, BackwardTwiceResetsGradients) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(1.5));
  Var loss = sum(square(x));
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad().item(), 3.0);
}

TEST(TapeTest, MixingTapesIsRejected) {
  Tape a, b;
  Var x = a.leaf(Tensor::scalar(1.0));
  Var y = b.leaf(Tensor::scalar(1.0));
  EXPECT_THROW(add(x, y), ContractError);
}

}  // namespace
}  // namespace topoflow
