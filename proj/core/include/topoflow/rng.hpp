// Copyright 2026 The topoflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "topoflow/tensor.hpp"

namespace topoflow {

/// Seedable, platform-independent random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Every derived distribution is implemented here rather than taken
/// from <random>, because the standard distributions are implementation
/// defined:
///   - uniform: top 53 bits of one engine draw, scaled to [0, 1)
///   - normal: Marsaglia polar method, second variate cached
///   - gamma: Marsaglia–Tsang squeeze (shape < 1 boosted by U^(1/shape))
///   - beta: X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b)
///   - below(n): rejection sampling on the engine output
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  /// Independent stream for a worker or episode: seeded with seed ^ index.
  Rng stream(std::uint64_t index) const { return Rng(seed_ ^ index); }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double gamma(double shape);
  double beta(double a, double b);
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Tensor of i.i.d. standard normal draws (polar method, see Rng).
Tensor sample_gaussian(Rng& rng, const Shape& shape);

}  // namespace topoflow
