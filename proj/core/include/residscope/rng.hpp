// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

namespace residscope {

// Counter-based generator: draw i of stream (seed, stream) is a pure function
// of those three integers, so results are identical on every platform and
// independent streams can be handed out without coordination.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n); unbiased. n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (no cached second draw).
  double normal();
  double normal(double mean, double stddev);

  // Independent child stream; does not advance this generator.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace residscope
