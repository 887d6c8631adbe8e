// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/rng.hpp"

#include <cmath>
#include <numbers>

#include "residscope/errors.hpp"

namespace residscope {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), key_(mix64(seed) ^ mix64(stream * 0xd1b54a32d192ed03ULL + 1)) {}

std::uint64_t Rng::next_u64() {
  // Two rounds over (key, counter) keep nearby counters decorrelated.
  const std::uint64_t c = counter_++;
  return mix64(mix64(c ^ key_) + key_);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("Rng::below: empty range");
  // Rejection on the top of the range.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

Rng Rng::fork(std::uint64_t stream) const {
  Rng child(seed_, 0);
  child.key_ = mix64(key_ ^ mix64(stream + 0x632be59bd9b4e019ULL));
  return child;
}

}  // namespace residscope
