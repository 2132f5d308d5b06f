// Copyright 2026 The IOLM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace iolm {

// Deterministic seeded generator: xoshiro256** with splitmix64 state
// expansion. The u64 stream is identical for a given seed on every platform;
// float conversions use exact dyadic scaling so they are identical too.
// No global RNG exists anywhere in the project — every stochastic operation
// takes an Rng (or a seed) explicitly.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // [0,1) with 53 / 24 bits of mantissa.
  double next_double();
  float next_float();
  // Uniform in [0, n), rejection sampled (unbiased). n must be > 0.
  uint64_t next_below(uint64_t n);
  // Standard normal via Box-Muller; generates pairs, caches the second.
  double next_normal();
  // Derived generator for an independent substream. Forking with the same
  // tag from the same state yields the same substream.
  Rng fork(uint64_t tag);

 private:
  uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace iolm
