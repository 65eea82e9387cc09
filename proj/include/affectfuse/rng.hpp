// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace affectfuse {

// FNV-1a over bytes. Also used for config hashing.
uint64_t fnv1a64(std::string_view s, uint64_t h = 14695981039346656037ull);

// splitmix64 finalizer; decorrelates structured inputs.
uint64_t mix64(uint64_t x);

// Every random stream in the project is derived from one root seed plus a
// purpose label and optional integer qualifiers, so streams never alias and
// results do not depend on thread count or evaluation order.
uint64_t derive_seed(uint64_t root, std::string_view label);
uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a);
uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a, uint64_t b);

// Deterministic generator with hand-rolled draw algorithms. std:: engines are
// portable but std:: distributions are not; the draws below are fixed here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t u64() { return eng_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; two uniforms per draw, no cached spare.
  double normal();

  // Uniform integer on [0, n), n >= 1. Rejection-free scaling is fine here:
  // n is always tiny relative to 2^53.
  int uniform_int(int n);

 private:
  std::mt19937_64 eng_;
};

}  // namespace affectfuse
