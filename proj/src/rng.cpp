// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/rng.hpp"

#include <cmath>
#include <numbers>

#include "affectfuse/error.hpp"

namespace affectfuse {

uint64_t fnv1a64(std::string_view s, uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t root, std::string_view label) {
  return mix64(root ^ fnv1a64(label));
}

uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a) {
  return mix64(derive_seed(root, label) ^ mix64(a));
}

uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t a, uint64_t b) {
  return mix64(derive_seed(root, label, a) ^ mix64(mix64(b)));
}

double Rng::normal() {
  // u1 on (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int n) {
  if (n < 1) throw ContractError("uniform_int: n must be >= 1");
  int v = static_cast<int>(uniform() * static_cast<double>(n));
  return v < n ? v : n - 1;
}

}  // namespace affectfuse
