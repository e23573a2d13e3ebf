#pragma once

#include <cstdint>
#include <random>
#include <vector>

// Deterministic RNG helpers. std::mt19937_64 output is specified bit-exactly
// by the standard, but the distributions are not, so all draws go through the
// helpers below to keep runs byte-identical across platforms.

namespace worldcloner {

using Rng = std::mt19937_64;

// Stream-splitting hash (splitmix64 finalizer) so each component of an
// experiment gets an independent deterministic seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(derive_seed(seed, stream));
}

// Uniform in [0, 1).
inline double next_double(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform in [0, n). Rejection sampling, no modulo bias.
inline std::uint64_t next_below(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n) - 1;
  std::uint64_t x = rng();
  while (x > limit) x = rng();
  return x % n;
}

// First k elements of a Fisher-Yates pass over [0, n): a uniform sample
// without replacement, in draw order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (k > n) k = n;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(next_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace worldcloner
