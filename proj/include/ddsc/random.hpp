#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ddsc {

using Rng = std::mt19937_64;

// Independent stream per (seed, stream) pair. Never draws from global state.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

// Uniform integer in [0, n) by rejection; identical across standard libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

// Uniform real in [0, 1) from the top 53 bits.
inline double uniform_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

// First k entries of a seeded permutation of [0, n).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k && i < n; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k < n ? k : n);
  return idx;
}

}  // namespace ddsc
