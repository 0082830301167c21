#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace splitdiag::rng {

/// Engine used for every seeded operation. mt19937_64 output is fixed by the
/// standard, so results are portable across standard libraries as long as we
/// avoid the implementation-defined distribution classes.
using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of simulation `index` under `master_seed`. Independent of how
/// simulations are scheduled across workers.
inline std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
  return splitmix64(master_seed ^ splitmix64(index + 1));
}

/// Uniform integer in [0, range). Rejection sampling keeps it unbiased.
inline std::uint64_t bounded(Engine& engine, std::uint64_t range) {
  const std::uint64_t threshold = (0 - range) % range;
  for (;;) {
    const std::uint64_t r = engine();
    if (r >= threshold) return r % range;
  }
}

/// Partial Fisher-Yates: after the call the first `count` entries are a
/// uniformly random ordered sample without replacement.
template <typename T>
void partial_shuffle(std::span<T> values, std::size_t count, Engine& engine) {
  const std::size_t n = values.size();
  for (std::size_t i = 0; i < count && i + 1 < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(bounded(engine, n - i));
    using std::swap;
    swap(values[i], values[j]);
  }
}

}  // namespace splitdiag::rng
