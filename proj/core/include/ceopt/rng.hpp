#pragma once

#include <cstdint>
#include <random>

namespace ceopt {

using Rng = std::mt19937_64;

// splitmix64 finalizer, used to derive independent seeds from a base seed
// plus stream identifiers. Streams derived from distinct id tuples do not
// collide in practice, which keeps replicates, fantasy draws and candidate
// evaluations on separate deterministic streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base) { return mix_seed(base); }

template <typename... Ids>
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t id, Ids... rest) {
  return derive_seed(mix_seed(base ^ mix_seed(id)), rest...);
}

template <typename... Ids>
Rng make_rng(std::uint64_t base, Ids... ids) {
  return Rng(derive_seed(base, static_cast<std::uint64_t>(ids)...));
}

inline double draw_normal(Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline double draw_uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

inline std::size_t draw_index(Rng& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> d(0, n - 1);
  return d(rng);
}

}  // namespace ceopt
