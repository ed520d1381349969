#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace neurodecode {

// Seedable random source used for every stochastic step (synthetic data,
// initialization, shuffling, dropout).
//
// The bit source is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The conversions on top of it are defined here rather than taken
// from <random> distributions, which are implementation-specific:
//   uniform()  = (next_u64() >> 11) * 2^-53                       in [0, 1)
//   normal()   = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)               (one pair per call)
//   below(n)   = rejection sampling on next_u64() % n
//   fork(s)    = Rng(splitmix64(seed ^ splitmix64(s)))
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  std::size_t below(std::size_t n);

  // Fisher-Yates, walking from the back.
  void shuffle(std::span<std::size_t> values);

  // Independent child stream keyed by `stream`.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace neurodecode
