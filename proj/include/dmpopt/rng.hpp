#pragma once

#include <cstdint>
#include <random>

namespace dmpopt {

// SplitMix64 finalizer; a bijective 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Top 53 bits to [0, 1).
constexpr double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

/*
  Counter-based uniform stream. A draw is a pure function of
  (seed, replica, t, slot), so two simulations that consult the same slot at
  the same time see the same number regardless of call order or thread.
  This is what gives common random numbers across mitigation policies.
*/
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t replica)
      : key_(mix64(mix64(seed) ^ (replica * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL))) {}

  double uniform(std::uint64_t t, std::uint64_t slot) const {
    return to_unit(mix64(key_ ^ mix64(t * 0x9e3779b97f4a7c15ULL + mix64(slot))));
  }

 private:
  std::uint64_t key_;
};

// Sequential stream for generators (trees, random graphs, random allocations).
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed) : engine_(mix64(seed)) {}

  double uniform() { return to_unit(engine_()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection to avoid modulo bias.
    const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dmpopt
