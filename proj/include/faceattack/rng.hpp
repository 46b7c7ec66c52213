#pragma once

#include <cstdint>
#include <random>

namespace faceattack {

/// Seeded random source with a fully specified output sequence.
///
/// The engine is std::mt19937_64, whose output is fixed by the C++ standard.
/// The distribution helpers below are written out explicitly instead of using
/// <random>'s distributions, whose algorithms are implementation-defined, so
/// that a given seed reproduces bit-identical attacks on every platform.
///
///  - uniform_int(lo, hi): draws 64-bit words until one falls at or above
///    2^64 mod n (n = hi - lo + 1), then returns lo + word mod n. Every call
///    consumes at least one word, including n == 1.
///  - uniform_real(): top 53 bits of one word scaled into [0, 1).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  double uniform_real();
  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace faceattack
