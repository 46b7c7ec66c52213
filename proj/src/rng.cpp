#include "faceattack/rng.hpp"

#include "faceattack/errors.hpp"

namespace faceattack {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) {
    throw InvalidArgument("uniform_int: empty range");
  }
  const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  if (span == 0) {  // full 64-bit range
    return static_cast<std::int64_t>(engine_());
  }
  const std::uint64_t threshold = (0 - span) % span;
  for (;;) {
    const std::uint64_t word = engine_();
    if (word >= threshold) {
      return static_cast<std::int64_t>(static_cast<std::uint64_t>(lo) + word % span);
    }
  }
}

double Rng::uniform_real() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

}  // namespace faceattack
