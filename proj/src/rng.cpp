#include "oddmap/rng.hpp"

namespace oddmap {
namespace {

std::uint64_t finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Each key passes through the bijective finalizer before the next is folded
// in; a plain xor/add chain lets (s, r) and (s + 1, r ^ 1) collide.
std::uint64_t mix_keys(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x6A09E667F3BCC908ULL;
  for (auto k : keys) h = finalize((h ^ k) + 0x9E3779B97F4A7C15ULL);
  return h;
}

}  // namespace

Rng::Rng(std::initializer_list<std::uint64_t> keys) : engine_(mix_keys(keys)) {}

std::uint64_t Rng::below(std::uint64_t bound) {
  // Rejection sampling on the top of the range keeps draws unbiased.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

}  // namespace oddmap
