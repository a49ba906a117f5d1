#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace oddmap {

/// Seeded 64-bit generator whose output sequence is identical on every
/// platform. Standard distributions are implementation-defined, so the
/// bounded draws below are implemented directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Derives an independent stream from a tuple of integers (seed, stream ids...).
  Rng(std::initializer_list<std::uint64_t> keys);

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, bound). `bound` must be positive.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace oddmap
