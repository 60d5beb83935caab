#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace hclrec {

/// SplitMix64 finalizer; used to derive independent sub-stream seeds.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic random stream. All sampling is done with integer arithmetic
/// on top of mt19937_64 so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : seed_(seed), engine_(mix64(seed)) {}

  uint64_t seed() const { return seed_; }

  /// Child stream keyed by `keys`; never touches this stream's state.
  Rng fork(std::initializer_list<uint64_t> keys) const {
    uint64_t s = mix64(seed_ ^ 0x5851f42d4c957f2dULL);
    for (uint64_t k : keys) s = mix64(s ^ mix64(k + 0x632be59bd9b4e019ULL));
    return Rng(s);
  }

  uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  uint64_t index(uint64_t n) {
    const uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform real in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal (Box-Muller, one value per call).
  double normal();

  /// Truncated normal in [-2 std, 2 std].
  double truncated_normal(double std);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (size_t i = values.size(); i > 1; --i) {
      const size_t j = index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace hclrec
