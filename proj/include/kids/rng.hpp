#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace kids {

// Deterministic random source: xoshiro256** seeded through splitmix64.
// Fixed algorithm, fixed constants, no platform-default generators, so one
// seed yields one draw sequence everywhere. Gaussians use the Marsaglia
// polar method (log/sqrt only, no trig).
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    seed_ = seed;
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
    have_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, bound) via rejection.
  std::uint64_t uniform_u64(std::uint64_t bound) {
    if (bound == 0) return 0;
    const std::uint64_t threshold = (~bound + 1) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal draw.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    have_spare_ = true;
    return u * factor;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle.
  template <typename V>
  void shuffle(V& values) {
    if (values.size() < 2) return;
    for (std::size_t i = values.size() - 1; i > 0; --i) {
      const std::size_t j =
          static_cast<std::size_t>(uniform_u64(static_cast<std::uint64_t>(i) + 1));
      std::swap(values[i], values[j]);
    }
  }

  /// Stable seed derivation for independent child streams (grid cells,
  /// per-sample attribution runs, dropout vs shuffle streams).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t x = seed;
    std::uint64_t h = splitmix64(x);
    x ^= a + 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(x);
    x ^= b + 0xbf58476d1ce4e5b9ULL;
    h ^= splitmix64(x);
    x ^= c + 0x94d049bb133111ebULL;
    h ^= splitmix64(x);
    return h;
  }

  SeededRng fork(std::uint64_t tag) const {
    return SeededRng(derive(seed_, tag));
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_ = 0;
  std::uint64_t state_[4] = {0, 0, 0, 0};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace kids
