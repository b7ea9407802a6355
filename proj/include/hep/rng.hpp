#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace hep {

// splitmix64 finalizer: bijective 64-bit mixer.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Counter-based generator. Every draw is a pure function of
// (seed, stream ids, counter), so values do not depend on how many draws
// happened before, and generation order is irrelevant.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : key_(mix64(seed)) {}

  CounterRng stream(uint64_t id) const {
    CounterRng r = *this;
    r.key_ = mix64(r.key_ ^ mix64(id));
    return r;
  }

  CounterRng stream(std::string_view name) const { return stream(fnv1a64(name)); }

  uint64_t bits(uint64_t counter) const { return mix64(key_ ^ mix64(counter ^ 0x5851f42d4c957f2dull)); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform(uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  // Uniform integer in [0, n).
  uint64_t index(uint64_t counter, uint64_t n) const {
    uint64_t v = static_cast<uint64_t>(uniform(counter) * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  // Standard normal via Box-Muller; one counter yields one deviate.
  double normal(uint64_t counter) const {
    double u1 = static_cast<double>(bits(counter * 2) >> 11) * 0x1.0p-53;
    double u2 = static_cast<double>(bits(counter * 2 + 1) >> 11) * 0x1.0p-53;
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  uint64_t key() const { return key_; }

 private:
  uint64_t key_;
};

}  // namespace hep
