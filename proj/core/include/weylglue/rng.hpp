#pragma once

#include <cmath>
#include <cstdint>

namespace weylglue {

// Counter-based random stream: every draw is a pure function of
// (seed, stream, counter), so parallel consumers get identical numbers
// under any scheduling.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  double uniform(std::uint64_t counter) const {
    return static_cast<double>(hash(counter) >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; draw index i uses counters (2i, 2i+1).
  double normal(std::uint64_t i) const {
    double u1 = uniform(2 * i);
    double u2 = uniform(2 * i + 1);
    if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  CounterRng substream(std::uint64_t stream) const {
    return CounterRng(seed_, stream);
  }

 private:
  std::uint64_t hash(std::uint64_t counter) const {
    std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (stream_ + 1) + counter;
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    z += 0x9e3779b97f4a7c15ULL;
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace weylglue
