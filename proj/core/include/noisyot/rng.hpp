#pragma once

// Random streams. Every stream is a std::mt19937_64 whose seed is passed
// through the SplitMix64 finalizer; replication i of an experiment with
// master seed s uses substream_seed(s, ...) so that results never depend on
// which thread ran the replication.

#include <cstdint>
#include <random>

namespace noisyot {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix64(mix64(master) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t substream_seed(std::uint64_t master, std::uint64_t a,
                                       std::uint64_t b) noexcept {
  return substream_seed(substream_seed(master, a), b);
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  /// Uniform double in [0, 1) with 53 random bits. Unlike
  /// std::uniform_real_distribution this is identical across standard libraries.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next() { return engine_(); }

private:
  std::mt19937_64 engine_;
};

}  // namespace noisyot
