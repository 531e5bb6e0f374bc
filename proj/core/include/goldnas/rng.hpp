#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace goldnas {

/// Named sub-generator of a run seed. Each component draws from its own
/// stream ("data", "init", "sampler", "train", "augment", ...) so changing how
/// much one component consumes never shifts another.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = seed ^ h;  // splitmix64 finalizer
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name) {
  return std::mt19937_64(stream_seed(seed, name));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return std::mt19937_64(stream_seed(seed, std::string(name) + "#" + std::to_string(index)));
}

/// Uniform integer in [0, n) by rejection; std::uniform_int_distribution is
/// implementation-defined, which would break cross-toolchain reproducibility.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace goldnas
