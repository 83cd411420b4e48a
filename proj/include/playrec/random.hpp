#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

namespace playrec {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a, stable across platforms and runs (unlike std::hash).
constexpr std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for the stream identified by (global seed, module name, key).
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view module,
                                    std::uint64_t key = 0) {
  return mix64(mix64(seed ^ stable_hash(module)) ^ mix64(key + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::string_view module, std::uint64_t key = 0) {
  return Rng(stream_seed(seed, module, key));
}

/// Uniform double in [0, 1) with 53 random bits; identical on every platform.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Rejection sampling, platform independent.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Thread count from the PLAYREC_THREADS environment variable, or 1.
std::size_t default_threads();

/// Runs body(begin, end) over contiguous chunks of [0, n) on up to `threads`
/// threads. Chunk boundaries depend only on n and threads.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace playrec
