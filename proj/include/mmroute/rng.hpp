#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mmroute {

// All stochastic code draws from this engine so runs are reproducible from a
// single 64-bit seed.
using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return derive_seed(seed, hash_tag(tag));
}

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                    Rest... rest) {
  return derive_seed(derive_seed(seed, a), b, static_cast<std::uint64_t>(rest)...);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform in the open interval (0, 1) from a counter-derived 64-bit word.
// Lets per-sample draws be independent of iteration order.
inline double counter_uniform(std::uint64_t key) {
  const std::uint64_t bits = mix64(key) >> 11;  // 53 bits
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace mmroute
