#pragma once

#include <cstdint>
#include <random>

namespace fedmuon {

using Rng = std::mt19937_64;

/// Independent stream identifiers. Each consumer of randomness derives its own
/// generator so that, e.g., changing the round count never perturbs the data.
enum class Stream : std::uint64_t {
  kData = 1,
  kPartition = 2,
  kSampling = 3,
  kGradient = 4,
  kInit = 5,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, Stream stream, std::uint64_t a = 0,
                                    std::uint64_t b = 0) noexcept {
  std::uint64_t s = mix64(base ^ mix64(static_cast<std::uint64_t>(stream)));
  s = mix64(s ^ mix64(a + 0x51ed2701ULL));
  return mix64(s ^ mix64(b + 0x2545f491ULL));
}

inline Rng make_rng(std::uint64_t base, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(base, stream, a, b));
}

}  // namespace fedmuon
