#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cfl {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stream tags used when fanning a master seed out to components.
enum class SeedStream : std::uint64_t {
  kPartition = 1,
  kModelInit = 2,
  kDelay = 3,
  kAttacker = 4,
  kTraining = 5,
  kSynthetic = 6,
  kHoldout = 7,
  kFit = 8,
};

/// Derives an independent seed from a base seed and a path of integers.
///
/// The derivation folds each component through SplitMix64:
///   h0 = splitmix64(base); h_{i+1} = splitmix64(h_i ^ (c_i * golden)).
/// It is stable across platforms and independent of call order, so e.g. the
/// training stream of (seed, client 7, round 3) never depends on how many
/// other clients trained before it.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t c : path) h = splitmix64(h ^ (c * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t base, SeedStream stream,
                                    std::initializer_list<std::uint64_t> path = {}) noexcept {
  std::uint64_t h = derive_seed(base, {static_cast<std::uint64_t>(stream)});
  for (std::uint64_t c : path) h = splitmix64(h ^ (c * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
  return h;
}

using Rng = std::mt19937_64;

}  // namespace cfl
