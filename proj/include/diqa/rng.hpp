#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace diqa {

using Rng = std::mt19937_64;

/// Purposes that receive independent generator streams within one run.
enum class Stream : std::uint64_t {
  kInit = 1,
  kSplit = 2,
  kShuffle = 3,
  kPatches = 4,
  kDropout = 5,
  kValidation = 6,
  kEval = 7,
  kPca = 8,
};

/// Mixes a 64-bit value (SplitMix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a hash of a string, used to derive per-item seeds from identifiers.
std::uint64_t hash_string(std::string_view text);

/// Deterministic generator for one purpose of a run seeded with `seed`.
Rng make_stream(std::uint64_t seed, Stream purpose);

/// Generator keyed on (seed, purpose, item) so per-item randomness is independent of visiting order.
Rng make_item_stream(std::uint64_t seed, Stream purpose, std::string_view item);

}  // namespace diqa
