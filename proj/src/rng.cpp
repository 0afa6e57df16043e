#include "diqa/rng.hpp"

namespace diqa {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng make_stream(std::uint64_t seed, Stream purpose) {
  return Rng(mix64(mix64(seed) ^ static_cast<std::uint64_t>(purpose)));
}

Rng make_item_stream(std::uint64_t seed, Stream purpose, std::string_view item) {
  return Rng(mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(purpose)) ^ hash_string(item)));
}

}  // namespace diqa
