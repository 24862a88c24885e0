#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace biasgrid {

constexpr std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Per-sample RNG seed that depends only on (run seed, prompt, index), so
// samples come out the same regardless of scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view salt, std::uint64_t index) {
  return splitmix64(splitmix64(base ^ fnv1a64(salt)) + index);
}

std::string hex64(std::uint64_t v);

}  // namespace biasgrid
