#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace hafrm {

// 64-bit FNV-1a; stable across platforms, used for config hashes and the
// seeded random scorer.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string hex64(std::uint64_t v);

// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

}  // namespace hafrm
