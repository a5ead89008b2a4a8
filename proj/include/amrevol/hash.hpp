#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace amrevol {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// FNV-1a, 64-bit, over the raw bytes of `data`.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t seed = kFnvOffsetBasis) noexcept {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

/// Stable identifier derived from content parts joined by the unit separator.
inline std::string content_id(std::string_view prefix, std::initializer_list<std::string_view> parts) {
  std::uint64_t h = kFnvOffsetBasis;
  bool first = true;
  for (auto part : parts) {
    if (!first) h = fnv1a64("\x1f", h);
    h = fnv1a64(part, h);
    first = false;
  }
  return std::string(prefix) + to_hex(h);
}

}  // namespace amrevol
