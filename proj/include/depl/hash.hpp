#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace depl {

// 64-bit FNV-1a. Used for config, layout and content hashes in result files.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

constexpr std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                              std::uint64_t h = kFnvOffset) noexcept {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) noexcept {
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()), h);
}

std::string hex64(std::uint64_t v);

}  // namespace depl
