#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace gbu {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// 64-bit FNV-1a. Stable across platforms, used for config and checkpoint ids.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

}  // namespace gbu
