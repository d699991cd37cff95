#pragma once

#include <string_view>

namespace balsel {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Bumped whenever an on-disk schema changes.
inline constexpr int kFormatVersion = 1;

}  // namespace balsel
