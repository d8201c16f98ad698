#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace memoria {

// 64-bit FNV-1a. Stable across platforms; used for feature hashing, prompt
// digests and persistence checksums.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

std::string base64_encode(std::string_view data);

}  // namespace memoria
