#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace citecrit {

/// 64-bit FNV-1a. Stable across platforms; used for embedding buckets.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace citecrit
