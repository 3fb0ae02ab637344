#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace searchrag {

// ---------------------------------------------------------------------------
// Deterministic hashing / seed derivation.
//
// std::hash is implementation-defined, so everything that feeds mock
// rotations or cache keys goes through these fixed-constant routines.
// ---------------------------------------------------------------------------

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL));
}

/// Root seed for one question. Per-sample seeds are consecutive
/// (question_seed + sample_index) so a mock rotation of length m is covered
/// exactly once by m samples; hash-selected rotations re-mix on their side.
constexpr std::uint64_t question_seed(std::uint64_t run_seed, std::string_view question_id) {
    return splitmix64(splitmix64(run_seed) ^ fnv1a64(question_id));
}

// ---------------------------------------------------------------------------
// String helpers.
// ---------------------------------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercase + collapse whitespace runs to single spaces + trim.
std::string normalize_query(std::string_view s);

/// Hex-encoded SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

/// True if `c` begins a UTF-8 continuation byte (10xxxxxx).
constexpr bool is_utf8_continuation(unsigned char c) {
    return (c & 0xC0) == 0x80;
}

}  // namespace searchrag
