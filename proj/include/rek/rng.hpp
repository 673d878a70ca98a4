#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rek {

using Rng = std::mt19937_64;

/// Stable 64-bit FNV-1a of a stream name. std::hash is not stable across
/// standard libraries, and substream seeds end up in reproducibility manifests.
constexpr std::uint64_t stream_tag(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Generator for a named substream of a global seed, optionally indexed
/// (e.g. per receiver) so parallel and serial evaluation draw identical values.
inline Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
    const std::uint64_t tag = stream_tag(name);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

/// Uniform draw on [0, 1) built from the raw 53 high bits, independent of the
/// standard library's distribution implementation.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace rek
