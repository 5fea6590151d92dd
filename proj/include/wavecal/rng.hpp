#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wavecal {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

// Independent stream for one purpose under a master seed. Streams never
// share state, so results do not depend on evaluation order across purposes.
inline Rng make_stream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0) {
    std::uint64_t s = detail::splitmix64(seed);
    s = detail::splitmix64(s ^ detail::fnv1a(purpose));
    s = detail::splitmix64(s ^ (index * 0xd1342543de82ef95ULL + 1));
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Normal(mean, sd^2) restricted to [lo, hi], by inverse CDF.
double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi);

} // namespace wavecal
