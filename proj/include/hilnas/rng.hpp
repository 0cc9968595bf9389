#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>

namespace hilnas {

// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text,
                                std::uint64_t hash = 0xCBF29CE484222325ULL) noexcept {
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

// Seed of a named substream. Every random draw site in the engine keys its
// generator on (session seed, stream name, position) so that draws in one
// stream never shift draws in another.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                                    std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
    std::uint64_t h = mix64(base ^ fnv1a64(stream));
    h = mix64(h ^ mix64(a + 0x632BE59BD9B4E019ULL));
    return mix64(h ^ mix64(b + 0x85157AF5ULL));
}

// Small deterministic generator. Standard-library distributions are not
// portable across implementations, so conversions are done here.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    // Uniform integer on [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t r;
        do {
            r = (*this)();
        } while (r >= limit);
        return r % n;
    }

    // Standard normal via Box-Muller (one value per call).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Index drawn with probability proportional to weights[i]. Returns
    // weights.size() when every weight is zero.
    std::size_t pick_weighted(std::span<const double> weights) noexcept {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) return weights.size();
        const double target = uniform() * total;
        double acc = 0.0;
        std::size_t last_nonzero = weights.size();
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            acc += weights[i];
            last_nonzero = i;
            if (target < acc) return i;
        }
        return last_nonzero;
    }

private:
    std::uint64_t state_;
};

// 64-bit FNV-1a over raw bytes, rendered as 16 hex digits.
std::string hex_digest(std::span<const unsigned char> bytes);
std::string hex_digest(std::string_view text);

} // namespace hilnas
