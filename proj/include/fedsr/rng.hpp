#pragma once

// Reproducible random streams. A stream is seeded from (master_seed, label):
// the label is hashed with 64-bit FNV-1a, xor-ed into the master seed, and
// four successive SplitMix64 outputs become the xoshiro256++ state.
//
// Draw accounting (every draw consumes exactly one 64-bit output):
//   uniform(), uniform_open(), uniform_int()  1 draw
//   normal()                                  2 draws (Box-Muller, cosine branch)
//   fill_normal(n values)                     2 * ceil(n / 2) draws

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>

namespace fedsr {

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class SplitMix64 {
public:
    constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// xoshiro256++ with helpers for the distributions the pipeline needs.
class RngStream {
public:
    using State = std::array<std::uint64_t, 4>;

    constexpr explicit RngStream(const State& s) noexcept : s_(s) {}

    static constexpr RngStream from_seed(std::uint64_t seed) noexcept {
        SplitMix64 sm(seed);
        State s{};
        for (auto& w : s) w = sm.next();
        return RngStream(s);
    }

    constexpr const State& state() const noexcept { return s_; }

    constexpr std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// (0, 1] with 53 random bits; safe as a log argument.
    double uniform_open() noexcept { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
        const auto span = static_cast<double>(hi - lo + 1);
        auto k = static_cast<std::int64_t>(uniform() * span);
        if (k > hi - lo) k = hi - lo;
        return lo + k;
    }

    /// Index in [0, n).
    std::size_t index(std::size_t n) noexcept {
        return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
    }

    double normal() noexcept {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Standard normals, both Box-Muller outputs per pair of draws.
    void fill_normal(std::span<double> out) noexcept {
        for (std::size_t i = 0; i < out.size(); i += 2) {
            const double u1 = uniform_open();
            const double u2 = uniform();
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double th = 2.0 * std::numbers::pi * u2;
            out[i] = r * std::cos(th);
            if (i + 1 < out.size()) out[i + 1] = r * std::sin(th);
        }
    }

    /// Gamma(alpha, 1) by Marsaglia-Tsang; alpha < 1 uses the U^(1/alpha) boost.
    double gamma(double alpha) noexcept {
        if (alpha < 1.0) {
            const double g = gamma(alpha + 1.0);
            return g * std::pow(uniform_open(), 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    friend bool operator==(const RngStream&, const RngStream&) = default;

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    State s_;
};

inline RngStream derive_stream(std::uint64_t master_seed, std::string_view label) noexcept {
    return RngStream::from_seed(master_seed ^ fnv1a64(label));
}

// Fixed label scheme.
inline std::string client_round_label(std::size_t client_id, std::size_t round) {
    return "client/" + std::to_string(client_id) + "/round/" + std::to_string(round);
}
inline std::string noise_label(std::string_view image_id) { return "noise/" + std::string(image_id); }
inline constexpr std::string_view kPartitionLabel = "partition";

} // namespace fedsr
