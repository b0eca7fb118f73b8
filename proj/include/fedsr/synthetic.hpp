#pragma once

// Procedural RGB test images: a smooth colour ramp overlaid with oriented
// gratings and hard-edged shapes, so that resampling and restoration have
// both low- and high-frequency content to work with.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "fedsr/image_io.hpp"
#include "fedsr/rng.hpp"

namespace fedsr {

inline Tensor synthetic_image(std::size_t height, std::size_t width, std::uint64_t seed) {
    RngStream rng = derive_stream(seed, "synthetic");
    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = rng.uniform(0.2, 0.8);
        gx[c] = rng.uniform(-0.3, 0.3);
        gy[c] = rng.uniform(-0.3, 0.3);
    }
    struct Grating {
        double fx, fy, phase, amp[3];
    };
    std::vector<Grating> gratings(2);
    for (auto& g : gratings) {
        const double freq = rng.uniform(0.05, 0.35);
        const double angle = rng.uniform(0.0, std::numbers::pi);
        g.fx = freq * std::cos(angle);
        g.fy = freq * std::sin(angle);
        g.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (auto& a : g.amp) a = rng.uniform(0.03, 0.12);
    }
    struct Shape {
        double cx, cy, rx, ry, color[3];
        bool disc;
    };
    std::vector<Shape> shapes(4);
    const double H = static_cast<double>(height), W = static_cast<double>(width);
    for (auto& s : shapes) {
        s.cx = rng.uniform(0.0, W);
        s.cy = rng.uniform(0.0, H);
        s.rx = rng.uniform(0.08, 0.3) * W;
        s.ry = rng.uniform(0.08, 0.3) * H;
        for (auto& c : s.color) c = rng.uniform(0.05, 0.95);
        s.disc = rng.uniform() < 0.5;
    }

    Tensor img({3, height, width});
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const double u = static_cast<double>(x) / W - 0.5, v = static_cast<double>(y) / H - 0.5;
            double rgb[3];
            for (int c = 0; c < 3; ++c) rgb[c] = base[c] + gx[c] * u + gy[c] * v;
            for (const auto& s : shapes) {
                const double dx = (static_cast<double>(x) - s.cx) / s.rx;
                const double dy = (static_cast<double>(y) - s.cy) / s.ry;
                const bool inside = s.disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                if (inside)
                    for (int c = 0; c < 3; ++c) rgb[c] = 0.35 * rgb[c] + 0.65 * s.color[c];
            }
            for (const auto& g : gratings) {
                const double w = std::sin(2.0 * std::numbers::pi * (g.fx * static_cast<double>(x) + g.fy * static_cast<double>(y)) + g.phase);
                for (int c = 0; c < 3; ++c) rgb[c] += g.amp[c] * w;
            }
            for (std::size_t c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
        }
    return img;
}

/// `count` images with ids "synth_000", "synth_001", ...
inline std::vector<ImageRecord> synthetic_corpus(std::size_t count, std::size_t height, std::size_t width,
                                                 std::uint64_t seed) {
    std::vector<ImageRecord> out;
    for (std::size_t i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "synth_%03zu", i);
        out.push_back({id, synthetic_image(height, width, seed * 1000003ULL + i)});
    }
    return out;
}

} // namespace fedsr
