#pragma once

// Degradation model x = ((y * k) downsample_s + n)_JPEG(q) as four stages applied
// in that fixed order: Gaussian blur, antialiased bicubic downsampling, additive
// Gaussian noise, JPEG quantization round trip.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "fedsr/rng.hpp"
#include "fedsr/tensor.hpp"

namespace fedsr {

enum class DegradationType { Clean = 0, Blur = 1, Noise = 2, Jpeg = 3 };

inline constexpr std::array<DegradationType, 4> kDegradationTypes{DegradationType::Clean, DegradationType::Blur,
                                                                 DegradationType::Noise, DegradationType::Jpeg};

inline std::string to_string(DegradationType t) {
    switch (t) {
    case DegradationType::Clean: return "clean";
    case DegradationType::Blur: return "blur";
    case DegradationType::Noise: return "noise";
    case DegradationType::Jpeg: return "jpeg";
    }
    return "?";
}

inline DegradationType degradation_type_from_string(const std::string& s) {
    for (auto t : kDegradationTypes)
        if (to_string(t) == s) return t;
    throw InvalidArgument("unknown degradation type '" + s + "'");
}

/// Either a fixed value (lo == hi) or a closed range sampled uniformly.
struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;

    static ParamRange fixed(double v) { return {v, v}; }
    bool is_fixed() const { return lo == hi; }

    friend bool operator==(const ParamRange&, const ParamRange&) = default;
};

enum class DegradationMode { Train, Test };

struct DegradationSpec {
    std::optional<ParamRange> blur_sigma;
    std::size_t scale = 1;
    std::optional<ParamRange> noise_sigma;
    std::optional<ParamRange> jpeg_quality;
    DegradationMode mode = DegradationMode::Test;

    void validate() const {
        if (scale != 1 && scale != 2 && scale != 4) throw InvalidArgument("degradation: scale must be 1, 2 or 4");
        auto check = [this](const std::optional<ParamRange>& p, const char* what) {
            if (!p) return;
            if (p->lo > p->hi) throw InvalidArgument(std::string("degradation: empty range for ") + what);
            if (mode == DegradationMode::Test && !p->is_fixed()) {
                throw InvalidArgument(std::string("degradation: test mode requires a fixed ") + what);
            }
        };
        check(blur_sigma, "blur sigma");
        check(noise_sigma, "noise sigma");
        check(jpeg_quality, "jpeg quality");
    }

    friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

/// Sampling ranges for training-time degradations.
struct DegradationRanges {
    ParamRange blur_sigma{0.2, 3.0};
    ParamRange noise_sigma{1.0 / 255.0, 30.0 / 255.0};
    ParamRange jpeg_quality{30, 95};
};

/// Fixed parameters of the pre-generated test variants.
struct TestParams {
    double blur_sigma = 2.0;
    double noise_sigma = 20.0 / 255.0;
    int jpeg_quality = 50;
};

inline DegradationSpec train_spec(DegradationType type, std::size_t scale, const DegradationRanges& r = {}) {
    DegradationSpec s;
    s.scale = scale;
    s.mode = DegradationMode::Train;
    switch (type) {
    case DegradationType::Clean: break;
    case DegradationType::Blur: s.blur_sigma = r.blur_sigma; break;
    case DegradationType::Noise: s.noise_sigma = r.noise_sigma; break;
    case DegradationType::Jpeg: s.jpeg_quality = r.jpeg_quality; break;
    }
    return s;
}

struct TestVariant {
    std::string name; // evaluation row label
    std::string dir;  // short directory name
    DegradationSpec spec;
};

/// The eight test combinations (power set of {blur, noise, jpeg}) in canonical order.
inline std::vector<TestVariant> test_variants(std::size_t scale, const TestParams& p = {}) {
    struct Combo {
        const char* name;
        const char* dir;
        bool b, n, j;
    };
    static constexpr std::array<Combo, 8> combos{{{"clean", "clean", false, false, false},
                                                  {"blur", "b", true, false, false},
                                                  {"noise", "n", false, true, false},
                                                  {"jpeg", "j", false, false, true},
                                                  {"b+n", "b+n", true, true, false},
                                                  {"b+j", "b+j", true, false, true},
                                                  {"n+j", "n+j", false, true, true},
                                                  {"b+n+j", "b+n+j", true, true, true}}};
    std::vector<TestVariant> out;
    for (const auto& c : combos) {
        DegradationSpec s;
        s.scale = scale;
        s.mode = DegradationMode::Test;
        if (c.b) s.blur_sigma = ParamRange::fixed(p.blur_sigma);
        if (c.n) s.noise_sigma = ParamRange::fixed(p.noise_sigma);
        if (c.j) s.jpeg_quality = ParamRange::fixed(p.jpeg_quality);
        out.push_back({c.name, c.dir, s});
    }
    return out;
}

/// Normalized isotropic Gaussian of size 2*ceil(3*sigma)+1.
inline Tensor gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw InvalidArgument("gaussian_kernel: sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const std::size_t k = static_cast<std::size_t>(2 * radius + 1);
    std::vector<double> vals(k * k);
    double sum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            vals[static_cast<std::size_t>((dy + radius) * (2 * radius + 1) + dx + radius)] = v;
            sum += v;
        }
    Tensor out({k, k});
    for (std::size_t i = 0; i < vals.size(); ++i) out[i] = static_cast<float>(vals[i] / sum);
    return out;
}

/// Per-channel correlation with edge-replicate padding.
inline Tensor apply_blur(const Tensor& image, const Tensor& kernel) {
    image.require_rank(3, "apply_blur");
    kernel.require_rank(2, "apply_blur");
    const std::size_t k = kernel.dim(0);
    if (kernel.dim(1) != k || k % 2 == 0) throw InvalidArgument("apply_blur: kernel must be odd and square");
    const auto r = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    const auto clampi = [](std::ptrdiff_t v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
    };
    Tensor out(image.shape());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t i = -r; i <= r; ++i) {
                    const std::size_t sy = clampi(static_cast<std::ptrdiff_t>(y) + i, H);
                    for (std::ptrdiff_t j = -r; j <= r; ++j) {
                        const std::size_t sx = clampi(static_cast<std::ptrdiff_t>(x) + j, W);
                        acc += static_cast<double>(kernel[static_cast<std::size_t>((i + r) * (2 * r + 1) + j + r)]) *
                               static_cast<double>(image.at(c, sy, sx));
                    }
                }
                out.at(c, y, x) = static_cast<float>(acc);
            }
    return out;
}

/// Keys cubic convolution kernel with a = -0.5.
inline double cubic_kernel(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

namespace detail {

struct ResampleTaps {
    std::vector<std::size_t> index;
    std::vector<double> weight;
    std::vector<std::size_t> offset; // taps of output d live in [offset[d], offset[d+1])
};

// Antialiased taps: the kernel is stretched by s and weights renormalized.
inline ResampleTaps bicubic_taps(std::size_t n_in, std::size_t s) {
    const std::size_t n_out = n_in / s;
    const double sd = static_cast<double>(s);
    ResampleTaps t;
    t.offset.push_back(0);
    for (std::size_t d = 0; d < n_out; ++d) {
        const double center = (static_cast<double>(d) + 0.5) * sd - 0.5;
        const auto lo = static_cast<std::ptrdiff_t>(std::ceil(center - 2.0 * sd));
        const auto hi = static_cast<std::ptrdiff_t>(std::floor(center + 2.0 * sd));
        const std::size_t first = t.weight.size();
        double sum = 0.0;
        for (std::ptrdiff_t i = lo; i <= hi; ++i) {
            const double w = cubic_kernel((static_cast<double>(i) - center) / sd);
            if (w == 0.0) continue;
            t.index.push_back(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n_in) - 1)));
            t.weight.push_back(w);
            sum += w;
        }
        for (std::size_t k = first; k < t.weight.size(); ++k) t.weight[k] /= sum;
        t.offset.push_back(t.weight.size());
    }
    return t;
}

} // namespace detail

/// Antialiased bicubic downsampling by an integer factor, source coordinate
/// (dst + 0.5) * s - 0.5, edge-replicated borders. Results are clamped to [0, 1]
/// because the negative lobes of the kernel can overshoot at edges.
inline Tensor downsample_bicubic(const Tensor& image, std::size_t s) {
    image.require_rank(3, "downsample_bicubic");
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (s == 0 || H % s != 0 || W % s != 0) {
        throw InvalidArgument("downsample_bicubic: " + shape_string(image.shape()) + " not divisible by " +
                              std::to_string(s));
    }
    if (s == 1) return image;
    const auto tx = detail::bicubic_taps(W, s);
    const auto ty = detail::bicubic_taps(H, s);
    const std::size_t h = H / s, w = W / s;
    std::vector<double> rows(H * w);
    Tensor out({C, h, w});
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (std::size_t k = tx.offset[x]; k < tx.offset[x + 1]; ++k)
                    acc += tx.weight[k] * static_cast<double>(image.at(c, y, tx.index[k]));
                rows[y * w + x] = acc;
            }
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (std::size_t k = ty.offset[y]; k < ty.offset[y + 1]; ++k) acc += ty.weight[k] * rows[ty.index[k] * w + x];
                out.at(c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
    }
    return out;
}

/// Adds i.i.d. N(0, sigma^2) per element and clamps to [0, 1]. Consumes
/// 2 * ceil(size / 2) draws when sigma > 0 and none otherwise.
inline Tensor add_gaussian_noise(const Tensor& image, double sigma, RngStream& rng) {
    if (sigma < 0.0) throw InvalidArgument("add_gaussian_noise: sigma must be non-negative");
    if (sigma == 0.0) return image;
    std::vector<double> z(image.size());
    rng.fill_normal(z);
    Tensor out(image.shape());
    for (std::size_t i = 0; i < image.size(); ++i) {
        out[i] = static_cast<float>(std::clamp(static_cast<double>(image[i]) + sigma * z[i], 0.0, 1.0));
    }
    return out;
}

namespace detail {

// ITU T.81 Annex K tables, row-major (vertical frequency major).
inline constexpr std::array<int, 64> kLumaQuant{16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                                                14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                                                18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                                                49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
inline constexpr std::array<int, 64> kChromaQuant{17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                                                  24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                                                  99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                                                  99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

inline std::array<int, 64> scaled_quant_table(const std::array<int, 64>& base, int quality) {
    const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<int, 64> q{};
    for (std::size_t i = 0; i < 64; ++i) q[i] = std::clamp((base[i] * s + 50) / 100, 1, 255);
    return q;
}

// cos((2x+1) u pi / 16) scaled by the orthonormal factor c(u) / 2.
inline const std::array<double, 64>& dct_basis() {
    static const std::array<double, 64> basis = [] {
        std::array<double, 64> b{};
        for (int u = 0; u < 8; ++u)
            for (int x = 0; x < 8; ++x) {
                const double cu = u == 0 ? std::sqrt(0.125) : 0.5;
                b[static_cast<std::size_t>(u * 8 + x)] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
            }
        return b;
    }();
    return basis;
}

// Quantize/dequantize one level-shifted 8x8 block in place.
inline void jpeg_block(std::array<double, 64>& block, const std::array<int, 64>& q) {
    const auto& B = dct_basis();
    std::array<double, 64> tmp{}, coef{};
    // rows then columns
    for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int x = 0; x < 8; ++x) acc += B[static_cast<std::size_t>(u * 8 + x)] * block[static_cast<std::size_t>(y * 8 + x)];
            tmp[static_cast<std::size_t>(y * 8 + u)] = acc;
        }
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y) acc += B[static_cast<std::size_t>(v * 8 + y)] * tmp[static_cast<std::size_t>(y * 8 + u)];
            const auto qi = static_cast<std::size_t>(v * 8 + u);
            coef[qi] = std::round(acc / q[qi]) * q[qi];
        }
    for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
            double acc = 0.0;
            for (int v = 0; v < 8; ++v) acc += B[static_cast<std::size_t>(v * 8 + y)] * coef[static_cast<std::size_t>(v * 8 + u)];
            tmp[static_cast<std::size_t>(y * 8 + u)] = acc;
        }
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u) acc += B[static_cast<std::size_t>(u * 8 + x)] * tmp[static_cast<std::size_t>(y * 8 + u)];
            block[static_cast<std::size_t>(y * 8 + x)] = acc;
        }
}

} // namespace detail

/// Lossy JPEG distortion without entropy coding: full-range BT.601 YCbCr, 4:4:4,
/// 8x8 DCT quantized with the Annex K tables scaled by quality.
inline Tensor jpeg_roundtrip(const Tensor& image, int quality) {
    image.require_rank(3, "jpeg_roundtrip");
    if (quality < 1 || quality > 100) throw InvalidArgument("jpeg_roundtrip: quality must be in [1, 100]");
    if (image.dim(0) != 3) throw InvalidArgument("jpeg_roundtrip: expected an RGB image");
    const std::size_t H = image.dim(1), W = image.dim(2);
    const std::size_t PH = (H + 7) / 8 * 8, PW = (W + 7) / 8 * 8;
    const std::array<std::array<int, 64>, 3> tables{detail::scaled_quant_table(detail::kLumaQuant, quality),
                                                    detail::scaled_quant_table(detail::kChromaQuant, quality),
                                                    detail::scaled_quant_table(detail::kChromaQuant, quality)};

    std::array<std::vector<double>, 3> planes;
    for (auto& p : planes) p.assign(PH * PW, 0.0);
    for (std::size_t y = 0; y < PH; ++y)
        for (std::size_t x = 0; x < PW; ++x) {
            const std::size_t sy = std::min(y, H - 1), sx = std::min(x, W - 1);
            const double r = 255.0 * image.at(0, sy, sx);
            const double g = 255.0 * image.at(1, sy, sx);
            const double b = 255.0 * image.at(2, sy, sx);
            planes[0][y * PW + x] = 0.299 * r + 0.587 * g + 0.114 * b;
            planes[1][y * PW + x] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
            planes[2][y * PW + x] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
        }

    std::array<double, 64> block{};
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t by = 0; by < PH; by += 8)
            for (std::size_t bx = 0; bx < PW; bx += 8) {
                for (std::size_t i = 0; i < 8; ++i)
                    for (std::size_t j = 0; j < 8; ++j) block[i * 8 + j] = planes[ch][(by + i) * PW + bx + j] - 128.0;
                detail::jpeg_block(block, tables[ch]);
                for (std::size_t i = 0; i < 8; ++i)
                    for (std::size_t j = 0; j < 8; ++j) planes[ch][(by + i) * PW + bx + j] = block[i * 8 + j] + 128.0;
            }

    Tensor out(image.shape());
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const double Y = planes[0][y * PW + x];
            const double cb = planes[1][y * PW + x] - 128.0;
            const double cr = planes[2][y * PW + x] - 128.0;
            const double rgb[3] = {Y + 1.402 * cr, Y - 0.344136 * cb - 0.714136 * cr, Y + 1.772 * cb};
            for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(std::clamp(rgb[c] / 255.0, 0.0, 1.0));
        }
    return out;
}

namespace detail {

inline double resolve(const ParamRange& p, RngStream& rng) { return p.is_fixed() ? p.lo : rng.uniform(p.lo, p.hi); }

inline int resolve_int(const ParamRange& p, RngStream& rng) {
    const auto lo = static_cast<std::int64_t>(std::llround(p.lo));
    const auto hi = static_cast<std::int64_t>(std::llround(p.hi));
    return static_cast<int>(lo == hi ? lo : rng.uniform_int(lo, hi));
}

} // namespace detail

/// Applies the active stages in order. Train mode draws from `rng`:
///   blur sigma 1 draw (if ranged), noise sigma 1 draw (if ranged),
///   noise field 2 * ceil(C*h*w / 2) draws, jpeg quality 1 draw (if ranged).
/// Test mode works on a copy of `rng` and leaves the caller's stream untouched.
inline Tensor degrade(const Tensor& hr, const DegradationSpec& spec, RngStream& rng) {
    spec.validate();
    hr.require_rank(3, "degrade");
    if (hr.dim(1) % spec.scale != 0 || hr.dim(2) % spec.scale != 0) {
        throw InvalidArgument("degrade: image " + shape_string(hr.shape()) + " not divisible by scale " +
                              std::to_string(spec.scale));
    }
    RngStream local = rng;
    RngStream& r = spec.mode == DegradationMode::Train ? rng : local;

    Tensor x = hr;
    if (spec.blur_sigma) {
        // float taps sum to 1 only up to rounding
        x = apply_blur(x, gaussian_kernel(detail::resolve(*spec.blur_sigma, r)));
        for (auto& v : x.values()) v = std::clamp(v, 0.0f, 1.0f);
    }
    x = downsample_bicubic(x, spec.scale);
    if (spec.noise_sigma) x = add_gaussian_noise(x, detail::resolve(*spec.noise_sigma, r), r);
    if (spec.jpeg_quality) x = jpeg_roundtrip(x, detail::resolve_int(*spec.jpeg_quality, r));
    return x;
}

} // namespace fedsr
