#pragma once

// Binary PPM (P6, maxval 255) reading/writing and patch extraction.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fedsr/tensor.hpp"
#include "fedsr/weights.hpp"

namespace fedsr {

struct ImageRecord {
    std::string id;
    Tensor hr; // (3, H, W), values in [0, 1]
};

namespace detail {

class PpmHeaderReader {
public:
    PpmHeaderReader(std::span<const std::uint8_t> b, std::size_t pos) : b_(b), pos_(pos) {}

    std::size_t pos() const { return pos_; }

    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            if (std::isspace(b_[pos_])) {
                ++pos_;
            } else if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n' && b_[pos_] != '\r') ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t last_start() const { return start_; }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = start_ = pos_;
        std::size_t v = 0;
        while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
            v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
            if (v > 1'000'000) throw ParseError(std::string("ppm: ") + what + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw ParseError(std::string("ppm: expected ") + what, start);
        return v;
    }

    void single_whitespace() {
        if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw ParseError("ppm: expected whitespace after maxval", pos_);
        ++pos_;
    }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
    std::size_t start_ = 0;
};

} // namespace detail

inline Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw ParseError("ppm: missing P6 magic", 0);
    detail::PpmHeaderReader rd(bytes, 2);
    const std::size_t width = rd.number("width");
    const std::size_t height = rd.number("height");
    const std::size_t maxval = rd.number("maxval");
    const std::size_t maxval_at = rd.last_start();
    if (width == 0 || height == 0) throw ParseError("ppm: zero image dimension", 2);
    if (maxval != 255) throw ParseError("ppm: only maxval 255 is supported", maxval_at);
    rd.single_whitespace();
    const std::size_t offset = rd.pos();
    const std::size_t n = width * height * 3;
    if (bytes.size() - offset < n) {
        throw ParseError("ppm: truncated payload, expected " + std::to_string(n) + " bytes", bytes.size());
    }
    if (bytes.size() - offset > n) throw ParseError("ppm: trailing bytes after payload", offset + n);
    Tensor out({3, height, width});
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                out.at(c, y, x) = static_cast<float>(bytes[offset + (y * width + x) * 3 + c] / 255.0);
    return out;
}

inline std::uint8_t to_byte(float v) {
    const double s = std::round(static_cast<double>(v) * 255.0);
    return static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
}

inline std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    image.require_rank(3, "encode_ppm");
    if (image.dim(0) != 3) throw InvalidArgument("encode_ppm: expected 3 channels");
    const std::size_t H = image.dim(1), W = image.dim(2);
    const std::string header = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + H * W * 3);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < 3; ++c) out.push_back(to_byte(image.at(c, y, x)));
    return out;
}

inline ImageRecord load_ppm(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return {std::filesystem::path(path).stem().string(), decode_ppm(bytes)};
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), e.offset());
    }
}

inline void save_ppm(const Tensor& image, const std::string& path) { write_file_bytes(path, encode_ppm(image)); }

/// Crops bottom/right so both dimensions are multiples of `scale`.
inline Tensor crop_to_multiple(const Tensor& image, std::size_t scale) {
    const std::size_t H = image.dim(1) / scale * scale, W = image.dim(2) / scale * scale;
    if (H == 0 || W == 0) throw InvalidArgument("image smaller than the scale factor");
    if (H == image.dim(1) && W == image.dim(2)) return image;
    Tensor out({image.dim(0), H, W});
    for (std::size_t c = 0; c < image.dim(0); ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) out.at(c, y, x) = image.at(c, y, x);
    return out;
}

/// Window origins along an axis: 0, stride, 2*stride, ... plus the last valid
/// origin n - patch when the grid leaves the border uncovered.
inline std::vector<std::size_t> patch_anchors(std::size_t n, std::size_t patch, std::size_t stride) {
    std::vector<std::size_t> a;
    if (patch > n || patch == 0 || stride == 0) return a;
    for (std::size_t p = 0; p + patch <= n; p += stride) a.push_back(p);
    if (a.back() + patch < n) a.push_back(n - patch);
    return a;
}

/// Square patches in row-major anchor order; empty when the patch exceeds the image.
inline std::vector<Tensor> extract_patches(const ImageRecord& image, std::size_t patch, std::size_t stride) {
    const Tensor& t = image.hr;
    t.require_rank(3, "extract_patches");
    if (stride == 0) throw InvalidArgument("extract_patches: stride must be positive");
    std::vector<Tensor> out;
    const auto ys = patch_anchors(t.dim(1), patch, stride);
    const auto xs = patch_anchors(t.dim(2), patch, stride);
    for (auto y0 : ys)
        for (auto x0 : xs) {
            Tensor p({t.dim(0), patch, patch});
            for (std::size_t c = 0; c < t.dim(0); ++c)
                for (std::size_t y = 0; y < patch; ++y)
                    for (std::size_t x = 0; x < patch; ++x) p.at(c, y, x) = t.at(c, y0 + y, x0 + x);
            out.push_back(std::move(p));
        }
    return out;
}

/// Patches as records with ids "<id>_p<index>".
inline std::vector<ImageRecord> extract_patch_records(const ImageRecord& image, std::size_t patch, std::size_t stride) {
    std::vector<ImageRecord> out;
    auto patches = extract_patches(image, patch, stride);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        char suffix[32];
        std::snprintf(suffix, sizeof suffix, "_p%03zu", i);
        out.push_back({image.id + suffix, std::move(patches[i])});
    }
    return out;
}

/// All *.ppm files of a directory, sorted by file name.
inline std::vector<ImageRecord> load_ppm_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory", dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ImageRecord> out;
    for (const auto& f : files) out.push_back(load_ppm(f.string()));
    return out;
}

} // namespace fedsr
