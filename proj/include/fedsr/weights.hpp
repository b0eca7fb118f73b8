#pragma once

// Named, ordered tensor collections and the FSRW weight file format:
//
//   "FSRW" | u32 version (=1) | u32 tensor count
//   per tensor: u16 name length | UTF-8 name | u8 ndim | u32 dims[ndim] | f32 payload
//
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "fedsr/tensor.hpp"

namespace fedsr {

template <typename T>
struct NamedTensor {
    std::string name;
    BasicTensor<T> tensor;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

template <typename T>
class BasicModelWeights {
public:
    using Entry = NamedTensor<T>;

    BasicModelWeights() = default;
    explicit BasicModelWeights(std::vector<Entry> entries) : entries_(std::move(entries)) {}

    void add(std::string name, BasicTensor<T> tensor) { entries_.push_back({std::move(name), std::move(tensor)}); }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    Entry& operator[](std::size_t i) { return entries_[i]; }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    const BasicTensor<T>& get(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e.tensor;
        throw InvalidArgument("no tensor named '" + name + "'");
    }
    BasicTensor<T>& get(const std::string& name) {
        return const_cast<BasicTensor<T>&>(std::as_const(*this).get(name));
    }
    bool contains(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return true;
        return false;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.tensor.size();
        return n;
    }

    /// Same names in the same order with the same shapes.
    bool same_schema(const BasicModelWeights& other) const {
        if (entries_.size() != other.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != other.entries_[i].name) return false;
            if (entries_[i].tensor.shape() != other.entries_[i].tensor.shape()) return false;
        }
        return true;
    }

    void require_schema(const BasicModelWeights& other, const char* op) const {
        if (!same_schema(other)) throw InvalidArgument(std::string(op) + ": weight schemas differ");
    }

    /// Zero-filled tensors with this collection's schema.
    BasicModelWeights zeros_like() const {
        BasicModelWeights out;
        for (const auto& e : entries_) out.add(e.name, BasicTensor<T>(e.tensor.shape()));
        return out;
    }

    template <typename U>
    BasicModelWeights<U> cast() const {
        BasicModelWeights<U> out;
        for (const auto& e : entries_) out.add(e.name, e.tensor.template cast<U>());
        return out;
    }

    friend bool operator==(const BasicModelWeights&, const BasicModelWeights&) = default;

private:
    std::vector<Entry> entries_;
};

using ModelWeights = BasicModelWeights<float>;

namespace detail {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw ParseError(std::string("truncated weight file: ") + what, pos_);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[pos_++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline constexpr std::uint32_t kWeightFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_weights(const ModelWeights& weights) {
    std::vector<std::uint8_t> out{'F', 'S', 'R', 'W'};
    detail::put_u32(out, kWeightFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(weights.size()));
    for (const auto& [name, tensor] : weights) {
        if (name.size() > 0xffff) throw InvalidArgument("tensor name too long: " + name);
        if (tensor.rank() > 0xff) throw InvalidArgument("tensor rank too large: " + name);
        detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        detail::put_u8(out, static_cast<std::uint8_t>(tensor.rank()));
        for (auto d : tensor.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : tensor.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

inline ModelWeights deserialize_weights(std::span<const std::uint8_t> bytes) {
    detail::ByteReader rd(bytes);
    if (rd.str(4, "magic") != "FSRW") throw ParseError("bad magic, expected FSRW", 0);
    const auto version_at = rd.offset();
    const auto version = rd.u32("version");
    if (version != kWeightFormatVersion) {
        throw ParseError("unsupported weight format version " + std::to_string(version), version_at);
    }
    const auto count = rd.u32("tensor count");
    ModelWeights w;
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto len = rd.u16("name length");
        std::string name = rd.str(len, "name");
        const auto ndim = rd.u8("ndim");
        Shape shape;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            const auto at = rd.offset();
            const auto dim = rd.u32("dims");
            if (dim == 0) throw ParseError("zero dimension in tensor " + name, at);
            shape.push_back(dim);
        }
        const std::size_t n = shape_volume(shape);
        rd.need(n * 4, "payload");
        std::vector<float> data(n);
        for (auto& v : data) v = std::bit_cast<float>(rd.u32("payload"));
        w.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!rd.at_end()) throw ParseError("trailing bytes after last tensor", rd.offset());
    return w;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file", path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create file", path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed", path);
}

inline void save_weights(const ModelWeights& weights, const std::string& path) {
    write_file_bytes(path, serialize_weights(weights));
}

inline ModelWeights load_weights(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return deserialize_weights(bytes);
}

} // namespace fedsr
