#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedsr/error.hpp"

namespace fedsr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_volume(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

/// Dense row-major array with an explicit shape. Image tensors are (C, H, W),
/// batches are (B, C, H, W).
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{})
        : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {
        check_dims();
    }

    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_dims();
        if (data_.size() != shape_volume(shape_)) {
            throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_string(shape_));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    const T& at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
        return BasicTensor<U>(shape_, std::move(out));
    }

    /// Sample `b` of a rank-4 batch as a rank-3 tensor.
    BasicTensor sample(std::size_t b) const {
        require_rank(4, "sample");
        const std::size_t n = shape_[1] * shape_[2] * shape_[3];
        std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(b * n),
                           data_.begin() + static_cast<std::ptrdiff_t>((b + 1) * n));
        return BasicTensor({shape_[1], shape_[2], shape_[3]}, std::move(out));
    }

    void set_sample(std::size_t b, const BasicTensor& image) {
        require_rank(4, "set_sample");
        if (image.shape() != Shape{shape_[1], shape_[2], shape_[3]}) {
            throw InvalidArgument("set_sample: image shape " + shape_string(image.shape()) +
                                  " does not fit batch " + shape_string(shape_));
        }
        std::copy(image.data_.begin(), image.data_.end(),
                  data_.begin() + static_cast<std::ptrdiff_t>(b * image.size()));
    }

    void require_rank(std::size_t r, const char* op) const {
        if (rank() != r) {
            throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(r) + ", got shape " +
                                  shape_string(shape_));
        }
    }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_dims() const {
        for (auto d : shape_) {
            if (d == 0) throw InvalidArgument("tensor dimensions must be positive, got " + shape_string(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Stacks equally shaped (C,H,W) images into a (B,C,H,W) batch.
template <typename T>
BasicTensor<T> stack(std::span<const BasicTensor<T>> images) {
    if (images.empty()) throw InvalidArgument("stack: empty image list");
    const Shape& s = images.front().shape();
    if (s.size() != 3) throw InvalidArgument("stack: images must be rank 3");
    BasicTensor<T> out({images.size(), s[0], s[1], s[2]});
    for (std::size_t b = 0; b < images.size(); ++b) out.set_sample(b, images[b]);
    return out;
}

} // namespace fedsr
