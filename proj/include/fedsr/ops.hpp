#pragma once

// Forward and backward kernels for the layers used by the SR network.
// Convolutions are stride-1 cross-correlations with "same" zero padding.

#include <cmath>
#include <cstddef>
#include <string>

#include "fedsr/tensor.hpp"

namespace fedsr {

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;
    BasicTensor<T> kernel;
    BasicTensor<T> bias;
};

template <typename T>
struct PreluGrads {
    BasicTensor<T> input;
    BasicTensor<T> slope;
};

template <typename T>
struct LossResult {
    double loss = 0.0;
    BasicTensor<T> grad;
};

enum class LossKind { L1, MSE };

namespace detail {

struct ConvGeometry {
    std::size_t cin, h, w, cout, kh, kw;
};

template <typename T>
ConvGeometry check_conv(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias) {
    input.require_rank(3, "conv2d");
    kernel.require_rank(4, "conv2d");
    bias.require_rank(1, "conv2d");
    ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), kernel.dim(2), kernel.dim(3)};
    if (kernel.dim(1) != g.cin) {
        throw InvalidArgument("conv2d: input has " + std::to_string(g.cin) + " channels, kernel expects " +
                              std::to_string(kernel.dim(1)));
    }
    if (bias.dim(0) != g.cout) throw InvalidArgument("conv2d: bias length does not match output channels");
    if (g.kh % 2 == 0 || g.kw % 2 == 0) throw InvalidArgument("conv2d: kernel size must be odd");
    return g;
}

// Valid output range [lo, hi) along one axis for offset `d` into an axis of length n.
inline void valid_range(std::ptrdiff_t d, std::size_t n, std::size_t& lo, std::size_t& hi) {
    const auto sn = static_cast<std::ptrdiff_t>(n);
    lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -d));
    hi = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, std::min(sn, sn - d)));
}

} // namespace detail

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& bias) {
    const auto g = detail::check_conv(input, kernel, bias);
    BasicTensor<T> out({g.cout, g.h, g.w});
    const auto ph = static_cast<std::ptrdiff_t>(g.kh / 2);
    const auto pw = static_cast<std::ptrdiff_t>(g.kw / 2);
    const T* in = input.data();
    const T* k = kernel.data();
    T* o = out.data();
    for (std::size_t oc = 0; oc < g.cout; ++oc) {
        T* plane = o + oc * g.h * g.w;
        std::fill(plane, plane + g.h * g.w, bias[oc]);
        for (std::size_t c = 0; c < g.cin; ++c) {
            const T* src = in + c * g.h * g.w;
            for (std::size_t i = 0; i < g.kh; ++i) {
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(i) - ph;
                std::size_t y0, y1;
                detail::valid_range(dy, g.h, y0, y1);
                for (std::size_t j = 0; j < g.kw; ++j) {
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(j) - pw;
                    std::size_t x0, x1;
                    detail::valid_range(dx, g.w, x0, x1);
                    const T wv = k[((oc * g.cin + c) * g.kh + i) * g.kw + j];
                    if (wv == T{}) continue;
                    for (std::size_t y = y0; y < y1; ++y) {
                        T* dst = plane + y * g.w;
                        const T* row = src + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy) * g.w;
                        for (std::size_t x = x0; x < x1; ++x) {
                            dst[x] += wv * row[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx)];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                             const BasicTensor<T>& grad_out) {
    BasicTensor<T> zero_bias({kernel.rank() == 4 ? kernel.dim(0) : 1});
    const auto g = detail::check_conv(input, kernel, zero_bias);
    if (grad_out.shape() != Shape{g.cout, g.h, g.w}) {
        throw InvalidArgument("conv2d_backward: grad_out shape " + shape_string(grad_out.shape()) +
                              " does not match forward output");
    }
    ConvGrads<T> res{BasicTensor<T>(input.shape()), BasicTensor<T>(kernel.shape()), BasicTensor<T>({g.cout})};
    const auto ph = static_cast<std::ptrdiff_t>(g.kh / 2);
    const auto pw = static_cast<std::ptrdiff_t>(g.kw / 2);
    const T* in = input.data();
    const T* k = kernel.data();
    const T* go = grad_out.data();
    T* gi = res.input.data();
    T* gk = res.kernel.data();

    for (std::size_t oc = 0; oc < g.cout; ++oc) {
        const T* gplane = go + oc * g.h * g.w;
        double bsum = 0.0;
        for (std::size_t p = 0; p < g.h * g.w; ++p) bsum += static_cast<double>(gplane[p]);
        res.bias[oc] = static_cast<T>(bsum);

        for (std::size_t c = 0; c < g.cin; ++c) {
            const T* src = in + c * g.h * g.w;
            T* gsrc = gi + c * g.h * g.w;
            for (std::size_t i = 0; i < g.kh; ++i) {
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(i) - ph;
                std::size_t y0, y1;
                detail::valid_range(dy, g.h, y0, y1);
                for (std::size_t j = 0; j < g.kw; ++j) {
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(j) - pw;
                    std::size_t x0, x1;
                    detail::valid_range(dx, g.w, x0, x1);
                    const std::size_t kidx = ((oc * g.cin + c) * g.kh + i) * g.kw + j;
                    const T wv = k[kidx];
                    double ksum = 0.0;
                    for (std::size_t y = y0; y < y1; ++y) {
                        const T* grow = gplane + y * g.w;
                        const std::size_t sy = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + dy);
                        const T* row = src + sy * g.w;
                        T* grow_in = gsrc + sy * g.w;
                        T acc{};
                        for (std::size_t x = x0; x < x1; ++x) {
                            const std::size_t sx = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + dx);
                            acc += grow[x] * row[sx];
                            grow_in[sx] += wv * grow[x];
                        }
                        ksum += static_cast<double>(acc);
                    }
                    gk[kidx] = static_cast<T>(ksum);
                }
            }
        }
    }
    return res;
}

template <typename T>
BasicTensor<T> prelu_forward(const BasicTensor<T>& input, const BasicTensor<T>& slope) {
    input.require_rank(3, "prelu");
    if (slope.size() != input.dim(0)) throw InvalidArgument("prelu: slope length must equal channel count");
    BasicTensor<T> out(input.shape());
    const std::size_t plane = input.dim(1) * input.dim(2);
    for (std::size_t c = 0; c < input.dim(0); ++c) {
        const T s = slope[c];
        for (std::size_t p = c * plane; p < (c + 1) * plane; ++p) {
            const T x = input[p];
            out[p] = x > T{} ? x : s * x;
        }
    }
    return out;
}

/// Derivative wrt the input is 1 for x > 0 and slope[c] otherwise (including x == 0).
template <typename T>
PreluGrads<T> prelu_backward(const BasicTensor<T>& input, const BasicTensor<T>& slope,
                             const BasicTensor<T>& grad_out) {
    input.require_rank(3, "prelu_backward");
    if (slope.size() != input.dim(0)) throw InvalidArgument("prelu_backward: slope length must equal channel count");
    if (grad_out.shape() != input.shape()) throw InvalidArgument("prelu_backward: grad_out shape mismatch");
    PreluGrads<T> res{BasicTensor<T>(input.shape()), BasicTensor<T>(slope.shape())};
    const std::size_t plane = input.dim(1) * input.dim(2);
    for (std::size_t c = 0; c < input.dim(0); ++c) {
        const T s = slope[c];
        double gs = 0.0;
        for (std::size_t p = c * plane; p < (c + 1) * plane; ++p) {
            const T x = input[p];
            const T g = grad_out[p];
            if (x > T{}) {
                res.input[p] = g;
            } else {
                res.input[p] = s * g;
                gs += static_cast<double>(g * x);
            }
        }
        res.slope[c] = static_cast<T>(gs);
    }
    return res;
}

/// Depth-to-space: (C*r*r, H, W) -> (C, r*H, r*W).
template <typename T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& input, std::size_t r) {
    input.require_rank(3, "pixel_shuffle");
    if (r == 0 || input.dim(0) % (r * r) != 0) {
        throw InvalidArgument("pixel_shuffle: channels " + std::to_string(input.dim(0)) + " not divisible by r^2");
    }
    const std::size_t c_out = input.dim(0) / (r * r);
    const std::size_t h = input.dim(1), w = input.dim(2);
    BasicTensor<T> out({c_out, h * r, w * r});
    for (std::size_t c = 0; c < c_out; ++c)
        for (std::size_t y = 0; y < h * r; ++y)
            for (std::size_t x = 0; x < w * r; ++x)
                out.at(c, y, x) = input.at(c * r * r + (y % r) * r + (x % r), y / r, x / r);
    return out;
}

/// Inverse scatter of pixel_shuffle: (C, r*H, r*W) -> (C*r*r, H, W).
template <typename T>
BasicTensor<T> pixel_shuffle_backward(const BasicTensor<T>& grad_out, std::size_t r) {
    grad_out.require_rank(3, "pixel_shuffle_backward");
    if (r == 0 || grad_out.dim(1) % r != 0 || grad_out.dim(2) % r != 0) {
        throw InvalidArgument("pixel_shuffle_backward: spatial dims not divisible by r");
    }
    const std::size_t c_out = grad_out.dim(0);
    const std::size_t h = grad_out.dim(1) / r, w = grad_out.dim(2) / r;
    BasicTensor<T> out({c_out * r * r, h, w});
    for (std::size_t c = 0; c < c_out; ++c)
        for (std::size_t y = 0; y < h * r; ++y)
            for (std::size_t x = 0; x < w * r; ++x)
                out.at(c * r * r + (y % r) * r + (x % r), y / r, x / r) = grad_out.at(c, y, x);
    return out;
}

/// mean(|pred - target|), gradient sign(pred - target) / N with sign(0) = 0.
template <typename T>
LossResult<T> l1_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    if (pred.shape() != target.shape()) {
        throw InvalidArgument("l1_loss: shape " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
    }
    LossResult<T> res{0.0, BasicTensor<T>(pred.shape())};
    const double n = static_cast<double>(pred.size());
    const T inv = static_cast<T>(1.0 / n);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred[i] - target[i];
        sum += std::abs(static_cast<double>(d));
        res.grad[i] = d > T{} ? inv : (d < T{} ? -inv : T{});
    }
    res.loss = sum / n;
    return res;
}

/// mean((pred - target)^2), gradient 2 (pred - target) / N.
template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    if (pred.shape() != target.shape()) {
        throw InvalidArgument("mse_loss: shape " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
    }
    LossResult<T> res{0.0, BasicTensor<T>(pred.shape())};
    const double n = static_cast<double>(pred.size());
    const T scale = static_cast<T>(2.0 / n);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred[i] - target[i];
        sum += static_cast<double>(d) * static_cast<double>(d);
        res.grad[i] = scale * d;
    }
    res.loss = sum / n;
    return res;
}

template <typename T>
LossResult<T> reconstruction_loss(LossKind kind, const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    return kind == LossKind::L1 ? l1_loss(pred, target) : mse_loss(pred, target);
}

} // namespace fedsr
