#pragma once

// SRResNet-style network without batch normalization:
//
//   head conv3x3 -> N x [conv3x3, PReLU, conv3x3, +skip] -> body conv3x3 (+ head skip)
//   -> log2(scale) x [conv3x3 to 4F, pixel_shuffle(2), PReLU] -> tail conv3x3 to 3 channels
//
// The output is not clamped.

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedsr/ops.hpp"
#include "fedsr/rng.hpp"
#include "fedsr/weights.hpp"

namespace fedsr {

struct ModelConfig {
    std::size_t features = 16;
    std::size_t blocks = 2;
    std::size_t scale = 4;
    std::size_t in_channels = 3;

    std::size_t upsample_stages() const { return static_cast<std::size_t>(std::countr_zero(scale)); }

    void validate() const {
        if (features == 0) throw InvalidArgument("model: features must be positive");
        if (blocks == 0) throw InvalidArgument("model: blocks must be positive");
        if (scale < 2 || !std::has_single_bit(scale)) {
            throw InvalidArgument("model: scale must be a power of two >= 2, got " + std::to_string(scale));
        }
        if (in_channels != 3) throw InvalidArgument("model: in_channels must be 3");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named presets. "srresnet" is the ~1.5M parameter configuration; "rrdb"
/// is recognised but not built (its 23 RRDB blocks / 16.7M parameters are outside
/// what this network topology provides).
inline ModelConfig model_preset(const std::string& name) {
    if (name == "default") return {16, 2, 4, 3};
    if (name == "desk") return {8, 1, 2, 3};
    if (name == "tiny") return {2, 1, 2, 3};
    if (name == "srresnet") return {64, 16, 4, 3};
    if (name == "rrdb") throw InvalidArgument("model preset 'rrdb' is documented only and cannot be instantiated");
    throw InvalidArgument("unknown model preset '" + name + "'");
}

namespace detail {

struct ConvSlot {
    std::size_t kernel, bias;
};
struct BlockSlot {
    ConvSlot conv1;
    std::size_t slope;
    ConvSlot conv2;
};
struct StageSlot {
    ConvSlot conv;
    std::size_t slope;
};

// Positions of every parameter in the canonical weight order.
struct Layout {
    ConvSlot head;
    std::vector<BlockSlot> blocks;
    ConvSlot body;
    std::vector<StageSlot> stages;
    ConvSlot tail;

    explicit Layout(const ModelConfig& c) {
        std::size_t i = 0;
        auto conv = [&i] { ConvSlot s{i, i + 1}; i += 2; return s; };
        head = conv();
        for (std::size_t b = 0; b < c.blocks; ++b) {
            BlockSlot s;
            s.conv1 = conv();
            s.slope = i++;
            s.conv2 = conv();
            blocks.push_back(s);
        }
        body = conv();
        for (std::size_t u = 0; u < c.upsample_stages(); ++u) {
            StageSlot s;
            s.conv = conv();
            s.slope = i++;
            stages.push_back(s);
        }
        tail = conv();
    }
};

struct ParamSpec {
    std::string name;
    Shape shape;
    enum Kind { Kernel, Bias, Slope } kind;
};

inline std::vector<ParamSpec> param_specs(const ModelConfig& c) {
    c.validate();
    const std::size_t f = c.features;
    std::vector<ParamSpec> out;
    auto conv = [&out](const std::string& prefix, std::size_t cout, std::size_t cin) {
        out.push_back({prefix + ".kernel", {cout, cin, 3, 3}, ParamSpec::Kernel});
        out.push_back({prefix + ".bias", {cout}, ParamSpec::Bias});
    };
    conv("head", f, c.in_channels);
    for (std::size_t b = 0; b < c.blocks; ++b) {
        const std::string p = "block" + std::to_string(b);
        conv(p + ".conv1", f, f);
        out.push_back({p + ".prelu.slope", {f}, ParamSpec::Slope});
        conv(p + ".conv2", f, f);
    }
    conv("body", f, f);
    for (std::size_t u = 0; u < c.upsample_stages(); ++u) {
        const std::string p = "up" + std::to_string(u);
        conv(p, 4 * f, f);
        out.push_back({p + ".prelu.slope", {f}, ParamSpec::Slope});
    }
    conv("tail", c.in_channels, f);
    return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    BasicTensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

template <typename T>
void accumulate(BasicTensor<T>& dst, const BasicTensor<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

} // namespace detail

/// Recovers the configuration from tensor names and shapes, and checks that the
/// weights follow the canonical schema for it.
template <typename T>
ModelConfig infer_config(const BasicModelWeights<T>& w) {
    if (!w.contains("head.kernel")) throw InvalidArgument("weights: missing head.kernel");
    ModelConfig c;
    const auto& head = w.get("head.kernel");
    if (head.rank() != 4) throw InvalidArgument("weights: head.kernel must be rank 4");
    c.features = head.dim(0);
    c.in_channels = head.dim(1);
    c.blocks = 0;
    while (w.contains("block" + std::to_string(c.blocks) + ".conv1.kernel")) ++c.blocks;
    std::size_t stages = 0;
    while (w.contains("up" + std::to_string(stages) + ".kernel")) ++stages;
    c.scale = std::size_t{1} << stages;
    const auto specs = detail::param_specs(c);
    if (specs.size() != w.size()) throw InvalidArgument("weights: unexpected tensor count for inferred model");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].name != w[i].name || specs[i].shape != w[i].tensor.shape()) {
            throw InvalidArgument("weights: tensor '" + w[i].name + "' does not match the canonical layout");
        }
    }
    return c;
}

/// Kaiming-normal fan-in init for kernels, zero biases, PReLU slopes 0.25.
inline ModelWeights init_weights(const ModelConfig& config, std::uint64_t seed) {
    RngStream rng = derive_stream(seed, "init");
    ModelWeights w;
    std::vector<double> noise;
    for (const auto& spec : detail::param_specs(config)) {
        Tensor t(spec.shape);
        if (spec.kind == detail::ParamSpec::Kernel) {
            const double fan_in = static_cast<double>(spec.shape[1] * spec.shape[2] * spec.shape[3]);
            const double stddev = std::sqrt(2.0 / fan_in);
            noise.assign(t.size(), 0.0);
            rng.fill_normal(noise);
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(stddev * noise[i]);
        } else if (spec.kind == detail::ParamSpec::Slope) {
            t.fill(0.25f);
        }
        w.add(spec.name, std::move(t));
    }
    return w;
}

/// Activations of one sample kept for the backward pass.
template <typename T>
struct ForwardTrace {
    BasicTensor<T> input;
    BasicTensor<T> head_out;
    struct Block {
        BasicTensor<T> in, conv1_out, act;
    };
    std::vector<Block> blocks;
    BasicTensor<T> body_in;
    struct Stage {
        BasicTensor<T> in, shuffled;
    };
    std::vector<Stage> stages;
    BasicTensor<T> tail_in;
};

template <typename T>
BasicTensor<T> forward_image(const BasicModelWeights<T>& w, const ModelConfig& c, const BasicTensor<T>& image,
                             ForwardTrace<T>* trace = nullptr) {
    image.require_rank(3, "forward");
    if (image.dim(0) != c.in_channels) {
        throw InvalidArgument("forward: expected " + std::to_string(c.in_channels) + " channels, got " +
                              std::to_string(image.dim(0)));
    }
    const detail::Layout L(c);
    auto conv = [&w](const BasicTensor<T>& x, detail::ConvSlot s) {
        return conv2d_forward(x, w[s.kernel].tensor, w[s.bias].tensor);
    };
    if (trace) trace->input = image;
    const BasicTensor<T> head = conv(image, L.head);
    BasicTensor<T> cur = head;
    for (const auto& b : L.blocks) {
        BasicTensor<T> c1 = conv(cur, b.conv1);
        BasicTensor<T> a = prelu_forward(c1, w[b.slope].tensor);
        BasicTensor<T> next = detail::add(cur, conv(a, b.conv2));
        if (trace) trace->blocks.push_back({std::move(cur), std::move(c1), std::move(a)});
        cur = std::move(next);
    }
    BasicTensor<T> body = detail::add(conv(cur, L.body), head);
    if (trace) {
        trace->head_out = head;
        trace->body_in = std::move(cur);
    }
    cur = std::move(body);
    for (const auto& s : L.stages) {
        BasicTensor<T> sh = pixel_shuffle(conv(cur, s.conv), 2);
        BasicTensor<T> next = prelu_forward(sh, w[s.slope].tensor);
        if (trace) trace->stages.push_back({std::move(cur), std::move(sh)});
        cur = std::move(next);
    }
    BasicTensor<T> out = conv(cur, L.tail);
    if (trace) trace->tail_in = std::move(cur);
    return out;
}

/// Accumulates parameter gradients of one sample into `grads`.
template <typename T>
void backward_image(const BasicModelWeights<T>& w, const ModelConfig& c, const ForwardTrace<T>& trace,
                    const BasicTensor<T>& grad_out, BasicModelWeights<T>& grads) {
    const detail::Layout L(c);
    auto conv_back = [&](const BasicTensor<T>& x, detail::ConvSlot s, const BasicTensor<T>& g) {
        auto r = conv2d_backward(x, w[s.kernel].tensor, g);
        detail::accumulate(grads[s.kernel].tensor, r.kernel);
        detail::accumulate(grads[s.bias].tensor, r.bias);
        return std::move(r.input);
    };

    BasicTensor<T> g = conv_back(trace.tail_in, L.tail, grad_out);
    for (std::size_t u = L.stages.size(); u-- > 0;) {
        const auto& s = L.stages[u];
        auto pg = prelu_backward(trace.stages[u].shuffled, w[s.slope].tensor, g);
        detail::accumulate(grads[s.slope].tensor, pg.slope);
        g = conv_back(trace.stages[u].in, s.conv, pixel_shuffle_backward(pg.input, 2));
    }
    const BasicTensor<T> head_skip = g;
    g = conv_back(trace.body_in, L.body, g);
    for (std::size_t b = L.blocks.size(); b-- > 0;) {
        const auto& s = L.blocks[b];
        const auto& t = trace.blocks[b];
        BasicTensor<T> ga = conv_back(t.act, s.conv2, g);
        auto pg = prelu_backward(t.conv1_out, w[s.slope].tensor, ga);
        detail::accumulate(grads[s.slope].tensor, pg.slope);
        detail::accumulate(g, conv_back(t.in, s.conv1, pg.input));
    }
    detail::accumulate(g, head_skip);
    conv_back(trace.input, L.head, g);
}

/// Batched forward: (B, 3, h, w) -> (B, 3, s*h, s*w).
template <typename T>
BasicTensor<T> forward(const BasicModelWeights<T>& w, const BasicTensor<T>& lr_batch) {
    lr_batch.require_rank(4, "forward");
    const ModelConfig c = infer_config(w);
    if (lr_batch.dim(1) != c.in_channels) {
        throw InvalidArgument("forward: expected " + std::to_string(c.in_channels) + " channels, got " +
                              std::to_string(lr_batch.dim(1)));
    }
    BasicTensor<T> out({lr_batch.dim(0), c.in_channels, lr_batch.dim(2) * c.scale, lr_batch.dim(3) * c.scale});
    for (std::size_t b = 0; b < lr_batch.dim(0); ++b) out.set_sample(b, forward_image(w, c, lr_batch.sample(b)));
    return out;
}

template <typename T>
struct LossAndGrads {
    double loss = 0.0;
    BasicModelWeights<T> grads;
};

/// Mean reconstruction loss over the whole batch and its parameter gradients.
template <typename T>
LossAndGrads<T> loss_and_grads(const BasicModelWeights<T>& w, const BasicTensor<T>& lr_batch,
                               const BasicTensor<T>& hr_batch, LossKind kind = LossKind::L1) {
    lr_batch.require_rank(4, "loss_and_grads");
    hr_batch.require_rank(4, "loss_and_grads");
    const ModelConfig c = infer_config(w);
    if (hr_batch.dim(0) != lr_batch.dim(0) || hr_batch.dim(1) != lr_batch.dim(1) ||
        hr_batch.dim(2) != lr_batch.dim(2) * c.scale || hr_batch.dim(3) != lr_batch.dim(3) * c.scale) {
        throw InvalidArgument("loss_and_grads: HR batch " + shape_string(hr_batch.shape()) + " is not " +
                              std::to_string(c.scale) + "x the LR batch " + shape_string(lr_batch.shape()));
    }
    const std::size_t batch = lr_batch.dim(0);
    std::vector<ForwardTrace<T>> traces(batch);
    BasicTensor<T> pred(hr_batch.shape());
    for (std::size_t b = 0; b < batch; ++b) pred.set_sample(b, forward_image(w, c, lr_batch.sample(b), &traces[b]));
    auto loss = reconstruction_loss(kind, pred, hr_batch);
    LossAndGrads<T> res{loss.loss, w.zeros_like()};
    for (std::size_t b = 0; b < batch; ++b) backward_image(w, c, traces[b], loss.grad.sample(b), res.grads);
    return res;
}

} // namespace fedsr
