#pragma once

#include <cmath>
#include <cstdint>

#include "fedsr/weights.hpp"

namespace fedsr {

struct AdamConfig {
    float lr = 2e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// First/second moments aligned entry-by-entry with the parameters they track.
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    ModelWeights m;
    ModelWeights v;

    AdamState() = default;
    AdamState(const ModelWeights& params, AdamConfig cfg)
        : config(cfg), m(params.zeros_like()), v(params.zeros_like()) {}
};

/// One bias-corrected Adam update. Moments live in float; the bias-correction
/// factors are evaluated in double and rounded once.
inline void adam_step(ModelWeights& params, const ModelWeights& grads, AdamState& state) {
    params.require_schema(grads, "adam_step");
    if (state.m.empty() && state.v.empty()) {
        state.m = params.zeros_like();
        state.v = params.zeros_like();
    }
    params.require_schema(state.m, "adam_step (first moment)");
    params.require_schema(state.v, "adam_step (second moment)");

    state.step += 1;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta1), t));
    const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta2), t));
    const float one_m_b1 = 1.0f - c.beta1;
    const float one_m_b2 = 1.0f - c.beta2;

    for (std::size_t e = 0; e < params.size(); ++e) {
        auto& p = params[e].tensor;
        const auto& g = grads[e].tensor;
        auto& m = state.m[e].tensor;
        auto& v = state.v[e].tensor;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + one_m_b1 * g[i];
            v[i] = c.beta2 * v[i] + one_m_b2 * g[i] * g[i];
            const float m_hat = m[i] / bc1;
            const float v_hat = v[i] / bc2;
            p[i] = p[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

} // namespace fedsr
