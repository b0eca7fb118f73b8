#include <catch_amalgamated.hpp>

#include <cmath>

#include "fedsr/degradation.hpp"
#include "fedsr/model.hpp"
#include "fedsr/optim.hpp"
#include "fedsr/synthetic.hpp"
#include "support/oracles.hpp"

using namespace fedsr;

namespace {

const ModelConfig kTiny{2, 1, 2, 3};

Tensor lr_batch_of(std::size_t n, std::size_t hr_size, std::size_t scale, std::uint64_t seed, Tensor* hr_out = nullptr) {
    std::vector<Tensor> lr, hr;
    for (const auto& rec : synthetic_corpus(n, hr_size, hr_size, seed)) {
        lr.push_back(downsample_bicubic(rec.hr, scale));
        hr.push_back(rec.hr);
    }
    if (hr_out) *hr_out = stack<float>(hr);
    return stack<float>(lr);
}

} // namespace

TEST_CASE("init is deterministic and seed dependent") {
    CHECK(init_weights(kTiny, 5) == init_weights(kTiny, 5));
    CHECK_FALSE(init_weights(kTiny, 5) == init_weights(kTiny, 6));
}

TEST_CASE("init follows the fan-in normal rule") {
    const ModelWeights w = init_weights(ModelConfig{64, 1, 2, 3}, 0);
    const auto& k = w.get("block0.conv1.kernel");
    REQUIRE(k.shape() == Shape{64, 64, 3, 3});
    double s = 0, s2 = 0;
    for (float v : k.values()) s += v, s2 += static_cast<double>(v) * v;
    const double n = static_cast<double>(k.size());
    const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
    CHECK(std::abs(sd / std::sqrt(2.0 / 576.0) - 1.0) < 0.10);
    for (float v : w.get("head.bias").values()) CHECK(v == 0.0f);
    for (float v : w.get("block0.prelu.slope").values()) CHECK(v == 0.25f);
}

TEST_CASE("parameter names follow the configuration") {
    const ModelWeights w = init_weights(ModelConfig{4, 2, 4, 3}, 0);
    std::vector<std::string> names;
    for (const auto& e : w) names.push_back(e.name);
    const std::vector<std::string> expected{
        "head.kernel",         "head.bias",          "block0.conv1.kernel", "block0.conv1.bias", "block0.prelu.slope",
        "block0.conv2.kernel", "block0.conv2.bias",  "block1.conv1.kernel", "block1.conv1.bias", "block1.prelu.slope",
        "block1.conv2.kernel", "block1.conv2.bias",  "body.kernel",         "body.bias",         "up0.kernel",
        "up0.bias",            "up0.prelu.slope",    "up1.kernel",          "up1.bias",          "up1.prelu.slope",
        "tail.kernel",         "tail.bias"};
    CHECK(names == expected);
    CHECK(w.get("up0.kernel").shape() == Shape{16, 4, 3, 3});
    CHECK(infer_config(w) == ModelConfig{4, 2, 4, 3});
}

TEST_CASE("presets") {
    const auto big = init_weights(model_preset("srresnet"), 0);
    CHECK(std::abs(static_cast<double>(big.parameter_count()) / 1.5e6 - 1.0) < 0.05);
    CHECK(model_preset("desk") == ModelConfig{8, 1, 2, 3});
    CHECK_THROWS_AS(model_preset("rrdb"), InvalidArgument);
    CHECK_THROWS_AS(model_preset("nope"), InvalidArgument);
    CHECK_THROWS_AS((ModelConfig{4, 1, 3, 3}.validate()), InvalidArgument);
    CHECK_THROWS_AS((ModelConfig{0, 1, 2, 3}.validate()), InvalidArgument);
}

TEST_CASE("forward shape contract") {
    const ModelWeights w = init_weights(ModelConfig{4, 1, 4, 3}, 1);
    const Tensor out = forward(w, Tensor({1, 3, 16, 16}, 0.5f));
    CHECK(out.shape() == Shape{1, 3, 64, 64});
    CHECK_THROWS_AS(forward(w, Tensor({1, 2, 16, 16})), InvalidArgument);
}

TEST_CASE("zero weights give zero output") {
    const ModelWeights w = init_weights(kTiny, 1).zeros_like();
    const Tensor out = forward(w, oracle::random_tensor({2, 3, 5, 5}, 2, 0, 1));
    for (float v : out.values()) CHECK(v == 0.0f);
}

TEST_CASE("forward is batch-order equivariant") {
    const ModelWeights w = init_weights(kTiny, 3);
    const Tensor a = oracle::random_tensor({1, 3, 6, 6}, 4, 0, 1).sample(0);
    const Tensor b = oracle::random_tensor({1, 3, 6, 6}, 5, 0, 1).sample(0);
    const Tensor ab = forward(w, stack<float>(std::vector<Tensor>{a, b}));
    const Tensor ba = forward(w, stack<float>(std::vector<Tensor>{b, a}));
    CHECK(ab.sample(0) == ba.sample(1));
    CHECK(ab.sample(1) == ba.sample(0));
}

TEST_CASE("full model gradient passes finite differences") {
    for (LossKind kind : {LossKind::L1, LossKind::MSE}) {
        BasicModelWeights<double> w = init_weights(kTiny, 7).cast<double>();
        // Non-trivial biases and slopes so every path carries gradient.
        RngStream rng = RngStream::from_seed(8);
        for (auto& e : w)
            if (e.name.find("bias") != std::string::npos || e.name.find("slope") != std::string::npos)
                for (auto& v : e.tensor.values()) v += rng.uniform(-0.2, 0.2);
        const BasicTensor<double> lr = oracle::random_tensor({2, 3, 4, 4}, 9, 0, 1).cast<double>();
        const BasicTensor<double> hr = oracle::random_tensor({2, 3, 8, 8}, 10, 0, 1).cast<double>();
        const auto lg = loss_and_grads(w, lr, hr, kind);
        double worst = 0.0;
        for (std::size_t e = 0; e < w.size(); ++e)
            for (std::size_t i = 0; i < w[e].tensor.size(); ++i) {
                const double num = oracle::central_difference(w[e].tensor, i, 1e-6,
                                                              [&] { return loss_and_grads(w, lr, hr, kind).loss; });
                worst = std::max(worst, oracle::rel_err(lg.grads[e].tensor[i], num, 1e-6));
            }
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("float gradients agree with the double instantiation") {
    const ModelWeights w = init_weights(kTiny, 11);
    const Tensor lr = oracle::random_tensor({2, 3, 4, 4}, 12, 0, 1);
    const Tensor hr = oracle::random_tensor({2, 3, 8, 8}, 13, 0, 1);
    const auto f = loss_and_grads(w, lr, hr, LossKind::MSE);
    const auto d = loss_and_grads(w.cast<double>(), lr.cast<double>(), hr.cast<double>(), LossKind::MSE);
    for (std::size_t e = 0; e < w.size(); ++e)
        for (std::size_t i = 0; i < w[e].tensor.size(); ++i)
            CHECK(oracle::rel_err(f.grads[e].tensor[i], d.grads[e].tensor[i]) < 1e-3);
}

TEST_CASE("perfect prediction gives zero loss and gradient") {
    const ModelWeights w = init_weights(kTiny, 14);
    const Tensor lr = oracle::random_tensor({2, 3, 4, 4}, 15, 0, 1);
    const auto lg = loss_and_grads(w, lr, forward(w, lr));
    CHECK(lg.loss == 0.0);
    for (const auto& e : lg.grads)
        for (float v : e.tensor.values()) CHECK(v == 0.0f);
}

TEST_CASE("duplicated sample has the single-sample loss") {
    const ModelWeights w = init_weights(kTiny, 16);
    const Tensor lr = oracle::random_tensor({1, 3, 4, 4}, 17, 0, 1);
    const Tensor hr = oracle::random_tensor({1, 3, 8, 8}, 18, 0, 1);
    const Tensor lr2 = stack<float>(std::vector<Tensor>{lr.sample(0), lr.sample(0)});
    const Tensor hr2 = stack<float>(std::vector<Tensor>{hr.sample(0), hr.sample(0)});
    CHECK(loss_and_grads(w, lr2, hr2).loss == Catch::Approx(loss_and_grads(w, lr, hr).loss).epsilon(1e-12));
}

TEST_CASE("loss_and_grads checks batch dimensions") {
    const ModelWeights w = init_weights(kTiny, 19);
    CHECK_THROWS_AS(loss_and_grads(w, Tensor({1, 3, 4, 4}), Tensor({1, 3, 4, 4})), InvalidArgument);
    CHECK_THROWS_AS(loss_and_grads(w, Tensor({2, 3, 4, 4}), Tensor({1, 3, 8, 8})), InvalidArgument);
}

TEST_CASE("one adam step lowers the batch loss") {
    int decreased = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ModelWeights w = init_weights(model_preset("desk"), seed);
        Tensor hr;
        const Tensor lr = lr_batch_of(2, 16, 2, seed, &hr);
        const auto before = loss_and_grads(w, lr, hr);
        AdamState st(w, {});
        adam_step(w, before.grads, st);
        if (loss_and_grads(w, lr, hr).loss < before.loss) ++decreased;
    }
    CHECK(decreased >= 19);
}
