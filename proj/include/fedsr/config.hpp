#pragma once

// Experiment configuration file. Every section is optional; missing keys take
// their defaults and unknown keys are rejected. resolved_config_json() emits
// the fully populated document that is copied into each run directory.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsr/federation.hpp"

namespace fedsr {

struct DataConfig {
    std::string hr_dir;
    std::size_t patch = 128;
    std::size_t stride = 64;
};

struct PartitionConfig {
    std::string mode = "uniform"; // uniform | dirichlet | <preset name>
    std::vector<double> alpha = std::vector<double>(4, 0.5);
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    DataConfig data;
    std::optional<std::string> model_preset;
    TrainConfig train;
    double lr = 2e-4; // as written in the file; train.lr is its float rounding
    std::size_t checkpoint_every = 0; // 0: final round only
    std::size_t num_clients = 16;
    PartitionConfig partition;
    TestParams test_params;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items())
        if (!allowed.count(k)) throw InvalidArgument("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline ParamRange read_range(const nlohmann::json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 2) throw InvalidArgument("config: '" + where + "' must be [lo, hi]");
    ParamRange r{v[0].get<double>(), v[1].get<double>()};
    if (r.lo > r.hi) throw InvalidArgument("config: '" + where + "' has lo > hi");
    return r;
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    using detail::read_opt;
    using detail::reject_unknown;
    ExperimentConfig c;
    try {
        reject_unknown(j, "", {"seed", "data", "model", "train", "federation", "partition", "degradation"});
        read_opt(j, "seed", c.seed);
        if (j.contains("data")) {
            const auto& d = j["data"];
            reject_unknown(d, "data", {"hr_dir", "patch", "stride"});
            read_opt(d, "hr_dir", c.data.hr_dir);
            read_opt(d, "patch", c.data.patch);
            read_opt(d, "stride", c.data.stride);
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            reject_unknown(m, "model", {"preset", "features", "blocks", "scale"});
            if (m.contains("preset") && !m["preset"].is_null()) {
                c.model_preset = m["preset"].get<std::string>();
                c.train.model = model_preset(*c.model_preset);
            }
            read_opt(m, "features", c.train.model.features);
            read_opt(m, "blocks", c.train.model.blocks);
            read_opt(m, "scale", c.train.model.scale);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            reject_unknown(t, "train", {"rounds", "local_epochs", "batch_size", "lr", "loss", "checkpoint_every"});
            read_opt(t, "rounds", c.train.rounds);
            read_opt(t, "local_epochs", c.train.local_epochs);
            read_opt(t, "batch_size", c.train.batch_size);
            read_opt(t, "lr", c.lr);
            read_opt(t, "checkpoint_every", c.checkpoint_every);
            if (t.contains("loss")) {
                const auto loss = t["loss"].get<std::string>();
                if (loss == "l1") c.train.loss = LossKind::L1;
                else if (loss == "mse") c.train.loss = LossKind::MSE;
                else throw InvalidArgument("config: train.loss must be 'l1' or 'mse'");
            }
        }
        if (j.contains("federation")) {
            const auto& f = j["federation"];
            reject_unknown(f, "federation", {"num_clients", "aggregate"});
            read_opt(f, "num_clients", c.num_clients);
            if (f.contains("aggregate")) {
                const auto a = f["aggregate"].get<std::string>();
                if (a == "weighted") c.train.aggregate = AggregateMode::Weighted;
                else if (a == "uniform") c.train.aggregate = AggregateMode::Uniform;
                else throw InvalidArgument("config: federation.aggregate must be 'weighted' or 'uniform'");
            }
        }
        if (j.contains("partition")) {
            const auto& p = j["partition"];
            reject_unknown(p, "partition", {"mode", "alpha"});
            read_opt(p, "mode", c.partition.mode);
            read_opt(p, "alpha", c.partition.alpha);
        }
        if (j.contains("degradation")) {
            const auto& d = j["degradation"];
            reject_unknown(d, "degradation", {"ranges", "test_params"});
            if (d.contains("ranges")) {
                const auto& r = d["ranges"];
                reject_unknown(r, "degradation.ranges", {"blur_sigma", "noise_sigma", "jpeg_quality"});
                if (r.contains("blur_sigma")) c.train.ranges.blur_sigma = detail::read_range(r["blur_sigma"], "blur_sigma");
                if (r.contains("noise_sigma")) c.train.ranges.noise_sigma = detail::read_range(r["noise_sigma"], "noise_sigma");
                if (r.contains("jpeg_quality")) c.train.ranges.jpeg_quality = detail::read_range(r["jpeg_quality"], "jpeg_quality");
            }
            if (d.contains("test_params")) {
                const auto& t = d["test_params"];
                reject_unknown(t, "degradation.test_params", {"blur_sigma", "noise_sigma", "jpeg_quality"});
                read_opt(t, "blur_sigma", c.test_params.blur_sigma);
                read_opt(t, "noise_sigma", c.test_params.noise_sigma);
                read_opt(t, "jpeg_quality", c.test_params.jpeg_quality);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }

    c.train.lr = static_cast<float>(c.lr);
    c.train.seed = c.seed;
    c.train.patch_size = c.data.patch;
    c.train.validate();
    if (c.data.stride == 0) throw InvalidArgument("config: data.stride must be positive");
    if (c.num_clients == 0) throw InvalidArgument("config: federation.num_clients must be positive");
    const auto& m = c.partition.mode;
    if (m != "uniform" && m != "dirichlet" && !distribution_presets().count(m)) {
        throw InvalidArgument("config: unknown partition.mode '" + m + "'");
    }
    if (c.partition.alpha.size() != 4) throw InvalidArgument("config: partition.alpha needs 4 entries");
    if (c.test_params.jpeg_quality < 1 || c.test_params.jpeg_quality > 100) {
        throw InvalidArgument("config: test jpeg_quality must be in [1, 100]");
    }
    return c;
}

inline nlohmann::json resolved_config_json(const ExperimentConfig& c) {
    using nlohmann::json;
    const auto& t = c.train;
    json j;
    j["seed"] = c.seed;
    j["data"] = {{"hr_dir", c.data.hr_dir}, {"patch", c.data.patch}, {"stride", c.data.stride}};
    j["model"] = {{"preset", c.model_preset ? json(*c.model_preset) : json(nullptr)},
                  {"features", t.model.features},
                  {"blocks", t.model.blocks},
                  {"scale", t.model.scale}};
    j["train"] = {{"rounds", t.rounds},
                  {"local_epochs", t.local_epochs},
                  {"batch_size", t.batch_size},
                  {"lr", c.lr},
                  {"loss", t.loss == LossKind::L1 ? "l1" : "mse"},
                  {"checkpoint_every", c.checkpoint_every}};
    j["federation"] = {{"num_clients", c.num_clients},
                       {"aggregate", t.aggregate == AggregateMode::Weighted ? "weighted" : "uniform"}};
    j["partition"] = {{"mode", c.partition.mode}, {"alpha", c.partition.alpha}};
    j["degradation"] = {
        {"ranges",
         {{"blur_sigma", {t.ranges.blur_sigma.lo, t.ranges.blur_sigma.hi}},
          {"noise_sigma", {t.ranges.noise_sigma.lo, t.ranges.noise_sigma.hi}},
          {"jpeg_quality", {t.ranges.jpeg_quality.lo, t.ranges.jpeg_quality.hi}}}},
        {"test_params",
         {{"blur_sigma", c.test_params.blur_sigma},
          {"noise_sigma", c.test_params.noise_sigma},
          {"jpeg_quality", c.test_params.jpeg_quality}}}};
    return j;
}

/// Partition mode described by the config.
inline PartitionMode partition_mode(const PartitionConfig& p) {
    if (p.mode == "uniform") return PartitionMode::uniform();
    if (p.mode == "dirichlet") return PartitionMode::with_dirichlet({p.alpha});
    return PartitionMode::fixed(distribution_presets().at(p.mode));
}

} // namespace fedsr
