#pragma once

// Synchronous federated training: every round the server broadcasts the global
// weights, every client trains locally on its own shard and degradation type,
// and the server replaces the global model with the average of the returned
// weights. A centralized run is the same loop with a single client.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedsr/degradation.hpp"
#include "fedsr/image_io.hpp"
#include "fedsr/model.hpp"
#include "fedsr/optim.hpp"
#include "fedsr/partition.hpp"

namespace fedsr {

enum class AggregateMode { Weighted, Uniform };

struct TrainConfig {
    std::size_t rounds = 200;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 16;
    float lr = 2e-4f;
    std::size_t patch_size = 128; // HR patch edge; the LR side is patch_size / scale
    LossKind loss = LossKind::L1;
    ModelConfig model;            // model.scale is the upscaling factor
    std::uint64_t seed = 0;
    AggregateMode aggregate = AggregateMode::Weighted;
    DegradationRanges ranges;

    std::size_t scale() const { return model.scale; }

    void validate() const {
        model.validate();
        if (local_epochs == 0 || batch_size == 0 || patch_size == 0) {
            throw InvalidArgument("train config: local_epochs, batch_size and patch_size must be positive");
        }
        if (!(lr >= 0.0f)) throw InvalidArgument("train config: lr must be non-negative");
        if (patch_size % model.scale != 0) throw InvalidArgument("train config: patch_size must be divisible by scale");
    }
};

/// HR training patches keyed by id.
using HrStore = std::map<std::string, Tensor>;

inline HrStore make_store(const std::vector<ImageRecord>& records) {
    HrStore s;
    for (const auto& r : records) {
        if (!s.emplace(r.id, r.hr).second) throw InvalidArgument("duplicate image id '" + r.id + "'");
    }
    return s;
}

inline std::vector<std::string> store_ids(const HrStore& s) {
    std::vector<std::string> ids;
    for (const auto& [id, t] : s) ids.push_back(id);
    return ids;
}

struct ClientState {
    std::size_t client_id = 0;
    std::optional<DegradationType> type; // nullopt: a type is drawn per image per epoch
    std::vector<std::string> shard;
};

/// Per-image type draw of a mixed-degradation client: one draw, uniform over the four types.
inline DegradationType draw_mixed_type(RngStream& rng) { return kDegradationTypes[rng.index(4)]; }

struct LocalResult {
    ModelWeights weights;
    std::size_t sample_count = 0;
    double mean_loss = 0.0;
};

/// One client's work for one round. Draws come from "client/<id>/round/<round>"
/// in this order: epoch shuffle, then per image (in batch order) an optional
/// type draw followed by the degradation draws. Adam moments start from zero.
inline LocalResult local_train(const ModelWeights& global, const ClientState& client, const TrainConfig& config,
                               std::size_t round, const HrStore& store) {
    if (client.shard.empty()) {
        throw InvalidState("local_train: client " + std::to_string(client.client_id) + " has an empty shard");
    }
    RngStream rng = derive_stream(config.seed, client_round_label(client.client_id, round));
    std::vector<std::string> order = client.shard;
    std::sort(order.begin(), order.end());

    LocalResult res{global, client.shard.size(), 0.0};
    AdamState adam(global, AdamConfig{config.lr});
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<Tensor> lr_imgs, hr_imgs;
            for (std::size_t k = start; k < end; ++k) {
                const auto it = store.find(order[k]);
                if (it == store.end()) throw InvalidArgument("local_train: unknown image id '" + order[k] + "'");
                if (it->second.dim(1) != config.patch_size || it->second.dim(2) != config.patch_size) {
                    throw InvalidArgument("local_train: image '" + order[k] + "' is not a " +
                                          std::to_string(config.patch_size) + "px training patch");
                }
                const DegradationType type = client.type ? *client.type : draw_mixed_type(rng);
                lr_imgs.push_back(degrade(it->second, train_spec(type, config.scale(), config.ranges), rng));
                hr_imgs.push_back(it->second);
            }
            const Tensor lr_batch = stack<float>(lr_imgs);
            const Tensor hr_batch = stack<float>(hr_imgs);
            auto lg = loss_and_grads(res.weights, lr_batch, hr_batch, config.loss);
            adam_step(res.weights, lg.grads, adam);
            loss_sum += lg.loss * static_cast<double>(end - start);
            seen += end - start;
        }
    }
    res.mean_loss = loss_sum / static_cast<double>(seen);
    return res;
}

struct ClientUpdate {
    std::size_t client_id = 0;
    ModelWeights weights;
    std::size_t sample_count = 0;
};

/// Per-entry weighted mean sum(n_k w_k) / sum(n_k), accumulated in double in
/// ascending client id order. Uniform mode gives every client weight 1.
inline ModelWeights fedavg_aggregate(const std::vector<ClientUpdate>& updates,
                                     AggregateMode mode = AggregateMode::Weighted) {
    if (updates.empty()) throw InvalidArgument("fedavg_aggregate: no updates");
    std::vector<std::size_t> order(updates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return updates[a].client_id < updates[b].client_id; });

    const ModelWeights& ref = updates[order.front()].weights;
    double total = 0.0;
    for (const auto& u : updates) {
        ref.require_schema(u.weights, "fedavg_aggregate");
        total += mode == AggregateMode::Weighted ? static_cast<double>(u.sample_count) : 1.0;
    }
    if (!(total > 0.0)) throw InvalidArgument("fedavg_aggregate: total sample count must be positive");

    ModelWeights out = ref.zeros_like();
    std::vector<double> acc;
    for (std::size_t e = 0; e < ref.size(); ++e) {
        acc.assign(ref[e].tensor.size(), 0.0);
        for (auto idx : order) {
            const auto& u = updates[idx];
            const double n = mode == AggregateMode::Weighted ? static_cast<double>(u.sample_count) : 1.0;
            const auto& t = u.weights[e].tensor;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += n * static_cast<double>(t[i]);
        }
        auto& o = out[e].tensor;
        for (std::size_t i = 0; i < acc.size(); ++i) o[i] = static_cast<float>(acc[i] / total);
    }
    return out;
}

struct ClientRoundStat {
    std::size_t client_id = 0;
    std::size_t sample_count = 0;
    double mean_loss = 0.0;
};

struct RoundReport {
    std::size_t round = 0;
    std::vector<ClientRoundStat> clients;
    double global_loss = 0.0; // sample-weighted mean of the client losses of this round
};

struct RunOptions {
    std::size_t workers = 1;
    /// Called after each aggregation with the new global weights.
    std::function<void(const RoundReport&, const ModelWeights&)> on_round;
};

struct RunResult {
    ModelWeights weights;
    std::vector<RoundReport> reports;
};

namespace detail {

inline RunResult run_rounds(const std::vector<ClientState>& clients, const TrainConfig& config, const HrStore& store,
                            const RunOptions& options) {
    config.validate();
    if (clients.empty()) throw InvalidArgument("run: no clients");
    RunResult result{init_weights(config.model, config.seed), {}};
    const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, clients.size());

    for (std::size_t round = 1; round <= config.rounds; ++round) {
        std::vector<std::optional<LocalResult>> local(clients.size());
        std::vector<std::exception_ptr> errors(clients.size());
        auto work = [&](std::size_t w) {
            for (std::size_t c = w; c < clients.size(); c += workers) {
                try {
                    local[c] = local_train(result.weights, clients[c], config, round, store);
                } catch (...) {
                    errors[c] = std::current_exception();
                }
            }
        };
        if (workers == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);

        RoundReport report;
        report.round = round;
        std::vector<ClientUpdate> updates;
        double loss_sum = 0.0;
        std::size_t n_sum = 0;
        for (std::size_t c = 0; c < clients.size(); ++c) {
            report.clients.push_back({clients[c].client_id, local[c]->sample_count, local[c]->mean_loss});
            loss_sum += local[c]->mean_loss * static_cast<double>(local[c]->sample_count);
            n_sum += local[c]->sample_count;
            updates.push_back({clients[c].client_id, std::move(local[c]->weights), local[c]->sample_count});
        }
        report.global_loss = loss_sum / static_cast<double>(n_sum);
        result.weights = fedavg_aggregate(updates, config.aggregate);
        if (options.on_round) options.on_round(report, result.weights);
        result.reports.push_back(std::move(report));
    }
    return result;
}

} // namespace detail

inline std::vector<ClientState> clients_from_plan(const PartitionPlan& plan) {
    std::vector<ClientState> clients;
    for (const auto& c : plan.clients) clients.push_back({c.client_id, c.type, c.image_ids});
    return clients;
}

inline RunResult run_federated(const PartitionPlan& plan, const TrainConfig& config, const HrStore& store,
                               const RunOptions& options = {}) {
    for (const auto& c : plan.clients)
        if (c.image_ids.empty()) throw InvalidArgument("run_federated: client " + std::to_string(c.client_id) + " has no images");
    return detail::run_rounds(clients_from_plan(plan), config, store, options);
}

/// One client holding every image; `type` nullopt draws a type per image per epoch.
inline RunResult run_centralized(const TrainConfig& config, const HrStore& store,
                                 std::optional<DegradationType> type, const RunOptions& options = {}) {
    if (store.empty()) throw InvalidArgument("run_centralized: empty dataset");
    return detail::run_rounds({ClientState{0, type, store_ids(store)}}, config, store, options);
}

} // namespace fedsr
