#pragma once

// Client shards: each client gets exactly one degradation type and an exclusive
// set of image ids. Per-type image counts follow either a uniform split or a
// Dirichlet draw over the four degradation types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsr/degradation.hpp"
#include "fedsr/rng.hpp"

namespace fedsr {

struct DirichletParams {
    std::vector<double> alpha = std::vector<double>(4, 0.5);
};

/// Normalized Gamma(alpha_i, 1) variates.
inline std::vector<double> sample_dirichlet(const DirichletParams& params, RngStream& rng) {
    if (params.alpha.empty()) throw InvalidArgument("sample_dirichlet: empty concentration vector");
    for (double a : params.alpha)
        if (!(a > 0.0)) throw InvalidArgument("sample_dirichlet: concentrations must be positive");
    std::vector<double> g(params.alpha.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = rng.gamma(params.alpha[i]);
        sum += g[i];
    }
    if (!(sum > 0.0)) {
        // every variate underflowed; only reachable for extremely small alpha
        throw InvalidArgument("sample_dirichlet: all gamma variates underflowed");
    }
    for (auto& v : g) v /= sum;
    return g;
}

/// Client i gets type i mod 4 in the order clean, blur, noise, jpeg.
inline std::vector<DegradationType> assign_degradation_types(std::size_t num_clients) {
    std::vector<DegradationType> out(num_clients);
    for (std::size_t i = 0; i < num_clients; ++i) out[i] = kDegradationTypes[i % 4];
    return out;
}

/// Integer counts summing to `total`: floors of p_i * total, then the leftover
/// units go to the largest fractional remainders (lowest index on ties).
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& proportions, std::size_t total) {
    const double psum = std::accumulate(proportions.begin(), proportions.end(), 0.0);
    if (!(psum > 0.0)) throw InvalidArgument("largest_remainder: proportions must have a positive sum");
    std::vector<std::size_t> counts(proportions.size());
    std::vector<double> rem(proportions.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < proportions.size(); ++i) {
        const double exact = proportions[i] / psum * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(proportions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) counts[order[k % order.size()]] += 1;
    return counts;
}

struct ClientShard {
    std::size_t client_id = 0;
    DegradationType type = DegradationType::Clean;
    std::vector<std::string> image_ids;

    friend bool operator==(const ClientShard&, const ClientShard&) = default;
};

struct PartitionPlan {
    std::uint64_t master_seed = 0;
    std::vector<double> proportions; // per degradation type, as sampled or configured
    std::vector<ClientShard> clients;

    friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

/// How per-type shares are chosen.
struct PartitionMode {
    enum Kind { Uniform, Dirichlet, Fixed } kind = Uniform;
    DirichletParams dirichlet;
    std::vector<double> proportions; // Fixed only

    static PartitionMode uniform() { return {}; }
    static PartitionMode with_dirichlet(DirichletParams p) { return {Dirichlet, std::move(p), {}}; }
    static PartitionMode fixed(std::vector<double> p) { return {Fixed, {}, std::move(p)}; }
};

/// Training-distribution presets (clean, blur, noise, jpeg shares).
inline const std::map<std::string, std::vector<double>>& distribution_presets() {
    static const std::map<std::string, std::vector<double>> presets{
        {"few_clean_or_blur", {0.05, 0.05, 0.45, 0.45}},
        {"few_noise", {0.3, 0.3, 0.05, 0.35}},
        {"few_jpeg", {0.3, 0.3, 0.35, 0.05}},
        {"few_jpeg_many_noise", {0.2, 0.2, 0.55, 0.05}},
        {"few_clean_many_blur", {0.05, 0.55, 0.2, 0.2}},
    };
    return presets;
}

/// Shuffles the ids, splits them into per-type blocks by largest-remainder
/// rounding, and deals each block evenly over that type's clients (remainder
/// to the lowest client ids). Types without clients are dropped and the
/// remaining shares renormalized, so the shards always cover every image.
///
/// Stream use: the Dirichlet draw (if any) comes first, then a Fisher-Yates shuffle.
inline PartitionPlan build_partition(const std::vector<std::string>& image_ids, std::size_t num_clients,
                                     const PartitionMode& mode, RngStream& rng, std::uint64_t master_seed = 0) {
    if (num_clients == 0) throw InvalidArgument("build_partition: need at least one client");
    if (image_ids.size() < num_clients) {
        throw InvalidArgument("build_partition: " + std::to_string(image_ids.size()) + " images for " +
                              std::to_string(num_clients) + " clients");
    }
    PartitionPlan plan;
    plan.master_seed = master_seed;
    switch (mode.kind) {
    case PartitionMode::Uniform: plan.proportions.assign(4, 0.25); break;
    case PartitionMode::Dirichlet:
        if (mode.dirichlet.alpha.size() != 4) throw InvalidArgument("build_partition: Dirichlet needs 4 concentrations");
        plan.proportions = sample_dirichlet(mode.dirichlet, rng);
        break;
    case PartitionMode::Fixed:
        if (mode.proportions.size() != 4) throw InvalidArgument("build_partition: need 4 proportions");
        for (double p : mode.proportions)
            if (!(p >= 0.0)) throw InvalidArgument("build_partition: proportions must be non-negative");
        plan.proportions = mode.proportions;
        break;
    }

    std::vector<std::string> ids = image_ids;
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.index(i)]);

    const auto types = assign_degradation_types(num_clients);
    std::array<std::vector<std::size_t>, 4> clients_of{};
    for (std::size_t c = 0; c < num_clients; ++c) clients_of[static_cast<std::size_t>(types[c])].push_back(c);

    std::vector<double> active(4, 0.0);
    for (std::size_t t = 0; t < 4; ++t)
        if (!clients_of[t].empty()) active[t] = plan.proportions[t];
    if (std::accumulate(active.begin(), active.end(), 0.0) <= 0.0) {
        throw InfeasiblePartition("build_partition: no share left for any client type", to_string(types[0]));
    }
    const auto counts = largest_remainder(active, ids.size());

    plan.clients.resize(num_clients);
    std::size_t cursor = 0;
    for (std::size_t t = 0; t < 4; ++t) {
        const auto& members = clients_of[t];
        if (members.empty()) continue;
        const std::string tname = to_string(kDegradationTypes[t]);
        if (counts[t] < members.size()) {
            throw InfeasiblePartition("build_partition: type '" + tname + "' has " + std::to_string(members.size()) +
                                          " clients but only " + std::to_string(counts[t]) + " images",
                                      tname);
        }
        const std::size_t base = counts[t] / members.size();
        const std::size_t extra = counts[t] % members.size();
        for (std::size_t k = 0; k < members.size(); ++k) {
            const std::size_t n = base + (k < extra ? 1 : 0);
            ClientShard& shard = plan.clients[members[k]];
            shard.client_id = members[k];
            shard.type = kDegradationTypes[t];
            shard.image_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(cursor),
                                   ids.begin() + static_cast<std::ptrdiff_t>(cursor + n));
            cursor += n;
        }
    }
    return plan;
}

inline nlohmann::json partition_to_json(const PartitionPlan& p) {
    nlohmann::json j;
    j["master_seed"] = p.master_seed;
    j["proportions"] = p.proportions;
    j["clients"] = nlohmann::json::array();
    for (const auto& c : p.clients)
        j["clients"].push_back({{"id", c.client_id}, {"type", to_string(c.type)}, {"image_ids", c.image_ids}});
    return j;
}

inline PartitionPlan partition_from_json(const nlohmann::json& j) {
    PartitionPlan p;
    try {
        p.master_seed = j.at("master_seed").get<std::uint64_t>();
        p.proportions = j.at("proportions").get<std::vector<double>>();
        for (const auto& c : j.at("clients")) {
            p.clients.push_back({c.at("id").get<std::size_t>(), degradation_type_from_string(c.at("type").get<std::string>()),
                                 c.at("image_ids").get<std::vector<std::string>>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("partition: malformed JSON: ") + e.what());
    }
    return p;
}

/// Checks exclusivity and coverage against the full id list.
inline void validate_partition(const PartitionPlan& p, const std::vector<std::string>& all_ids) {
    std::vector<std::string> seen;
    for (std::size_t i = 0; i < p.clients.size(); ++i) {
        if (p.clients[i].client_id != i) throw InvalidArgument("partition: client ids must be 0..N-1 in order");
        if (p.clients[i].image_ids.empty()) throw InvalidArgument("partition: client " + std::to_string(i) + " has no images");
        seen.insert(seen.end(), p.clients[i].image_ids.begin(), p.clients[i].image_ids.end());
    }
    std::vector<std::string> expect = all_ids;
    std::sort(seen.begin(), seen.end());
    std::sort(expect.begin(), expect.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) throw InvalidArgument("partition: shards overlap");
    if (seen != expect) throw InvalidArgument("partition: shards do not cover the dataset exactly");
}

/// Agglomerative clustering with average linkage on Euclidean distances until
/// `k` clusters remain. The closest pair is merged; ties go to the pair whose
/// (smaller row index, larger row index) representatives come first. Labels are
/// numbered by first appearance in row order.
inline std::vector<std::size_t> cluster_result_rows(const std::vector<std::vector<double>>& rows, std::size_t k) {
    if (k < 1) throw InvalidArgument("cluster_result_rows: k must be at least 1");
    const std::size_t n = rows.size();
    if (k > n) throw InvalidArgument("cluster_result_rows: k exceeds the number of rows");
    for (const auto& r : rows)
        if (r.size() != rows.front().size()) throw InvalidArgument("cluster_result_rows: ragged rows");

    // Clusters are identified by their smallest member row; dist is kept for
    // live representatives only and updated with the Lance-Williams rule.
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < rows[i].size(); ++d) s += (rows[i][d] - rows[j][d]) * (rows[i][d] - rows[j][d]);
            dist[i][j] = dist[j][i] = std::sqrt(s);
        }
    std::vector<std::size_t> owner(n), size(n, 1);
    std::iota(owner.begin(), owner.end(), 0);
    std::vector<bool> live(n, true);
    for (std::size_t clusters = n; clusters > k; --clusters) {
        std::size_t bi = 0, bj = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (!live[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!live[j]) continue;
                if (dist[i][j] < best) {
                    best = dist[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        for (std::size_t m = 0; m < n; ++m) {
            if (!live[m] || m == bi || m == bj) continue;
            const double d = (static_cast<double>(size[bi]) * dist[bi][m] + static_cast<double>(size[bj]) * dist[bj][m]) /
                             static_cast<double>(size[bi] + size[bj]);
            dist[bi][m] = dist[m][bi] = d;
        }
        size[bi] += size[bj];
        live[bj] = false;
        for (auto& o : owner)
            if (o == bj) o = bi;
    }
    std::vector<std::size_t> labels(n);
    std::map<std::size_t, std::size_t> relabel;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = relabel.try_emplace(owner[i], relabel.size());
        labels[i] = it->second;
    }
    return labels;
}

} // namespace fedsr
