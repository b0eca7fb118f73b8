// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <unistd.h>

#include "fedsr/fedsr.hpp"
#include "support/oracles.hpp"

using namespace fedsr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path scratch(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("fedsr_accept_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// 1 ---------------------------------------------------------------------------

constexpr double kFdStep = 1e-6, kFdTol = 1e-3, kFdFloor = 1e-6;
using DTensor = BasicTensor<double>;

double worst_fd(DTensor& x, const DTensor& analytic, const std::function<double()>& f) {
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        worst = std::max(worst, oracle::rel_err(analytic[i], oracle::central_difference(x, i, kFdStep, f), kFdFloor));
    return worst;
}

Outcome gradient_integrity() {
    const auto t0 = Clock::now();
    auto drand = [](Shape s, std::uint64_t seed) { return oracle::random_tensor(std::move(s), seed).cast<double>(); };
    double worst = 0;

    DTensor x = drand({2, 4, 5}, 1), k = drand({3, 2, 3, 3}, 2), b = drand({3}, 3);
    const DTensor r = drand({3, 4, 5}, 4);
    auto conv = [&] { return oracle::dot(conv2d_forward(x, k, b), r); };
    const auto gc = conv2d_backward(x, k, r);
    worst = std::max({worst, worst_fd(x, gc.input, conv), worst_fd(k, gc.kernel, conv), worst_fd(b, gc.bias, conv)});

    DTensor px = drand({3, 4, 4}, 5), slope({3}, 0.25);
    const DTensor pr = drand({3, 4, 4}, 6);
    auto prelu = [&] { return oracle::dot(prelu_forward(px, slope), pr); };
    const auto gp = prelu_backward(px, slope, pr);
    worst = std::max({worst, worst_fd(px, gp.input, prelu), worst_fd(slope, gp.slope, prelu)});

    DTensor sx = drand({8, 2, 3}, 7);
    const DTensor sr = drand({2, 4, 6}, 8);
    worst = std::max(worst, worst_fd(sx, pixel_shuffle_backward(sr, 2), [&] { return oracle::dot(pixel_shuffle(sx, 2), sr); }));

    DTensor pred = drand({2, 3, 3}, 9);
    const DTensor target = drand({2, 3, 3}, 10);
    worst = std::max(worst, worst_fd(pred, l1_loss(pred, target).grad, [&] { return l1_loss(pred, target).loss; }));
    worst = std::max(worst, worst_fd(pred, mse_loss(pred, target).grad, [&] { return mse_loss(pred, target).loss; }));

    for (LossKind kind : {LossKind::L1, LossKind::MSE}) {
        BasicModelWeights<double> w = init_weights(ModelConfig{2, 1, 2, 3}, 11).cast<double>();
        RngStream rng = RngStream::from_seed(12);
        for (auto& e : w)
            if (e.name.find("bias") != std::string::npos || e.name.find("slope") != std::string::npos)
                for (auto& v : e.tensor.values()) v += rng.uniform(-0.2, 0.2);
        const DTensor lr = oracle::random_tensor({2, 3, 4, 4}, 13, 0, 1).cast<double>();
        const DTensor hr = oracle::random_tensor({2, 3, 8, 8}, 14, 0, 1).cast<double>();
        const auto lg = loss_and_grads(w, lr, hr, kind);
        for (std::size_t e = 0; e < w.size(); ++e)
            worst = std::max(worst, worst_fd(w[e].tensor, lg.grads[e].tensor, [&] { return loss_and_grads(w, lr, hr, kind).loss; }));
    }
    const double secs = seconds_since(t0);
    return {worst < kFdTol && secs < 10.0, fmt("worst relative error %.2e, %.2f s", worst, secs)};
}

// 2 ---------------------------------------------------------------------------

Outcome fedavg_oracle() {
    const ModelWeights base = init_weights(ModelConfig{2, 1, 2, 3}, 21);
    RngStream r = RngStream::from_seed(22);
    std::vector<ClientUpdate> ups;
    for (std::size_t c = 0; c < 3; ++c) {
        ModelWeights w = base;
        for (auto& e : w)
            for (auto& v : e.tensor.values()) v = static_cast<float>(r.uniform(-1, 1));
        ups.push_back({c, std::move(w), 1 + r.index(100)});
    }
    const ModelWeights out = fedavg_aggregate(ups);
    double total = 0;
    for (const auto& u : ups) total += static_cast<double>(u.sample_count);
    std::size_t mismatches = 0;
    for (std::size_t e = 0; e < out.size(); ++e)
        for (std::size_t i = 0; i < out[e].tensor.size(); ++i) {
            double s = 0;
            for (const auto& u : ups) s += static_cast<double>(u.sample_count) * u.weights[e].tensor[i];
            mismatches += out[e].tensor[i] != static_cast<float>(s / total);
        }
    const bool identical = fedavg_aggregate({{0, base, 3}, {1, base, 7}, {2, base, 1}}) == base;
    return {mismatches == 0 && identical, fmt("%zu mismatched entries, identical-input %s", mismatches, identical ? "bit-exact" : "differs")};
}

// 3, 4 ------------------------------------------------------------------------

TrainConfig small_config(std::size_t rounds) {
    TrainConfig c;
    c.rounds = rounds;
    c.batch_size = 2;
    c.patch_size = 16;
    c.lr = 1e-3f;
    c.model = ModelConfig{4, 1, 2, 3};
    c.seed = 31;
    return c;
}

Outcome protocol_degeneracy() {
    const TrainConfig c = small_config(10);
    const HrStore store = make_store(synthetic_corpus(6, 16, 16, 32));
    RngStream r = derive_stream(c.seed, kPartitionLabel);
    const auto fl = run_federated(build_partition(store_ids(store), 1, PartitionMode::uniform(), r, c.seed), c, store);
    const auto central = run_centralized(c, store, DegradationType::Clean);
    const bool same = fl.weights == central.weights && fl.reports.size() == 10;
    return {same, same ? "10 rounds bit-identical" : "weights differ"};
}

Outcome scheduling_invariance() {
    const TrainConfig c = small_config(1);
    const HrStore store = make_store(synthetic_corpus(16, 16, 16, 41));
    RngStream r = derive_stream(c.seed, kPartitionLabel);
    const auto plan = build_partition(store_ids(store), 8, PartitionMode::uniform(), r, c.seed);
    RunOptions one, eight;
    one.workers = 1;
    eight.workers = 8;
    const bool same = run_federated(plan, c, store, one).weights == run_federated(plan, c, store, eight).weights;
    return {same, same ? "workers 1 and 8 bit-identical" : "weights differ"};
}

// 5 ---------------------------------------------------------------------------

Outcome dirichlet_statistics() {
    RngStream r = derive_stream(0, kPartitionLabel);
    const int n = 10000;
    std::vector<double> mean(4, 0.0);
    double worst_sum = 0;
    for (int i = 0; i < n; ++i) {
        const auto p = sample_dirichlet({std::vector<double>(4, 0.5)}, r);
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) mean[k] += p[k] / n, s += p[k];
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    double worst_mean = 0;
    for (double m : mean) worst_mean = std::max(worst_mean, std::abs(m - 0.25));
    return {worst_mean <= 0.02 && worst_sum <= 1e-9, fmt("max |mean-0.25| %.4f, max |sum-1| %.1e", worst_mean, worst_sum)};
}

// 6 ---------------------------------------------------------------------------

Outcome degradation_oracles() {
    const Tensor img = oracle::random_tensor({3, 9, 9}, 51, 0, 1);
    const Tensor k = gaussian_kernel(1.0);
    const Tensor blurred = apply_blur(img, k);
    const auto bref = oracle::blur(img, k);
    double blur_err = 0;
    for (std::size_t i = 0; i < blurred.size(); ++i) blur_err = std::max(blur_err, std::abs(blurred[i] - bref[i]));

    double bic_err = 0;
    const Tensor tex = oracle::random_tensor({3, 16, 12}, 52, 0, 1);
    for (int s : {2, 4}) {
        const Tensor out = downsample_bicubic(tex, static_cast<std::size_t>(s));
        const auto ref = oracle::bicubic_downsample(tex, s);
        for (std::size_t i = 0; i < out.size(); ++i) bic_err = std::max(bic_err, std::abs(out[i] - ref[i]));
    }

    std::vector<Tensor> textures;
    for (std::uint64_t s = 0; s < 4; ++s) textures.push_back(oracle::random_tensor({3, 32, 32}, 53 + s, 0, 1));
    auto mean_psnr = [&](int q) {
        double m = 0;
        for (const auto& t : textures) m += psnr(jpeg_roundtrip(t, q), t) / static_cast<double>(textures.size());
        return m;
    };
    const double q100 = mean_psnr(100);
    bool monotone = true;
    double prev = 0;
    std::string sweep;
    for (int q : {10, 30, 50, 70, 90}) {
        const double p = mean_psnr(q);
        monotone = monotone && p >= prev;
        prev = p;
        sweep += fmt(" %.2f", p);
    }
    const Tensor gray({3, 16, 16}, 128.0f / 255.0f);
    bool gray_exact = true;
    for (int q : {1, 50, 100}) gray_exact = gray_exact && jpeg_roundtrip(gray, q) == gray;

    const bool pass = blur_err <= 1e-5 && bic_err <= 1e-5 && q100 >= 40.0 && gray_exact && monotone;
    return {pass, fmt("blur %.1e, bicubic %.1e, jpeg q100 %.2f dB, gray %s, q sweep%s", blur_err, bic_err, q100,
                      gray_exact ? "exact" : "inexact", sweep.c_str())};
}

// 7 ---------------------------------------------------------------------------

Outcome psnr_formula() {
    const Tensor a = oracle::random_tensor({3, 8, 8}, 61, 0, 1);
    const double same = psnr(a, a);
    const double zero = psnr(Tensor({3, 8, 8}, 0.0f), Tensor({3, 8, 8}, 1.0f));
    const double off = psnr(Tensor({3, 8, 8}, 0.5f), Tensor({3, 8, 8}, 0.5f + 1.0f / 255.0f));
    return {same == 100.0 && zero == 0.0 && std::abs(off - 48.13) <= 0.01,
            fmt("identical %.2f, zeros-vs-ones %.2f, 1/255 offset %.4f", same, zero, off)};
}

// 8, 9 ------------------------------------------------------------------------

// Desk setup: 8 clients, uniform partition, 32 synthetic 64x64 training images,
// scale 2, features 8, one residual block, 30 rounds.
TrainConfig desk_config(std::uint64_t seed) {
    TrainConfig c;
    c.rounds = 30;
    c.local_epochs = 3;
    c.batch_size = 1;
    c.lr = 2e-3f;
    c.patch_size = 64;
    c.model = ModelConfig{8, 1, 2, 3};
    c.seed = seed;
    return c;
}

struct DeskData {
    HrStore train;
    Manifest test;
};

DeskData desk_data(std::uint64_t seed, const fs::path& dir) {
    const fs::path vdir = dir / ("test_" + std::to_string(seed));
    pregenerate_test_variants(synthetic_corpus(8, 64, 64, seed + 1000), 2, vdir.string(), seed);
    return {make_store(synthetic_corpus(32, 64, 64, seed)), load_manifest(vdir.string())};
}

RunResult desk_federated(const DeskData& d, const TrainConfig& c) {
    RngStream r = derive_stream(c.seed, kPartitionLabel);
    RunOptions o;
    o.workers = 1;
    return run_federated(build_partition(store_ids(d.train), 8, PartitionMode::uniform(), r, c.seed), c, d.train, o);
}

double min_psnr(const EvaluationMatrix& m) {
    double lo = kPsnrCap;
    for (const auto& row : m.values) lo = std::min(lo, row.at(0));
    return lo;
}

struct DeskRun {
    RunResult fl;
    double seconds;
};

Outcome desk_training(const fs::path& dir, DeskRun& out) {
    const TrainConfig c = desk_config(1);
    const DeskData d = desk_data(1, dir);
    const auto t0 = Clock::now();
    out.fl = desk_federated(d, c);
    out.seconds = seconds_since(t0);
    const auto before = evaluate(init_weights(c.model, c.seed), d.test).matrix;
    const auto after = evaluate(out.fl.weights, d.test).matrix;
    const double p0 = before.at("clean", before.cols[0]), p1 = after.at("clean", after.cols[0]);
    const double l1 = out.fl.reports.front().global_loss, l30 = out.fl.reports.back().global_loss;
    const bool pass = out.seconds < 300.0 && p1 - p0 >= 3.0 && l30 < l1;
    return {pass, fmt("%.1f s, clean PSNR %.2f -> %.2f dB (%+.2f), loss round 1 %.4f, round 30 %.4f", out.seconds, p0, p1,
                      p1 - p0, l1, l30)};
}

Outcome specialist_trend(const fs::path& dir, const DeskRun& seed1) {
    std::size_t good_seeds = 0;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const TrainConfig c = desk_config(seed);
        const DeskData d = desk_data(seed, dir);
        std::vector<std::future<RunResult>> specialists;
        for (auto t : kDegradationTypes)
            specialists.push_back(std::async(std::launch::async, [&, t] { return run_centralized(c, d.train, t); }));
        const RunResult fl = seed == 1 ? seed1.fl : desk_federated(d, c);
        const double fl_min = min_psnr(evaluate(fl.weights, d.test).matrix);
        std::size_t beaten = 0;
        detail += fmt("%sseed %lu: fl min %.2f vs", detail.empty() ? "" : "; ", static_cast<unsigned long>(seed), fl_min);
        for (std::size_t t = 0; t < 4; ++t) {
            const double s_min = min_psnr(evaluate(specialists[t].get().weights, d.test).matrix);
            beaten += fl_min >= s_min + 1.0;
            detail += fmt(" %s %.2f", to_string(kDegradationTypes[t]).c_str(), s_min);
        }
        detail += fmt(" (%zu/4 beaten)", beaten);
        good_seeds += beaten >= 3;
    }
    return {good_seeds >= 2, detail};
}

// 10 --------------------------------------------------------------------------

Outcome table_formatting() {
    const EvaluationMatrix central{{"clean"}, {"Set14"}, {{25.97}}};
    const EvaluationMatrix fl{{"clean"}, {"Set14"}, {{25.49}}};
    const std::string table = diff_table(fl, central, "16", "1");
    const bool pass = table.find("\ndifference,-0.48\n") != std::string::npos;
    std::string flat = table;
    std::replace(flat.begin(), flat.end(), '\n', ' ');
    return {pass, flat};
}

// 11 --------------------------------------------------------------------------

int run(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); }

std::map<std::string, std::string> artifact_digests(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".csv" || ext == ".json" || ext == ".fsrw"))
            out[fs::relative(e.path(), root).string()] = sha256_hex(read_file_bytes(e.path().string()));
    }
    return out;
}

bool pipeline(const fs::path& d) {
    const std::string cli = FEDSR_CLI_PATH;
    auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
    write_text_file((d / "config.json").string(), R"({"seed": 5, "data": {"hr_dir": "hr", "patch": 16, "stride": 16},
        "model": {"features": 4, "blocks": 1, "scale": 2},
        "train": {"rounds": 2, "batch_size": 2, "lr": 0.001, "checkpoint_every": 1},
        "federation": {"num_clients": 4}})");
    const fs::path cfg = d / "config.json";
    return run(cli + " make-synthetic --count 8 --size 32 --seed 9 --out " + q(d / "hr")) == 0 &&
           run(cli + " prepare --config " + q(cfg) + " --hr-dir " + q(d / "hr") + " --scale 2 --patch 16 --stride 16 --out " + q(d / "data")) == 0 &&
           run(cli + " partition --config " + q(cfg) + " --out " + q(d / "partition.json")) == 0 &&
           run(cli + " train --workers 4 --config " + q(cfg) + " --partition " + q(d / "partition.json") + " --out " + q(d / "fl")) == 0 &&
           run(cli + " train-central --config " + q(cfg) + " --out " + q(d / "central")) == 0 &&
           run(cli + " eval --weights " + q(d / "fl/checkpoints/round_2.fsrw") + " --variants " + q(d / "data/variants") + " --out " + q(d / "eval_fl")) == 0 &&
           run(cli + " eval --weights " + q(d / "central/checkpoints/round_2.fsrw") + " --variants " + q(d / "data/variants") + " --out " + q(d / "eval_c")) == 0 &&
           run(cli + " report --run " + q(d / "eval_fl") + " --baseline " + q(d / "eval_c") + " --out " + q(d / "report")) == 0;
}

Outcome reproducibility(const fs::path& dir) {
    const fs::path a = dir / "run_a", b = dir / "run_b";
    fs::create_directories(a);
    fs::create_directories(b);
    if (!pipeline(a) || !pipeline(b)) return {false, "pipeline failed"};
    const auto da = artifact_digests(a), db = artifact_digests(b);
    std::size_t differing = 0;
    for (const auto& [k, v] : da) differing += !db.count(k) || db.at(k) != v;
    return {da == db && da.size() >= 10, fmt("%zu artifacts compared, %zu differ", da.size(), differing)};
}

// 12 --------------------------------------------------------------------------

Outcome clustering_oracle() {
    std::size_t agree = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RngStream r = RngStream::from_seed(1200 + seed);
        std::vector<std::vector<double>> rows(8, std::vector<double>(8));
        for (auto& row : rows)
            for (auto& v : row) v = r.uniform(-3.0, 3.0);
        for (std::size_t k : {2, 3, 5}) {
            agree += oracle::same_partition(cluster_result_rows(rows, k), oracle::average_linkage(rows, k));
            ++total;
        }
    }
    return {agree == total, fmt("%zu/%zu partitions agree", agree, total)};
}

} // namespace

int main() {
    const fs::path dir = scratch("run");
    DeskRun desk;
    report(1, "gradient integrity", gradient_integrity);
    report(2, "fedavg oracle", fedavg_oracle);
    report(3, "protocol degeneracy", protocol_degeneracy);
    report(4, "scheduling invariance", scheduling_invariance);
    report(5, "dirichlet statistics", dirichlet_statistics);
    report(6, "degradation oracles", degradation_oracles);
    report(7, "psnr formula", psnr_formula);
    report(8, "desk-scale training", [&] { return desk_training(dir, desk); });
    report(9, "specialist vs federated trend", [&] { return specialist_trend(dir, desk); });
    report(10, "difference table formatting", table_formatting);
    report(11, "pipeline reproducibility", [&] { return reproducibility(dir); });
    report(12, "clustering oracle", clustering_oracle);
    fs::remove_all(dir);
    return failures == 0 ? 0 : 1;
}
