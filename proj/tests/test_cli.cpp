#include <catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <sys/wait.h>
#include <unistd.h>

#include "fedsr/fedsr.hpp"

using namespace fedsr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("fedsr_cli_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Run {
    int code;
    std::string out;
};

Run sh(const std::string& cmd) {
    FILE* p = ::popen((cmd + " 2>&1").c_str(), "r");
    REQUIRE(p);
    std::string out;
    std::array<char, 4096> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) out.append(buf.data(), n);
    const int status = ::pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

Run cli(const std::string& args) { return sh(std::string(FEDSR_CLI_PATH) + " " + args); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

/// Tiny federated setup over a synthetic corpus in dir/hr.
fs::path write_config(const fs::path& dir, std::size_t clients, std::size_t rounds, const std::string& extra = "") {
    const fs::path cfg = dir / "config.json";
    write_text_file(cfg.string(), R"({"seed": 3, "data": {"hr_dir": "hr", "patch": 16, "stride": 16},
        "model": {"features": 2, "blocks": 1, "scale": 2},
        "train": {"rounds": )" + std::to_string(rounds) +
                                      R"(, "batch_size": 2, "lr": 0.001)" + extra + R"(},
        "federation": {"num_clients": )" + std::to_string(clients) +
                                      "}}");
    return cfg;
}

std::string digest(const fs::path& p) { return sha256_hex(read_file_bytes(p.string())); }

std::map<std::string, std::string> tree_digests(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = digest(e.path());
    return out;
}

} // namespace

TEST_CASE("exit codes") {
    TempDir dir("codes");
    CHECK(cli("--help").code == 0);
    CHECK(cli("").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("train --out x").code == 2);                                  // missing --config
    CHECK(cli("train --config /nonexistent.json --out x").code == 2);       // missing input
    CHECK(cli("prepare --hr-dir " + q(dir.path) + " --out " + q(dir.path / "o")).code == 2); // no images
    write_text_file((dir.path / "bad.json").string(), "{\"bogus\": 1}");
    const Run bad = cli("partition --config " + q(dir.path / "bad.json") + " --out " + q(dir.path / "p.json"));
    CHECK(bad.code == 1);
    CHECK(bad.out.find("unknown key 'bogus'") != std::string::npos);
    write_text_file((dir.path / "x.ppm").string(), "P6\n2 2\n255\n");
    const Run trunc = cli("prepare --hr-dir " + q(dir.path) + " --out " + q(dir.path / "o"));
    CHECK(trunc.code == 1);
    CHECK(trunc.out.find("x.ppm") != std::string::npos);
}

TEST_CASE("every subcommand help lists defaults") {
    const Run prep = cli("prepare --help");
    CHECK(prep.code == 0);
    CHECK(prep.out.find("--scale") != std::string::npos);
    CHECK(prep.out.find("[4]") != std::string::npos);
    CHECK(prep.out.find("[128]") != std::string::npos);
    CHECK(cli("train --help").out.find("--workers") != std::string::npos);
    CHECK(cli("train-central --help").out.find("[mixed]") != std::string::npos);
    CHECK(cli("cluster --help").out.find("[5]") != std::string::npos);
    for (const char* sub : {"partition", "eval", "report", "make-synthetic"}) CHECK(cli(std::string(sub) + " --help").code == 0);
}

TEST_CASE("prepare writes the 8 variants and is reproducible") {
    TempDir dir("prepare");
    REQUIRE(cli("make-synthetic --out " + q(dir.path / "hr") + " --count 2 --size 64 --seed 1").code == 0);
    const std::string args = "prepare --hr-dir " + q(dir.path / "hr") + " --scale 2 --patch 32 --stride 32 --seed 4";
    REQUIRE(cli(args + " --out " + q(dir.path / "a")).code == 0);
    REQUIRE(cli(args + " --out " + q(dir.path / "b")).code == 0);

    std::size_t dirs = 0, lr_files = 0;
    for (const auto& v : test_variants(2)) {
        const fs::path d = dir.path / "a" / "variants" / v.dir;
        if (!fs::is_directory(d)) continue;
        ++dirs;
        for (const auto& e : fs::directory_iterator(d)) lr_files += e.path().extension() == ".ppm";
    }
    CHECK(dirs == 8);
    CHECK(lr_files == 16);
    CHECK(std::distance(fs::directory_iterator(dir.path / "a" / "patches"), fs::directory_iterator{}) == 8);
    CHECK(tree_digests(dir.path / "a") == tree_digests(dir.path / "b"));

    // Manifest digest against the system checksum tool.
    const Manifest m = load_manifest((dir.path / "a" / "variants").string());
    const auto& f = m.variants[2].files[1];
    const Run ext = sh("sha256sum " + q(resolve(m, f)));
    REQUIRE(ext.code == 0);
    CHECK(ext.out.substr(0, 64) == f.sha256);
}

TEST_CASE("config defaults are resolved into the run directory") {
    TempDir dir("config");
    REQUIRE(cli("make-synthetic --out " + q(dir.path / "hr") + " --count 2 --size 32").code == 0);
    const fs::path cfg = write_config(dir.path, 2, 1);
    REQUIRE(cli("train --config " + q(cfg) + " --out " + q(dir.path / "run")).code == 0);
    const auto j = read_json_file((dir.path / "run" / "config.json").string());
    CHECK(j["train"]["local_epochs"] == 1);
    CHECK(j["train"]["loss"] == "l1");
    CHECK(j["federation"]["aggregate"] == "weighted");
    CHECK(j["partition"]["mode"] == "uniform");
    CHECK(j["degradation"]["test_params"]["jpeg_quality"] == 50);
    CHECK(j["train"]["rounds"] == 1);
    CHECK(parse_experiment_config(j).train.batch_size == 2);

    const fs::path bad = write_config(dir.path, 2, 1, R"(, "momentum": 0.9)");
    const Run r = cli("train --config " + q(bad) + " --out " + q(dir.path / "run2"));
    CHECK(r.code == 1);
    CHECK(r.out.find("train.momentum") != std::string::npos);
}

TEST_CASE("one-client training equals clean centralized training") {
    TempDir dir("degenerate");
    REQUIRE(cli("make-synthetic --out " + q(dir.path / "hr") + " --count 3 --size 32").code == 0);
    const fs::path cfg = write_config(dir.path, 1, 3);
    REQUIRE(cli("train --config " + q(cfg) + " --out " + q(dir.path / "fl")).code == 0);
    REQUIRE(cli("train-central --config " + q(cfg) + " --degradation clean --out " + q(dir.path / "c")).code == 0);
    CHECK(digest(dir.path / "fl" / "checkpoints" / "round_3.fsrw") == digest(dir.path / "c" / "checkpoints" / "round_3.fsrw"));
    CHECK_FALSE(fs::exists(dir.path / "c" / "partition.json"));
}

TEST_CASE("workers flag and environment fallback give identical runs") {
    TempDir dir("workers");
    REQUIRE(cli("make-synthetic --out " + q(dir.path / "hr") + " --count 4 --size 32").code == 0);
    const fs::path cfg = write_config(dir.path, 8, 1);
    REQUIRE(cli("train --config " + q(cfg) + " --workers 1 --out " + q(dir.path / "w1")).code == 0);
    REQUIRE(cli("train --config " + q(cfg) + " --workers 8 --out " + q(dir.path / "w8")).code == 0);
    REQUIRE(sh("FEDSR_WORKERS=4 " + std::string(FEDSR_CLI_PATH) + " train --config " + q(cfg) + " --out " + q(dir.path / "env")).code == 0);
    CHECK(tree_digests(dir.path / "w1") == tree_digests(dir.path / "w8"));
    CHECK(tree_digests(dir.path / "w1") == tree_digests(dir.path / "env"));
    CHECK(sh("FEDSR_WORKERS=zero " + std::string(FEDSR_CLI_PATH) + " train --config " + q(cfg) + " --out " + q(dir.path / "bad")).code == 2);
}

TEST_CASE("full pipeline emits every documented artifact") {
    TempDir dir("pipeline");
    const fs::path& d = dir.path;
    REQUIRE(cli("make-synthetic --out " + q(d / "hr") + " --count 8 --size 32 --seed 2").code == 0);
    const fs::path cfg = write_config(d, 4, 2, R"(, "checkpoint_every": 1)");
    REQUIRE(cli("prepare --config " + q(cfg) + " --hr-dir " + q(d / "hr") + " --scale 2 --patch 16 --stride 16 --out " + q(d / "data")).code == 0);
    REQUIRE(cli("partition --config " + q(cfg) + " --out " + q(d / "partition.json")).code == 0);
    REQUIRE(cli("train --config " + q(cfg) + " --partition " + q(d / "partition.json") + " --out " + q(d / "fl")).code == 0);
    REQUIRE(cli("train-central --config " + q(cfg) + " --out " + q(d / "central")).code == 0);
    const fs::path vars = d / "data" / "variants";
    REQUIRE(cli("eval --weights " + q(d / "fl" / "checkpoints" / "round_2.fsrw") + " --variants " + q(vars) + " --out " + q(d / "eval_fl")).code == 0);
    REQUIRE(cli("eval --weights " + q(d / "central" / "checkpoints" / "round_2.fsrw") + " --variants " + q(vars) + " --out " + q(d / "eval_c")).code == 0);
    REQUIRE(cli("report --run " + q(d / "eval_fl") + " --baseline " + q(d / "eval_c") + " --out " + q(d / "report")).code == 0);
    const Run cl = cli("cluster --matrices " + q(d / "eval_fl") + " " + q(d / "eval_c") + " --k 2");
    REQUIRE(cl.code == 0);
    CHECK(cl.out == "cluster 0: eval_fl\ncluster 1: eval_c\n");

    for (const fs::path& p : {d / "data" / "variants" / "manifest.json", d / "fl" / "config.json", d / "fl" / "partition.json",
                             d / "fl" / "checkpoints" / "round_1.fsrw", d / "fl" / "checkpoints" / "round_2.fsrw",
                             d / "fl" / "reports.csv", d / "central" / "config.json", d / "central" / "reports.csv",
                             d / "eval_fl" / "matrix.csv", d / "eval_fl" / "per_image.csv", d / "report" / "heatmap.csv",
                             d / "report" / "diff_table.csv"})
        CHECK(fs::is_regular_file(p));
    CHECK(read_file_bytes((d / "partition.json").string()) == read_file_bytes((d / "fl" / "partition.json").string()));

    const auto reports = read_csv((d / "fl" / "reports.csv").string());
    CHECK(reports[0] == std::vector<std::string>{"round", "client_id", "n", "loss"});
    CHECK(reports.size() == 1 + 2 * 4);
    CHECK(read_csv((d / "eval_fl" / "matrix.csv").string()).size() == 1 + 8);

    // A run compared with itself gives an all-zero heatmap.
    REQUIRE(cli("report --run " + q(d / "eval_fl" / "matrix.csv") + " --baseline " + q(d / "eval_fl") + " --out " + q(d / "self")).code == 0);
    const auto heat = read_csv((d / "self" / "heatmap.csv").string());
    REQUIRE(heat.size() == 9);
    for (std::size_t r = 1; r < heat.size(); ++r)
        for (std::size_t c = 1; c < heat[r].size(); ++c) CHECK(std::stod(heat[r][c]) == 0.0);
}
