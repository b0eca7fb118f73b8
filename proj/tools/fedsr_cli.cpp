// fedsr command-line driver: data preparation, partitioning, federated and
// centralized training, evaluation, reporting and clustering.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsr/fedsr.hpp"

namespace fs = std::filesystem;
using namespace fedsr;

namespace {

/// Missing or unusable inputs. Reported like a CLI parse error (exit 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void make_dirs(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create directory", p.string());
}

std::size_t resolve_workers(std::size_t flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("FEDSR_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        throw UsageError("FEDSR_WORKERS must be a positive integer, got '" + std::string(env) + "'");
    }
    return 1;
}

struct LoadedConfig {
    ExperimentConfig config;
    fs::path base; // directory of the config file; relative data paths resolve against it
};

LoadedConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = read_json_file(path);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what(), 0);
    }
    return {parse_experiment_config(j), fs::path(path).parent_path()};
}

fs::path resolve_data_dir(const LoadedConfig& lc) {
    if (lc.config.data.hr_dir.empty()) throw UsageError("config: data.hr_dir is required");
    fs::path p(lc.config.data.hr_dir);
    return p.is_absolute() ? p : lc.base / p;
}

/// Loads every *.ppm of a directory; malformed files are collected instead of
/// aborting at the first one.
std::vector<ImageRecord> load_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<ImageRecord> out;
    std::vector<std::string> bad;
    for (const auto& f : files) {
        try {
            out.push_back(load_ppm(f.string()));
        } catch (const Error& e) {
            bad.push_back(e.what());
        }
    }
    if (!bad.empty()) {
        std::string msg = std::to_string(bad.size()) + " unreadable image file(s):";
        for (const auto& b : bad) msg += "\n  " + b;
        throw IoError(msg, dir.string());
    }
    if (out.empty()) throw UsageError("no .ppm files in " + dir.string());
    return out;
}

/// Training patches of the configured corpus.
HrStore load_training_store(const LoadedConfig& lc) {
    const auto& d = lc.config.data;
    std::vector<ImageRecord> patches;
    for (const auto& rec : load_images(resolve_data_dir(lc))) {
        auto p = extract_patch_records(rec, d.patch, d.stride);
        patches.insert(patches.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
    }
    if (patches.empty()) {
        throw InvalidArgument("no training patches: every image is smaller than data.patch=" + std::to_string(d.patch));
    }
    return make_store(patches);
}

PartitionPlan make_plan(const ExperimentConfig& c, const HrStore& store) {
    RngStream rng = derive_stream(c.seed, kPartitionLabel);
    return build_partition(store_ids(store), c.num_clients, partition_mode(c.partition), rng, c.seed);
}

std::string reports_csv(const std::vector<RoundReport>& reports) {
    std::string s = "round,client_id,n,loss\n";
    for (const auto& r : reports)
        for (const auto& c : r.clients)
            s += std::to_string(r.round) + ',' + std::to_string(c.client_id) + ',' + std::to_string(c.sample_count) + ',' +
                 format_fixed(c.mean_loss, 9) + '\n';
    return s;
}

/// Writes checkpoints as rounds complete and the report table at the end.
class RunWriter {
public:
    RunWriter(fs::path dir, std::size_t every, std::size_t rounds) : dir_(std::move(dir)), every_(every), rounds_(rounds) {
        make_dirs(dir_ / "checkpoints");
    }

    RunOptions options(std::size_t workers) {
        RunOptions o;
        o.workers = workers;
        o.on_round = [this](const RoundReport& r, const ModelWeights& w) {
            std::fprintf(stderr, "round %zu/%zu  loss %.6f\n", r.round, rounds_, r.global_loss);
            if (r.round == rounds_ || (every_ > 0 && r.round % every_ == 0)) checkpoint(r.round, w);
        };
        return o;
    }

    void finish(const RunResult& result) {
        if (rounds_ == 0) checkpoint(0, result.weights);
        write_text_file((dir_ / "reports.csv").string(), reports_csv(result.reports));
    }

private:
    void checkpoint(std::size_t round, const ModelWeights& w) {
        save_weights(w, (dir_ / "checkpoints" / ("round_" + std::to_string(round) + ".fsrw")).string());
    }

    fs::path dir_;
    std::size_t every_, rounds_;
};

// Subcommands -----------------------------------------------------------------

struct PrepareArgs {
    std::string hr_dir, out, config, name;
    std::size_t scale = 4, patch = 128, stride = 64;
    std::uint64_t seed = 0;
};

void cmd_prepare(const PrepareArgs& a) {
    if (a.scale < 1) throw UsageError("--scale must be positive");
    if (a.patch % a.scale != 0) throw UsageError("--patch must be divisible by --scale");
    TestParams params;
    std::uint64_t seed = a.seed;
    if (!a.config.empty()) {
        const auto lc = load_config(a.config);
        params = lc.config.test_params;
        seed = lc.config.seed;
    }
    const auto images = load_images(a.hr_dir);
    const fs::path out(a.out);
    make_dirs(out / "patches");
    std::size_t n_patches = 0;
    std::vector<ImageRecord> test_set;
    for (const auto& rec : images) {
        for (const auto& p : extract_patch_records(rec, a.patch, a.stride)) {
            save_ppm(p.hr, (out / "patches" / (p.id + ".ppm")).string());
            ++n_patches;
        }
        test_set.push_back({rec.id, crop_to_multiple(rec.hr, a.scale)});
    }
    const std::string name = a.name.empty() ? fs::path(a.hr_dir).lexically_normal().filename().string() : a.name;
    const Manifest m = pregenerate_test_variants(test_set, a.scale, (out / "variants").string(), seed, params,
                                                 name.empty() ? "dataset" : name);
    std::printf("%zu images, %zu patches, %zu variants\n", images.size(), n_patches, m.variants.size());
}

void cmd_partition(const std::string& config_path, const std::string& out) {
    const auto lc = load_config(config_path);
    const PartitionPlan plan = make_plan(lc.config, load_training_store(lc));
    write_json_file(out, partition_to_json(plan));
    for (const auto& c : plan.clients)
        std::printf("client %zu  %-5s  %zu images\n", c.client_id, to_string(c.type).c_str(), c.image_ids.size());
}

void cmd_train(const std::string& config_path, const std::string& partition_path, const std::string& out,
               std::size_t workers) {
    const auto lc = load_config(config_path);
    const HrStore store = load_training_store(lc);
    PartitionPlan plan;
    if (partition_path.empty()) {
        plan = make_plan(lc.config, store);
    } else {
        try {
            plan = partition_from_json(read_json_file(partition_path));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(partition_path + ": " + e.what(), 0);
        }
    }
    validate_partition(plan, store_ids(store));

    const fs::path dir(out);
    make_dirs(dir);
    write_json_file((dir / "config.json").string(), resolved_config_json(lc.config));
    write_json_file((dir / "partition.json").string(), partition_to_json(plan));
    RunWriter writer(dir, lc.config.checkpoint_every, lc.config.train.rounds);
    writer.finish(run_federated(plan, lc.config.train, store, writer.options(resolve_workers(workers))));
}

void cmd_train_central(const std::string& config_path, const std::string& out, const std::string& degradation) {
    const auto lc = load_config(config_path);
    std::optional<DegradationType> type;
    if (degradation != "mixed") type = degradation_type_from_string(degradation);
    const HrStore store = load_training_store(lc);

    const fs::path dir(out);
    make_dirs(dir);
    auto resolved = resolved_config_json(lc.config);
    resolved["centralized"] = {{"degradation", degradation}};
    write_json_file((dir / "config.json").string(), resolved);
    RunWriter writer(dir, lc.config.checkpoint_every, lc.config.train.rounds);
    writer.finish(run_centralized(lc.config.train, store, type, writer.options(1)));
}

void cmd_eval(const std::string& weights_path, const std::vector<std::string>& variants, const std::string& out,
              bool y_channel) {
    const ModelWeights w = load_weights(weights_path);
    std::vector<EvaluationMatrix> parts;
    std::vector<PerImageScore> per_image;
    for (const auto& v : variants) {
        auto res = evaluate(w, load_manifest(v), y_channel ? PsnrChannels::Y : PsnrChannels::RGB);
        parts.push_back(std::move(res.matrix));
        per_image.insert(per_image.end(), res.per_image.begin(), res.per_image.end());
    }
    const EvaluationMatrix m = merge_columns(parts);
    make_dirs(out);
    write_text_file((fs::path(out) / "matrix.csv").string(), matrix_csv(m));
    write_text_file((fs::path(out) / "per_image.csv").string(), per_image_csv(per_image));
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
        std::printf("%-6s", m.rows[r].c_str());
        for (double v : m.values[r]) std::printf("  %7.3f", v);
        std::printf("\n");
    }
}

std::string matrix_path(const std::string& p) {
    return fs::is_directory(p) ? (fs::path(p) / "matrix.csv").string() : p;
}

void cmd_report(const std::string& run, const std::string& baseline, const std::string& out,
                const std::string& run_label, const std::string& baseline_label) {
    const EvaluationMatrix r = read_matrix_csv(matrix_path(run));
    const EvaluationMatrix b = read_matrix_csv(matrix_path(baseline));
    make_dirs(out);
    write_text_file((fs::path(out) / "heatmap.csv").string(), heatmap_csv(relative_to_baseline(r, b, baseline_label)));
    const std::string table = diff_table(r, b, run_label, baseline_label);
    write_text_file((fs::path(out) / "diff_table.csv").string(), table);
    std::fputs(table.c_str(), stdout);
}

void cmd_cluster(const std::vector<std::string>& matrices, std::vector<std::string> names, std::size_t k) {
    if (!names.empty() && names.size() != matrices.size()) throw UsageError("--names needs one entry per matrix");
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < matrices.size(); ++i) {
        const auto m = read_matrix_csv(matrix_path(matrices[i]));
        std::vector<double> row;
        for (const auto& r : m.values) row.insert(row.end(), r.begin(), r.end());
        if (!rows.empty() && row.size() != rows.front().size()) throw InvalidArgument("matrices differ in size");
        rows.push_back(std::move(row));
        if (names.size() < matrices.size()) {
            const fs::path p = fs::path(matrix_path(matrices[i]));
            names.push_back(p.parent_path().filename().string());
        }
    }
    if (k == 0 || k > rows.size()) throw UsageError("--k must be between 1 and the number of matrices");
    const auto labels = cluster_result_rows(rows, k);
    for (std::size_t c = 0; c < k; ++c) {
        std::printf("cluster %zu:", c);
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) std::printf(" %s", names[i].c_str());
        std::printf("\n");
    }
}

void cmd_make_synthetic(const std::string& out, std::size_t count, std::size_t size, std::uint64_t seed) {
    make_dirs(out);
    for (const auto& rec : synthetic_corpus(count, size, size, seed))
        save_ppm(rec.hr, (fs::path(out) / (rec.id + ".ppm")).string());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated blind super-resolution benchmark"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    PrepareArgs prep;
    auto* prepare = app.add_subcommand("prepare", "Cut HR training patches and pre-generate the 8 test variants");
    prepare->add_option("--hr-dir", prep.hr_dir, "Directory of P6 PPM images")->required()->check(CLI::ExistingDirectory);
    prepare->add_option("--out", prep.out, "Output directory")->required();
    prepare->add_option("--scale", prep.scale, "Downscaling factor");
    prepare->add_option("--patch", prep.patch, "HR patch edge in pixels");
    prepare->add_option("--stride", prep.stride, "Patch stride in pixels");
    prepare->add_option("--seed", prep.seed, "Master seed for test-time noise");
    prepare->add_option("--name", prep.name, "Dataset label (default: directory name)");
    prepare->add_option("--config", prep.config, "Take seed and test parameters from this config")
        ->check(CLI::ExistingFile);

    std::string config, partition_path, out, degradation = "mixed", weights, run, baseline;
    std::string run_label = "fl", baseline_label = "central";
    std::size_t workers = 0, k = 5, count = 8, size = 64;
    std::uint64_t seed = 0;
    bool y_channel = false;
    std::vector<std::string> variants, matrices, names;

    auto* partition = app.add_subcommand("partition", "Assign degradation types and image shards to clients");
    partition->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    partition->add_option("--out", out, "Output partition JSON")->required();

    auto* train = app.add_subcommand("train", "Federated training run");
    train->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    train->add_option("--partition", partition_path, "Partition JSON (default: derived from the config)")
        ->check(CLI::ExistingFile);
    train->add_option("--out", out, "Run directory")->required();
    train->add_option("--workers", workers, "Parallel clients (0: FEDSR_WORKERS or 1)");

    auto* central = app.add_subcommand("train-central", "Centralized single-client training run");
    central->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    central->add_option("--out", out, "Run directory")->required();
    central->add_option("--degradation", degradation, "Training degradation")
        ->check(CLI::IsMember({"mixed", "clean", "blur", "noise", "jpeg"}));

    auto* eval = app.add_subcommand("eval", "PSNR matrix of a checkpoint over pre-generated test variants");
    eval->add_option("--weights", weights, "Checkpoint (.fsrw)")->required()->check(CLI::ExistingFile);
    eval->add_option("--variants", variants, "Variant directories or manifest files, one per dataset")
        ->required()
        ->check(CLI::ExistingPath);
    eval->add_option("--out", out, "Output directory")->required();
    eval->add_flag("--y-channel", y_channel, "Score BT.601 luma instead of RGB");

    auto* report = app.add_subcommand("report", "Heatmap and difference table of a run against a baseline");
    report->add_option("--run", run, "matrix.csv of the run (or its directory)")->required()->check(CLI::ExistingPath);
    report->add_option("--baseline", baseline, "matrix.csv of the baseline (or its directory)")
        ->required()
        ->check(CLI::ExistingPath);
    report->add_option("--out", out, "Output directory")->required();
    report->add_option("--run-label", run_label, "Row label of the run");
    report->add_option("--baseline-label", baseline_label, "Row label of the baseline");

    auto* cluster = app.add_subcommand("cluster", "Average-linkage clustering of evaluation matrices");
    cluster->add_option("--matrices", matrices, "matrix.csv files (or their directories)")
        ->required()
        ->check(CLI::ExistingPath);
    cluster->add_option("--names", names, "Row names (default: parent directory names)");
    cluster->add_option("--k", k, "Number of clusters");

    auto* synth = app.add_subcommand("make-synthetic", "Write a procedural PPM corpus");
    synth->add_option("--out", out, "Output directory")->required();
    synth->add_option("--count", count, "Number of images");
    synth->add_option("--size", size, "Image edge in pixels");
    synth->add_option("--seed", seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*prepare) cmd_prepare(prep);
        else if (*partition) cmd_partition(config, out);
        else if (*train) cmd_train(config, partition_path, out, workers);
        else if (*central) cmd_train_central(config, out, degradation);
        else if (*eval) cmd_eval(weights, variants, out, y_channel);
        else if (*report) cmd_report(run, baseline, out, run_label, baseline_label);
        else if (*cluster) cmd_cluster(matrices, names, k);
        else if (*synth) cmd_make_synthetic(out, count, size, seed);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
