#pragma once

// Pre-generated test datasets: HR references plus the eight degradation
// combinations of every image, described by a JSON manifest with SHA-256
// digests of each written file.

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsr/degradation.hpp"
#include "fedsr/image_io.hpp"

namespace fedsr {

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

inline nlohmann::json spec_to_json(const DegradationSpec& s) {
    nlohmann::json j;
    auto param = [](const std::optional<ParamRange>& p) -> nlohmann::json {
        if (!p) return nullptr;
        if (p->is_fixed()) return p->lo;
        return nlohmann::json::array({p->lo, p->hi});
    };
    j["blur_sigma"] = param(s.blur_sigma);
    j["scale"] = s.scale;
    j["noise_sigma"] = param(s.noise_sigma);
    j["jpeg_quality"] = param(s.jpeg_quality);
    j["mode"] = s.mode == DegradationMode::Train ? "train" : "test";
    return j;
}

inline DegradationSpec spec_from_json(const nlohmann::json& j) {
    auto param = [](const nlohmann::json& v) -> std::optional<ParamRange> {
        if (v.is_null()) return std::nullopt;
        if (v.is_number()) return ParamRange::fixed(v.get<double>());
        if (v.is_array() && v.size() == 2) return ParamRange{v[0].get<double>(), v[1].get<double>()};
        throw InvalidArgument("degradation parameter must be null, a number, or [lo, hi]");
    };
    DegradationSpec s;
    s.blur_sigma = param(j.at("blur_sigma"));
    s.scale = j.at("scale").get<std::size_t>();
    s.noise_sigma = param(j.at("noise_sigma"));
    s.jpeg_quality = param(j.at("jpeg_quality"));
    s.mode = j.at("mode").get<std::string>() == "train" ? DegradationMode::Train : DegradationMode::Test;
    s.validate();
    return s;
}

struct ManifestFile {
    std::string id;
    std::string path; // relative to the manifest directory
    std::string sha256;

    friend bool operator==(const ManifestFile&, const ManifestFile&) = default;
};

struct ManifestVariant {
    std::string name;
    DegradationSpec spec;
    std::vector<ManifestFile> files;
};

struct Manifest {
    std::string dataset;
    std::size_t scale = 0;
    std::uint64_t master_seed = 0;
    std::vector<ManifestFile> hr;
    std::vector<ManifestVariant> variants;
    std::string root; // directory holding manifest.json; not serialized
};

inline nlohmann::json manifest_to_json(const Manifest& m) {
    auto files = [](const std::vector<ManifestFile>& fs) {
        auto arr = nlohmann::json::array();
        for (const auto& f : fs) arr.push_back({{"id", f.id}, {"path", f.path}, {"sha256", f.sha256}});
        return arr;
    };
    nlohmann::json j;
    j["dataset"] = m.dataset;
    j["scale"] = m.scale;
    j["master_seed"] = m.master_seed;
    j["hr"] = files(m.hr);
    j["variants"] = nlohmann::json::array();
    for (const auto& v : m.variants)
        j["variants"].push_back({{"name", v.name}, {"spec", spec_to_json(v.spec)}, {"files", files(v.files)}});
    return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
    auto files = [](const nlohmann::json& arr) {
        std::vector<ManifestFile> out;
        for (const auto& f : arr)
            out.push_back({f.at("id").get<std::string>(), f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
        return out;
    };
    Manifest m;
    m.dataset = j.value("dataset", std::string("dataset"));
    m.scale = j.at("scale").get<std::size_t>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.hr = files(j.at("hr"));
    for (const auto& v : j.at("variants"))
        m.variants.push_back({v.at("name").get<std::string>(), spec_from_json(v.at("spec")), files(v.at("files"))});
    return m;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot create file", path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed", path);
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file", path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what(), e.byte);
    }
}

/// Path of a manifest entry, resolved against the manifest directory.
inline std::string resolve(const Manifest& m, const ManifestFile& f) {
    return (std::filesystem::path(m.root) / f.path).string();
}

/// Loads `<dir>/manifest.json` (or the given file).
inline Manifest load_manifest(const std::string& path) {
    namespace fs = std::filesystem;
    const fs::path p = fs::is_directory(path) ? fs::path(path) / "manifest.json" : fs::path(path);
    try {
        Manifest m = manifest_from_json(read_json_file(p.string()));
        m.root = p.parent_path().string();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptedDataset(p.string() + ": malformed manifest: " + e.what());
    }
}

/// Reads a manifest file and checks its digest.
inline std::vector<std::uint8_t> read_verified(const Manifest& m, const ManifestFile& f) {
    const std::string path = resolve(m, f);
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError&) {
        throw CorruptedDataset("missing dataset file " + path);
    }
    if (sha256_hex(bytes) != f.sha256) throw CorruptedDataset("digest mismatch for " + path);
    return bytes;
}

/// Writes HR references and all eight test variants under `out_dir`. Noise for
/// image `id` comes from the stream "noise/<id>", so every output byte is a pure
/// function of (images, scale, master_seed, params).
inline Manifest pregenerate_test_variants(const std::vector<ImageRecord>& dataset, std::size_t scale,
                                          const std::string& out_dir, std::uint64_t master_seed,
                                          const TestParams& params = {}, const std::string& dataset_name = "dataset") {
    namespace fs = std::filesystem;
    Manifest m;
    m.dataset = dataset_name;
    m.scale = scale;
    m.master_seed = master_seed;
    m.root = out_dir;
    const auto variants = test_variants(scale, params);
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "hr", ec);
    if (ec) throw IoError("cannot create directory", (fs::path(out_dir) / "hr").string());
    for (const auto& v : variants) {
        fs::create_directories(fs::path(out_dir) / v.dir, ec);
        if (ec) throw IoError("cannot create directory", (fs::path(out_dir) / v.dir).string());
        m.variants.push_back({v.name, v.spec, {}});
    }

    auto emit = [&](const Tensor& img, const std::string& rel) {
        const auto bytes = encode_ppm(img);
        write_file_bytes((fs::path(out_dir) / rel).string(), bytes);
        return sha256_hex(bytes);
    };
    for (const auto& rec : dataset) {
        if (rec.hr.dim(1) % scale != 0 || rec.hr.dim(2) % scale != 0) {
            throw InvalidArgument("image '" + rec.id + "' dimensions are not divisible by scale " + std::to_string(scale));
        }
        const std::string hr_rel = "hr/" + rec.id + ".ppm";
        m.hr.push_back({rec.id, hr_rel, emit(rec.hr, hr_rel)});
        const RngStream noise = derive_stream(master_seed, noise_label(rec.id));
        for (std::size_t k = 0; k < variants.size(); ++k) {
            RngStream r = noise;
            const Tensor lr = degrade(rec.hr, variants[k].spec, r);
            const std::string rel = variants[k].dir + "/" + rec.id + ".ppm";
            m.variants[k].files.push_back({rec.id, rel, emit(lr, rel)});
        }
    }
    write_json_file((fs::path(out_dir) / "manifest.json").string(), manifest_to_json(m));
    return m;
}

} // namespace fedsr
