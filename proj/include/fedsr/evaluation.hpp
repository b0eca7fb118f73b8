#pragma once

// PSNR, cross-degradation evaluation matrices and the tables derived from them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include "fedsr/dataset.hpp"
#include "fedsr/model.hpp"

namespace fedsr {

inline constexpr double kPsnrCap = 100.0;

enum class PsnrChannels { RGB, Y };

/// 10 log10(1 / MSE) at unit range after clamping both inputs to [0, 1];
/// identical inputs give kPsnrCap. Y mode compares BT.601 luma.
inline double psnr(const Tensor& a, const Tensor& b, PsnrChannels channels = PsnrChannels::RGB) {
    if (a.shape() != b.shape()) {
        throw InvalidArgument("psnr: shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    auto c01 = [](float v) { return std::clamp(static_cast<double>(v), 0.0, 1.0); };
    double sse = 0.0;
    std::size_t n = 0;
    if (channels == PsnrChannels::Y) {
        a.require_rank(3, "psnr");
        if (a.dim(0) != 3) throw InvalidArgument("psnr: Y mode needs RGB input");
        auto luma = [&](const Tensor& t, std::size_t y, std::size_t x) {
            return (16.0 + 65.481 * c01(t.at(0, y, x)) + 128.553 * c01(t.at(1, y, x)) + 24.966 * c01(t.at(2, y, x))) / 255.0;
        };
        for (std::size_t y = 0; y < a.dim(1); ++y)
            for (std::size_t x = 0; x < a.dim(2); ++x) {
                const double d = luma(a, y, x) - luma(b, y, x);
                sse += d * d;
                ++n;
            }
    } else {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = c01(a[i]) - c01(b[i]);
            sse += d * d;
        }
        n = a.size();
    }
    if (sse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(static_cast<double>(n) / sse));
}

/// Mean PSNR per (degradation combination, dataset).
struct EvaluationMatrix {
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::vector<std::vector<double>> values; // values[row][col]

    double at(const std::string& row, const std::string& col) const {
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < cols.size(); ++c)
                if (rows[r] == row && cols[c] == col) return values[r][c];
        throw InvalidArgument("no cell (" + row + ", " + col + ")");
    }

    double mean() const {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& r : values)
            for (double v : r) {
                s += v;
                ++n;
            }
        return n ? s / static_cast<double>(n) : 0.0;
    }

    friend bool operator==(const EvaluationMatrix&, const EvaluationMatrix&) = default;
};

/// Run minus baseline, cell by cell.
struct RelativeMatrix {
    std::string baseline_id;
    EvaluationMatrix diff;
};

struct PerImageScore {
    std::string combo;
    std::string image_id;
    double psnr_db = 0.0;
};

struct EvaluationResult {
    EvaluationMatrix matrix;
    std::vector<PerImageScore> per_image;
};

/// Super-resolves every LR file of every variant at full resolution, clamps to
/// [0, 1] and scores against the HR reference. Each cell is the mean over images.
inline EvaluationResult evaluate(const ModelWeights& weights, const Manifest& manifest,
                                 PsnrChannels channels = PsnrChannels::RGB) {
    const ModelConfig config = infer_config(weights);
    if (manifest.scale != config.scale) {
        throw InvalidArgument("evaluate: model scale " + std::to_string(config.scale) + " but dataset scale " +
                              std::to_string(manifest.scale));
    }
    std::map<std::string, Tensor> hr;
    for (const auto& f : manifest.hr) hr.emplace(f.id, decode_ppm(read_verified(manifest, f)));

    EvaluationResult res;
    res.matrix.cols = {manifest.dataset};
    for (const auto& v : manifest.variants) {
        double sum = 0.0;
        for (const auto& f : v.files) {
            const Tensor lr = decode_ppm(read_verified(manifest, f));
            const auto it = hr.find(f.id);
            if (it == hr.end()) throw CorruptedDataset("variant '" + v.name + "' references unknown image " + f.id);
            Tensor sr = forward_image(weights, config, lr);
            for (auto& x : sr.values()) x = std::clamp(x, 0.0f, 1.0f);
            const double p = psnr(sr, it->second, channels);
            res.per_image.push_back({v.name, f.id, p});
            sum += p;
        }
        res.matrix.rows.push_back(v.name);
        res.matrix.values.push_back({v.files.empty() ? 0.0 : sum / static_cast<double>(v.files.size())});
    }
    return res;
}

/// Joins single-dataset matrices column-wise; row labels must agree.
inline EvaluationMatrix merge_columns(const std::vector<EvaluationMatrix>& parts) {
    if (parts.empty()) throw InvalidArgument("merge_columns: nothing to merge");
    EvaluationMatrix out = parts.front();
    for (std::size_t p = 1; p < parts.size(); ++p) {
        if (parts[p].rows != out.rows) throw InvalidArgument("merge_columns: row labels differ");
        out.cols.insert(out.cols.end(), parts[p].cols.begin(), parts[p].cols.end());
        for (std::size_t r = 0; r < out.rows.size(); ++r)
            out.values[r].insert(out.values[r].end(), parts[p].values[r].begin(), parts[p].values[r].end());
    }
    return out;
}

inline RelativeMatrix relative_to_baseline(const EvaluationMatrix& run, const EvaluationMatrix& baseline,
                                           std::string baseline_id = "baseline") {
    if (run.rows != baseline.rows || run.cols != baseline.cols) {
        throw InvalidArgument("relative_to_baseline: row/column labels differ");
    }
    RelativeMatrix rel{std::move(baseline_id), run};
    for (std::size_t r = 0; r < run.rows.size(); ++r)
        for (std::size_t c = 0; c < run.cols.size(); ++c) rel.diff.values[r][c] = run.values[r][c] - baseline.values[r][c];
    return rel;
}

/// "+0.23" / "-0.48"; values that round to zero print as "0.00".
inline std::string format_signed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", v);
    std::string s = buf;
    if (s == "-0.00" || s == "+0.00") s = "0.00";
    return s;
}

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

/// FL-minus-centralized comparison table: rows are
/// grouped in pairs of combinations, each group shows both runs and their
/// signed difference for every dataset.
inline std::string diff_table(const EvaluationMatrix& fl, const EvaluationMatrix& central,
                              const std::string& fl_label = "fl", const std::string& central_label = "central") {
    const RelativeMatrix rel = relative_to_baseline(fl, central, central_label);
    std::ostringstream os;
    for (std::size_t r0 = 0; r0 < fl.rows.size(); r0 += 2) {
        const std::size_t r1 = std::min(fl.rows.size(), r0 + 2);
        if (r0) os << '\n';
        os << "Clients";
        for (const auto& col : fl.cols)
            for (std::size_t r = r0; r < r1; ++r) os << ',' << col << ':' << fl.rows[r];
        os << '\n';
        auto line = [&](const std::string& label, const EvaluationMatrix& m) {
            os << label;
            for (std::size_t c = 0; c < fl.cols.size(); ++c)
                for (std::size_t r = r0; r < r1; ++r) os << ',' << format_fixed(m.values[r][c], 2);
            os << '\n';
        };
        line(central_label, central);
        line(fl_label, fl);
        os << "difference";
        for (std::size_t c = 0; c < fl.cols.size(); ++c)
            for (std::size_t r = r0; r < r1; ++r) os << ',' << format_signed(rel.diff.values[r][c]);
        os << '\n';
    }
    return os.str();
}

// CSV files -------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create file", path);
    out << text;
    if (!out) throw IoError("write failed", path);
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file", path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

/// "combo,dataset,psnr_db", one line per cell in row-major order.
inline std::string matrix_csv(const EvaluationMatrix& m) {
    std::string s = "combo,dataset,psnr_db\n";
    for (std::size_t r = 0; r < m.rows.size(); ++r)
        for (std::size_t c = 0; c < m.cols.size(); ++c) s += m.rows[r] + ',' + m.cols[c] + ',' + format_fixed(m.values[r][c], 6) + '\n';
    return s;
}

inline EvaluationMatrix read_matrix_csv(const std::string& path) {
    const auto rows = read_csv(path);
    if (rows.empty() || rows.front() != std::vector<std::string>{"combo", "dataset", "psnr_db"}) {
        throw ParseError(path + ": expected header combo,dataset,psnr_db", 0);
    }
    EvaluationMatrix m;
    std::map<std::pair<std::string, std::string>, double> cells;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 3) throw ParseError(path + ": expected 3 fields on line " + std::to_string(i + 1), 0);
        const auto& [combo, dataset, value] = std::tie(rows[i][0], rows[i][1], rows[i][2]);
        if (std::find(m.rows.begin(), m.rows.end(), combo) == m.rows.end()) m.rows.push_back(combo);
        if (std::find(m.cols.begin(), m.cols.end(), dataset) == m.cols.end()) m.cols.push_back(dataset);
        cells[{combo, dataset}] = std::stod(value);
    }
    for (const auto& r : m.rows) {
        m.values.emplace_back();
        for (const auto& c : m.cols) {
            const auto it = cells.find({r, c});
            if (it == cells.end()) throw ParseError(path + ": missing cell " + r + "/" + c, 0);
            m.values.back().push_back(it->second);
        }
    }
    return m;
}

/// "combo,image_id,psnr_db".
inline std::string per_image_csv(const std::vector<PerImageScore>& scores) {
    std::string s = "combo,image_id,psnr_db\n";
    for (const auto& p : scores) s += p.combo + ',' + p.image_id + ',' + format_fixed(p.psnr_db, 6) + '\n';
    return s;
}

/// Row labels down, dataset labels across.
inline std::string heatmap_csv(const RelativeMatrix& rel) {
    std::string s = "combo";
    for (const auto& c : rel.diff.cols) s += ',' + c;
    s += '\n';
    for (std::size_t r = 0; r < rel.diff.rows.size(); ++r) {
        s += rel.diff.rows[r];
        for (double v : rel.diff.values[r]) s += ',' + format_fixed(v, 6);
        s += '\n';
    }
    return s;
}

} // namespace fedsr
