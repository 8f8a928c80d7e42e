#include "hydra/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hydra/tensor_io.hpp"

namespace fs = std::filesystem;

namespace hydra {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << s;
}

std::string window_name(size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "w%05zu.hydt", i);
    return buf;
}

}  // namespace

std::string prep_sibling(const std::string& raw_path) {
    fs::path p(raw_path);
    return (p.parent_path().parent_path() / "prep" / p.filename()).string();
}

void write_dataset(const std::string& dir, const DatasetWindows& w, uint64_t subject) {
    fs::path root(dir);
    fs::create_directories(root / "raw");
    fs::create_directories(root / "prep");
    std::ostringstream man;
    man << "window_path,label,repetition,subject\n";
    for (size_t i = 0; i < w.raw.size(); ++i) {
        std::string rel = "raw/" + window_name(i);
        write_tensor((root / rel).string(), w.raw[i]);
        write_tensor((root / "prep" / window_name(i)).string(), w.prep[i]);
        man << rel << ',' << w.labels[i] << ',' << w.repetitions[i] << ',' << subject << '\n';
    }
    write_text(root / "manifest.csv", man.str());
}

std::vector<ManifestRow> read_manifest(const std::string& dir) {
    fs::path p = fs::path(dir) / "manifest.csv";
    std::ifstream f(p);
    if (!f) throw MissingArtifact(p.string());
    std::string line;
    if (!std::getline(f, line) || line != "window_path,label,repetition,subject")
        throw std::runtime_error(p.string() + ": expected header window_path,label,repetition,subject");
    std::vector<ManifestRow> rows;
    int n = 1;
    while (std::getline(f, line)) {
        ++n;
        if (line.empty()) continue;
        auto c = split_csv(line);
        if (c.size() != 4) throw std::runtime_error(p.string() + ":" + std::to_string(n) + ": expected 4 columns");
        try {
            rows.push_back({c[0], std::stoi(c[1]), std::stoi(c[2]), std::stoull(c[3])});
        } catch (const std::exception&) {
            throw std::runtime_error(p.string() + ":" + std::to_string(n) + ": malformed row");
        }
        if (rows.back().label < 0 || rows.back().repetition < 0)
            throw std::runtime_error(p.string() + ":" + std::to_string(n) + ": negative label or repetition");
    }
    return rows;
}

LoadedDataset load_dataset(const std::string& dir) {
    LoadedDataset d;
    d.rows = read_manifest(dir);
    for (auto& r : d.rows) {
        fs::path raw = fs::path(dir) / r.window_path;
        fs::path prep = prep_sibling(raw.string());
        if (!fs::exists(raw)) throw MissingArtifact(raw.string());
        if (!fs::exists(prep)) throw MissingArtifact(prep.string());
        d.windows.raw.push_back(read_tensor(raw.string()));
        d.windows.prep.push_back(read_tensor(prep.string()));
        d.windows.labels.push_back(r.label);
        d.windows.repetitions.push_back(r.repetition);
    }
    return d;
}

void write_decomposition(const std::string& dir, const std::vector<WindowDecomposition>& per_window) {
    fs::path root(dir);
    fs::create_directories(root);
    std::ostringstream spikes, sil;
    spikes << "window_id,source_idx,sample_idx\n";
    sil << "window_id,source_idx,sil\n";
    Tensor images({uint32_t(per_window.size()), 7, 8, 16});
    const size_t per = 7 * 8 * 16;
    for (size_t i = 0; i < per_window.size(); ++i) {
        auto& w = per_window[i];
        for (size_t k = 0; k < w.sources.size(); ++k) {
            for (int t : w.sources[k].spikes) spikes << i << ',' << k << ',' << t << '\n';
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", w.sources[k].sil);
            sil << i << ',' << k << ',' << buf << '\n';
        }
        if (w.stack.size() != per) throw std::invalid_argument("write_decomposition: stack must be [7, 8, 16]");
        std::copy(w.stack.data.begin(), w.stack.data.end(), images.data.begin() + i * per);
    }
    write_text(root / "spikes.csv", spikes.str());
    write_text(root / "sil.csv", sil.str());
    write_tensor((root / "images.hydt").string(), images);
}

std::vector<Tensor> read_stacks(const std::string& dir, size_t expected_windows) {
    fs::path p = fs::path(dir) / "images.hydt";
    if (!fs::exists(p)) throw MissingArtifact(p.string());
    Tensor images = read_tensor(p.string());
    if (images.rank() != 4 || images.dims[1] != 7 || images.dims[2] != 8 || images.dims[3] != 16)
        throw std::runtime_error(p.string() + ": expected [n, 7, 8, 16], got " + dims_str(images.dims));
    if (images.dims[0] != expected_windows)
        throw std::runtime_error(p.string() + ": " + std::to_string(images.dims[0]) + " stacks for " +
                                 std::to_string(expected_windows) + " manifest windows");
    std::vector<Tensor> out;
    const size_t per = 7 * 8 * 16;
    for (size_t i = 0; i < expected_windows; ++i)
        out.emplace_back(std::vector<uint32_t>{7, 8, 16},
                         std::vector<float>(images.data.begin() + i * per, images.data.begin() + (i + 1) * per));
    return out;
}

SubjectData load_subject(const std::string& data_dir, const std::string& decomp_dir) {
    auto ds = load_dataset(data_dir);
    SubjectData d;
    d.labels = std::move(ds.windows.labels);
    d.repetitions = std::move(ds.windows.repetitions);
    d.raw = std::move(ds.windows.raw);
    d.prep = std::move(ds.windows.prep);
    if (!decomp_dir.empty()) {
        d.stacks = read_stacks(decomp_dir, d.size());
        for (auto& s : d.stacks) d.stack_hash.push_back(fnv1a(s.data.data(), s.data.size() * sizeof(float)));
    }
    return d;
}

}  // namespace hydra
