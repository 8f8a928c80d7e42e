#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hydra/decomposition.hpp"
#include "hydra/pipeline.hpp"

namespace hydra {

// A required upstream file is absent; path() names it.
class MissingArtifact : public std::runtime_error {
public:
    explicit MissingArtifact(const std::string& path)
        : std::runtime_error("missing artifact: " + path), path_(path) {}
    const std::string& path() const { return path_; }
private:
    std::string path_;
};

struct ManifestRow {
    std::string window_path;  // relative to the dataset directory
    int label = 0;
    int repetition = 0;
    uint64_t subject = 0;
};

// DIR/manifest.csv (window_path,label,repetition,subject), DIR/raw/wNNNNN.hydt, and the
// preprocessed view of every window at the same name under DIR/prep/.
void write_dataset(const std::string& dir, const DatasetWindows& w, uint64_t subject);
std::vector<ManifestRow> read_manifest(const std::string& dir);
std::string prep_sibling(const std::string& raw_path);  // .../raw/x.hydt -> .../prep/x.hydt

struct LoadedDataset {
    std::vector<ManifestRow> rows;
    DatasetWindows windows;
};
LoadedDataset load_dataset(const std::string& dir);

struct WindowDecomposition {
    std::vector<SourceEstimate> sources;
    Tensor stack;  // [7, 8, 16]
};
// DIR/spikes.csv (window_id,source_idx,sample_idx), DIR/sil.csv (window_id,source_idx,sil),
// DIR/images.hydt [n, 7, 8, 16] in manifest order.
void write_decomposition(const std::string& dir, const std::vector<WindowDecomposition>& per_window);
std::vector<Tensor> read_stacks(const std::string& dir, size_t expected_windows);

// Dataset plus MUAP stacks; stacks are left empty when decomp_dir is empty.
SubjectData load_subject(const std::string& data_dir, const std::string& decomp_dir);

}  // namespace hydra
