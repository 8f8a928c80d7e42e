#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hydra/decomposition.hpp"
#include "hydra/eval.hpp"
#include "hydra/fusion.hpp"
#include "hydra/preprocess.hpp"
#include "hydra/signal_model.hpp"
#include "hydra/vit.hpp"

namespace hydra {

// One subject's windows with both model inputs ready.
struct SubjectData {
    std::vector<int> labels, repetitions;
    std::vector<Tensor> raw;       // [512, 8, 16] raw windows
    std::vector<Tensor> prep;      // [512, 8, 16] envelope + mu-law windows
    std::vector<Tensor> stacks;    // [7, 8, 16] MUAP p2p stacks
    std::vector<uint64_t> stack_hash;
    size_t size() const { return labels.size(); }
};

struct DatasetWindows {
    std::vector<int> labels, repetitions;
    std::vector<Tensor> raw, prep;
};
DatasetWindows build_windows(const GestureDatasetConfig& gcfg, const PreprocessConfig& pcfg);

struct StackResult {
    Tensor stack;                       // [7, 8, 16]
    std::vector<SourceEstimate> sources;
};
// Decompose one raw [512, 8, 16] window and build its MUAP image stack.
StackResult window_stack(const Tensor& raw_window, const DecompositionParams& dp, int sta_sub_window = 256);

// Runs fn(i) for i in [0, n) on up to `jobs` threads; results land by index, so order is deterministic.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

SubjectData build_subject(const GestureDatasetConfig& gcfg, const PreprocessConfig& pcfg, const DecompositionParams& dp, int jobs = 1);

uint64_t fnv1a(const void* data, size_t bytes, uint64_t h = 1469598103934665603ULL);

struct Hyper {
    VitConfig macro, micro;
    TrainParams macro_train, micro_train;
    int fusion_hidden = 128;
    FusionTrainParams fusion_train;
};
Hyper paper_hyper(int num_classes);
// Same architecture family scaled to one desktop core: d = 32, 4 heads.
Hyper desk_hyper(int num_classes);

struct Models {
    VitModel macro, micro;
    FusionHead fusion;
};

struct FoldOutcome {
    double macro = 0, micro = 0, hydra = 0;
    std::vector<EpochStat> macro_curve, micro_curve, fusion_curve;
};

struct ModelMask {
    bool macro = true, micro = true, hydra = true;
};

// Per-(subject, fold) training seed; fold -1 means "all windows".
uint64_t fold_seed(uint64_t seed, uint64_t subject, int fold);

// Single-path training on the windows in idx; every stream is forked from `seed` so any path can be retrained alone.
VitModel train_macro(const SubjectData& d, const std::vector<size_t>& idx, const Hyper& h, uint64_t seed,
                     std::vector<EpochStat>* curve = nullptr);
VitModel train_micro(const SubjectData& d, const std::vector<size_t>& idx, const Hyper& h, uint64_t seed,
                     std::vector<EpochStat>* curve = nullptr);
FusionHead train_fusion_head(const VitModel& macro, const VitModel& micro, const SubjectData& d,
                             const std::vector<size_t>& idx, const Hyper& h, uint64_t seed,
                             std::vector<EpochStat>* curve = nullptr);
double score_macro(const VitModel& m, const SubjectData& d, const std::vector<size_t>& idx);
double score_micro(const VitModel& m, const SubjectData& d, const std::vector<size_t>& idx);
double score_hydra(const Models& m, const SubjectData& d, const std::vector<size_t>& idx);

// Trains the requested models on the fold's training windows and scores the held-out repetition.
FoldOutcome run_fold(const SubjectData& d, const FoldSpec& f, const Hyper& h, uint64_t seed, ModelMask mask = {},
                     Models* trained = nullptr);

// Frozen-backbone features for a set of windows.
std::vector<Eigen::VectorXd> fused_features(const VitModel& macro, const VitModel& micro, const SubjectData& d,
                                            const std::vector<size_t>& idx);

}  // namespace hydra
