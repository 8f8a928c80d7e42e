#pragma once

#include <string>
#include <vector>

#include "hydra/vit.hpp"

namespace hydra {

// fc1 [in -> hidden] + GELU + fc2 [hidden -> classes], in = (1 + 7) * d.
struct FusionHead {
    int in_dim = 1024, hidden = 128, num_classes = 66;
    ParamSet params;

    static FusionHead init(int in_dim, int hidden, int num_classes, SeededRng& rng);
    Eigen::VectorXd logits(const Eigen::VectorXd& feats) const;
    double loss_and_grad(const Eigen::VectorXd& feats, int label, std::vector<double>& grad,
                         Eigen::VectorXd* logits_out = nullptr) const;
};

// [macro | micro slot 0 | ... | micro slot 6]
Eigen::VectorXd fuse_features(const Eigen::VectorXd& macro_token, const RowMat& micro_tokens);

// Frozen-backbone features for one window: raw macro input [8,512,16] and micro stack [7,8,16] (already normalized).
Eigen::VectorXd fusion_features(const VitModel& macro, const VitModel& micro, const float* macro_in, const float* micro_in);

struct FusionTrainParams {
    double lr = 5e-4;
    double weight_decay = 1e-4;
    int epochs = 20;
    int batch_size = 128;
    uint64_t seed = 0;
};

std::vector<EpochStat> train_fusion(FusionHead& head, const std::vector<Eigen::VectorXd>& feats, const std::vector<int>& labels,
                                    const FusionTrainParams& tp);

struct Prediction {
    int label = 0;
    Eigen::VectorXd probs;
};
Prediction predict(const FusionHead& head, const Eigen::VectorXd& feats);

void save_fusion(const std::string& dir, const FusionHead& h);
FusionHead load_fusion(const std::string& dir);

}  // namespace hydra
