#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hydra/rng.hpp"
#include "hydra/tensor.hpp"

namespace hydra {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

struct VitConfig {
    int image_h = 512, image_w = 16, in_channels = 8;
    int patch_h = 8, patch_w = 16;
    int embed_dim = 128;
    int num_heads = 8;
    int num_layers = 2;
    int mlp_hidden = 0;      // 0 -> 4 * embed_dim
    int num_classes = 66;
    int slots = 1;           // images per sample sharing the encoder; head sees slots*d features
    bool scale_by_model_dim = false;  // attention logits / sqrt(d) instead of / sqrt(d_h)
    double ln_eps = 1e-6;

    int num_patches() const { return (image_h / patch_h) * (image_w / patch_w); }
    int patch_len() const { return in_channels * patch_h * patch_w; }
    int hidden() const { return mlp_hidden > 0 ? mlp_hidden : 4 * embed_dim; }
    int head_dim() const { return embed_dim / num_heads; }
    int image_size() const { return in_channels * image_h * image_w; }
    int sample_size() const { return slots * image_size(); }
    void validate() const;

    static VitConfig macro(int num_classes);
    static VitConfig micro(int num_classes);
};

class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParamSlot {
    std::string name;
    size_t offset = 0;
    std::vector<uint32_t> shape;
    size_t size() const { return Tensor::count(shape); }
};

// Flat parameter store with named views; shared by the ViT and the fusion head.
class ParamSet {
public:
    void add(const std::string& name, std::vector<uint32_t> shape);
    const std::vector<ParamSlot>& slots() const { return slots_; }
    const ParamSlot& slot(const std::string& name) const;
    size_t size() const { return theta.size(); }

    MatMap mat(const std::string& name);
    CMatMap mat(const std::string& name) const;
    VecMap vec(const std::string& name);
    CVecMap vec(const std::string& name) const;

    void round_to_f32();
    uint64_t checksum() const;  // FNV-1a over the raw bytes

    std::vector<double> theta;

private:
    std::vector<ParamSlot> slots_;
};

struct VitModel {
    VitConfig cfg;
    ParamSet params;

    static VitModel init(const VitConfig& cfg, SeededRng& rng);
    std::string layer_key(int layer, const char* what) const;
};

// Per-layer weights resolved once per forward pass.
struct LayerView {
    CVecMap ln1_g, ln1_b;
    CMatMap wq, wk, wv, wo;
    CVecMap bq, bk, bv, bo;
    CVecMap ln2_g, ln2_b;
    CMatMap w1, w2;
    CVecMap b1, b2;
};
LayerView layer_view(const VitModel& m, int layer);

// Row-wise layer norm; xhat/rstd are saved for the backward pass when non-null.
RowMat layer_norm(const RowMat& x, const Eigen::VectorXd& g, const Eigen::VectorXd& b, double eps,
                  RowMat* xhat = nullptr, Eigen::VectorXd* rstd = nullptr);
double gelu(double x);
double gelu_grad(double x);

// softmax(Q K^T / scale) V; `weights` receives the attention matrix.
RowMat scaled_dot_attention(const RowMat& q, const RowMat& k, const RowMat& v, double scale, RowMat* weights = nullptr);

// [C, H, W] image -> [N, C*pH*pW], patches left-to-right, top-to-bottom; each flattened (channel, row, col).
RowMat patchify(const VitConfig& cfg, const float* image);
RowMat patchify_embed(const VitModel& m, const float* image);

struct LayerTrace {
    RowMat x_in, a_hat, a, q, k, v, o, x_mid, b_hat, b, h1, g;
    Eigen::VectorXd rstd1, rstd2;
    std::vector<RowMat> attn;  // per head
};
struct EncodeTrace {
    RowMat patches;
    std::vector<LayerTrace> layers;
    RowMat out;
};

// Z + MSA(LN(Z)), and FF(LN(.)) + . on top of it.
RowMat msa(const VitModel& m, int layer, const RowMat& z, LayerTrace* tr = nullptr);
RowMat encoder_block(const VitModel& m, int layer, const RowMat& z, LayerTrace* tr = nullptr);

// Class-token output of the encoder for one image.
Eigen::VectorXd encode(const VitModel& m, const float* image, EncodeTrace* tr = nullptr);

struct VitOutput {
    RowMat tokens;              // [slots, d]
    Eigen::VectorXd logits;     // [num_classes]
};
VitOutput forward(const VitModel& m, const float* sample);
std::vector<std::vector<RowMat>> attention_maps(const VitModel& m, const float* image);

// Softmax cross-entropy for one sample; accumulates d loss / d theta into grad (same layout as params).
double loss_and_grad(const VitModel& m, const float* sample, int label, std::vector<double>& grad,
                     Eigen::VectorXd* logits_out = nullptr);
double loss(const VitModel& m, const float* sample, int label);

Eigen::VectorXd softmax(const Eigen::VectorXd& z);

struct AdamW {
    double lr = 1e-4, weight_decay = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long step = 0;
    void update(std::vector<double>& theta, const std::vector<double>& grad, const std::vector<char>* frozen = nullptr);
};

struct TrainParams {
    double lr = 1e-4;
    double weight_decay = 1e-3;
    int epochs = 20;
    int batch_size = 128;
    uint64_t seed = 0;
    std::vector<std::string> frozen;  // parameter names kept fixed
};

struct EpochStat {
    int epoch = 0;
    double loss = 0;
    double train_acc = 0;
};

// samples: flat float data of cfg.sample_size() each.
std::vector<EpochStat> train(VitModel& m, const std::vector<const float*>& samples, const std::vector<int>& labels,
                             const TrainParams& tp, const std::function<void(const EpochStat&)>& on_epoch = {});

int predict_label(const Eigen::VectorXd& logits);

// Inputs for the two paths.
Tensor macro_input(const Tensor& window_tgg);  // [512, 8, 16] -> [8, 512, 16]
Tensor micro_input(const Tensor& stack);       // [7, 8, 16] -> per-image max-abs scaled copy

void save_params(const std::string& dir, const std::string& kind, const ParamSet& ps, const std::string& config_json);
void save_vit(const std::string& dir, const VitModel& m);
VitModel load_vit(const std::string& dir);
std::string read_checkpoint_config(const std::string& dir, const std::string& kind);
void load_params(const std::string& dir, const std::string& kind, ParamSet& ps);
std::string vit_config_json(const VitConfig& cfg);
void write_loss_csv(const std::string& path, const std::vector<EpochStat>& curve);

}  // namespace hydra
