#include "hydra/fusion.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace hydra {

using Eigen::VectorXd;

FusionHead FusionHead::init(int in_dim, int hidden, int num_classes, SeededRng& rng) {
    if (in_dim < 1 || hidden < 1 || num_classes < 1) throw std::invalid_argument("fusion head: dims must be positive");
    FusionHead h;
    h.in_dim = in_dim;
    h.hidden = hidden;
    h.num_classes = num_classes;
    h.params.add("fc1_w", {uint32_t(in_dim), uint32_t(hidden)});
    h.params.add("fc1_b", {uint32_t(hidden)});
    h.params.add("fc2_w", {uint32_t(hidden), uint32_t(num_classes)});
    h.params.add("fc2_b", {uint32_t(num_classes)});
    for (auto name : {"fc1_w", "fc2_w"})
        for (auto& v : h.params.vec(name)) v = 0.02 * rng.normal();
    return h;
}

VectorXd FusionHead::logits(const VectorXd& x) const {
    if (x.size() != in_dim)
        throw std::invalid_argument("fusion head expects " + std::to_string(in_dim) + " features, got " + std::to_string(x.size()));
    VectorXd a = params.mat("fc1_w").transpose() * x + params.vec("fc1_b");
    VectorXd g = a.unaryExpr([](double v) { return gelu(v); });
    return params.mat("fc2_w").transpose() * g + params.vec("fc2_b");
}

double FusionHead::loss_and_grad(const VectorXd& x, int label, std::vector<double>& grad, VectorXd* logits_out) const {
    if (x.size() != in_dim) throw std::invalid_argument("fusion head: feature width mismatch");
    if (grad.size() != params.size()) grad.assign(params.size(), 0.0);
    VectorXd a = params.mat("fc1_w").transpose() * x + params.vec("fc1_b");
    VectorXd g = a.unaryExpr([](double v) { return gelu(v); });
    VectorXd z = params.mat("fc2_w").transpose() * g + params.vec("fc2_b");
    VectorXd p = softmax(z);
    double mx = z.maxCoeff();
    double L = mx + std::log((z.array() - mx).exp().sum()) - z(label);
    VectorXd dz = p;
    dz(label) -= 1;
    auto gm = [&](const char* n) {
        auto& s = params.slot(n);
        return MatMap(grad.data() + s.offset, s.shape[0], Eigen::Index(s.size() / s.shape[0]));
    };
    auto gvv = [&](const char* n) {
        auto& s = params.slot(n);
        return VecMap(grad.data() + s.offset, Eigen::Index(s.size()));
    };
    gm("fc2_w") += g * dz.transpose();
    gvv("fc2_b") += dz;
    VectorXd da = (params.mat("fc2_w") * dz).cwiseProduct(a.unaryExpr([](double v) { return gelu_grad(v); }));
    gm("fc1_w") += x * da.transpose();
    gvv("fc1_b") += da;
    if (logits_out) *logits_out = z;
    return L;
}

VectorXd fuse_features(const VectorXd& macro, const RowMat& micro) {
    if (micro.cols() != macro.size()) throw std::invalid_argument("fuse_features: token widths differ");
    VectorXd out(macro.size() * (1 + micro.rows()));
    out.head(macro.size()) = macro;
    for (Eigen::Index s = 0; s < micro.rows(); ++s) out.segment(macro.size() * (1 + s), macro.size()) = micro.row(s).transpose();
    return out;
}

VectorXd fusion_features(const VitModel& macro, const VitModel& micro, const float* macro_in, const float* micro_in) {
    if (macro.cfg.embed_dim != micro.cfg.embed_dim) throw std::invalid_argument("fusion: backbone embedding widths differ");
    VectorXd tok = encode(macro, macro_in);
    RowMat micro_tokens(micro.cfg.slots, micro.cfg.embed_dim);
    for (int s = 0; s < micro.cfg.slots; ++s)
        micro_tokens.row(s) = encode(micro, micro_in + size_t(s) * micro.cfg.image_size()).transpose();
    return fuse_features(tok, micro_tokens);
}

std::vector<EpochStat> train_fusion(FusionHead& head, const std::vector<VectorXd>& feats, const std::vector<int>& labels,
                                    const FusionTrainParams& tp) {
    if (feats.empty() || feats.size() != labels.size()) throw std::invalid_argument("train_fusion: empty or mismatched dataset");
    AdamW opt;
    opt.lr = tp.lr;
    opt.weight_decay = tp.weight_decay;
    SeededRng rng(tp.seed);
    std::vector<size_t> order(feats.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad(head.params.size());
    std::vector<EpochStat> curve;
    for (int ep = 0; ep < tp.epochs; ++ep) {
        rng.shuffle(order);
        double tot = 0;
        size_t correct = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += size_t(tp.batch_size)) {
            size_t b1 = std::min(order.size(), b0 + size_t(tp.batch_size));
            std::fill(grad.begin(), grad.end(), 0.0);
            for (size_t i = b0; i < b1; ++i) {
                VectorXd z;
                tot += head.loss_and_grad(feats[order[i]], labels[order[i]], grad, &z);
                correct += predict_label(z) == labels[order[i]];
            }
            for (auto& g : grad) g /= double(b1 - b0);
            opt.update(head.params.theta, grad);
        }
        curve.push_back({ep + 1, tot / double(order.size()), double(correct) / double(order.size())});
    }
    return curve;
}

Prediction predict(const FusionHead& head, const VectorXd& feats) {
    Prediction p;
    p.probs = softmax(head.logits(feats));
    p.label = predict_label(p.probs);
    return p;
}

void save_fusion(const std::string& dir, const FusionHead& h) {
    nlohmann::json j = {{"in_dim", h.in_dim}, {"hidden", h.hidden}, {"num_classes", h.num_classes}};
    save_params(dir, "fusion", h.params, j.dump());
}

FusionHead load_fusion(const std::string& dir) {
    auto j = nlohmann::json::parse(read_checkpoint_config(dir, "fusion"));
    SeededRng rng(0);
    FusionHead h = FusionHead::init(j["in_dim"], j["hidden"], j["num_classes"], rng);
    load_params(dir, "fusion", h.params);
    return h;
}

}  // namespace hydra
