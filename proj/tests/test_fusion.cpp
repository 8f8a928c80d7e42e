#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "hydra/fusion.hpp"

using namespace hydra;
using Eigen::VectorXd;

namespace {

VitConfig small(int slots, int d) {
    VitConfig c = VitConfig::micro(3);
    c.slots = slots;
    c.embed_dim = d;
    c.num_heads = 2;
    c.num_layers = 1;
    return c;
}

}  // namespace

TEST_CASE("feature layout") {
    VectorXd macro = VectorXd::Zero(128);
    macro(0) = 1;
    RowMat micro = RowMat::Zero(7, 128);
    auto f = fuse_features(macro, micro);
    CHECK(f.size() == 1024);
    CHECK(f(0) == 1);
    CHECK(f.tail(1024 - 128).cwiseAbs().maxCoeff() == 0);

    SeededRng r(1);
    VectorXd a(128);
    RowMat b(7, 128);
    for (auto& v : a) v = r.normal();
    for (int i = 0; i < b.size(); ++i) b.data()[i] = r.normal();
    auto g = fuse_features(a, b);
    CHECK(g.head(128) == a);
    for (int s = 0; s < 7; ++s) CHECK(g.segment(128 * (1 + s), 128) == b.row(s).transpose());
    CHECK_THROWS_AS(fuse_features(VectorXd::Zero(64), micro), std::invalid_argument);
}

TEST_CASE("backbone width mismatch is rejected") {
    SeededRng r(2);
    auto a = VitModel::init(small(1, 8), r);
    auto b = VitModel::init(small(7, 16), r);
    std::vector<float> x(a.cfg.sample_size()), y(b.cfg.sample_size());
    CHECK_THROWS_AS(fusion_features(a, b, x.data(), y.data()), std::invalid_argument);
}

TEST_CASE("head gradients match finite differences") {
    SeededRng r(3);
    auto h = FusionHead::init(24, 6, 3, r);
    for (auto& v : h.params.theta) v = 0.3 * r.normal();
    VectorXd x(24);
    for (auto& v : x) v = r.normal();
    std::vector<double> g;
    h.loss_and_grad(x, 1, g);
    auto loss = [&] {
        VectorXd z = h.logits(x);
        double mx = z.maxCoeff();
        return mx + std::log((z.array() - mx).exp().sum()) - z(1);
    };
    for (size_t k = 0; k < h.params.size(); ++k) {
        double o = h.params.theta[k], e = 1e-5;
        h.params.theta[k] = o + e;
        double lp = loss();
        h.params.theta[k] = o - e;
        double lm = loss();
        h.params.theta[k] = o;
        double fd = (lp - lm) / (2 * e);
        CHECK(std::abs(fd - g[k]) <= 1e-4 * std::max(1e-3, std::abs(fd)));
    }
}

TEST_CASE("training on cached features; frozen backbones untouched; predictions normalised") {
    SeededRng r(4);
    auto macro = VitModel::init(small(1, 8), r);
    auto micro = VitModel::init(small(7, 8), r);
    for (auto* m : {&macro, &micro})
        for (auto& v : m->params.theta) v = 0.3 * r.normal();
    const uint64_t cm = macro.params.checksum(), cu = micro.params.checksum();

    std::vector<VectorXd> feats;
    std::vector<int> labels;
    std::vector<std::vector<float>> raw_a, raw_b;
    for (int i = 0; i < 60; ++i) {
        int y = i % 3;
        std::vector<float> a(macro.cfg.sample_size()), b(micro.cfg.sample_size());
        for (auto& v : a) v = float(0.2 * r.normal() + (y == 0));
        for (auto& v : b) v = float(0.2 * r.normal() + (y == 1));
        feats.push_back(fusion_features(macro, micro, a.data(), b.data()));
        labels.push_back(y);
        raw_a.push_back(a);
        raw_b.push_back(b);
    }
    auto head = FusionHead::init(64, 16, 3, r);
    auto before = head.params.theta;
    FusionTrainParams tp{0.0, 1e-4, 2, 8, 1};
    train_fusion(head, feats, labels, tp);
    CHECK(head.params.theta == before);

    tp = {5e-3, 1e-4, 60, 8, 1};
    auto curve = train_fusion(head, feats, labels, tp);
    CHECK(curve.back().loss < curve.front().loss);
    CHECK(macro.params.checksum() == cm);
    CHECK(micro.params.checksum() == cu);

    int ok = 0;
    for (size_t i = 0; i < feats.size(); ++i) {
        auto p = predict(head, feats[i]);
        CHECK(std::abs(p.probs.sum() - 1) < 1e-6);
        ok += p.label == labels[i];
        CHECK(predict(head, feats[i]).label == p.label);
        // re-running the backbones gives the cached features' logits
        auto again = fusion_features(macro, micro, raw_a[i].data(), raw_b[i].data());
        CHECK((head.logits(again) - head.logits(feats[i])).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(ok >= 0.95 * feats.size());
}

TEST_CASE("fusion checkpoint round trip") {
    namespace fs = std::filesystem;
    SeededRng r(5);
    auto h = FusionHead::init(32, 8, 4, r);
    h.params.round_to_f32();
    auto dir = (fs::temp_directory_path() / "hydra_fusion_ckpt").string();
    fs::remove_all(dir);
    save_fusion(dir, h);
    auto back = load_fusion(dir);
    CHECK(back.in_dim == 32);
    CHECK(back.hidden == 8);
    CHECK(back.num_classes == 4);
    CHECK(back.params.theta == h.params.theta);
    CHECK_THROWS(load_fusion((fs::temp_directory_path() / "hydra_missing_fusion").string()));
    CHECK_THROWS(load_vit(dir));  // wrong kind
}
