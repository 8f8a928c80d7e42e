#include "hydra/pipeline.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "hydra/muap.hpp"

namespace hydra {

uint64_t fnv1a(const void* data, size_t bytes, uint64_t h) {
    auto p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min<int>(jobs, int(n)); ++j)
        pool.emplace_back([&] {
            for (size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

DatasetWindows build_windows(const GestureDatasetConfig& gcfg, const PreprocessConfig& pcfg) {
    PreprocessConfig wcfg = pcfg;
    wcfg.window_len = gcfg.window_len;
    wcfg.skip = gcfg.skip;
    DatasetWindows out;
    for (auto& rep : generate_repetitions(gcfg)) {
        auto raw = window(rep.record.x, wcfg);
        auto prep = preprocess_repetition(rep.record.x, wcfg);
        for (size_t i = 0; i < raw.size(); ++i) {
            out.labels.push_back(rep.label);
            out.repetitions.push_back(rep.repetition);
            out.raw.push_back(std::move(raw[i]));
            out.prep.push_back(std::move(prep[i]));
        }
    }
    return out;
}

StackResult window_stack(const Tensor& raw_window, const DecompositionParams& dp, int sta_sub_window) {
    Tensor x = from_grid(raw_window);
    SeededRng unused(0);
    StackResult r;
    r.sources = decompose_window(x, dp, unused);
    std::vector<MuapImage> images;
    for (size_t k = 0; k < r.sources.size(); ++k)
        images.push_back(p2p_image(sta_muap(x, r.sources[k].spikes, dp.muap_len, sta_sub_window, int(k))));
    r.stack = muap_feature_stack(images);
    return r;
}

SubjectData build_subject(const GestureDatasetConfig& gcfg, const PreprocessConfig& pcfg, const DecompositionParams& dp, int jobs) {
    auto w = build_windows(gcfg, pcfg);
    SubjectData d;
    d.labels = std::move(w.labels);
    d.repetitions = std::move(w.repetitions);
    d.raw = std::move(w.raw);
    d.prep = std::move(w.prep);
    d.stacks.resize(d.size());
    d.stack_hash.resize(d.size());
    parallel_for(d.size(), jobs, [&](size_t i) {
        d.stacks[i] = window_stack(d.raw[i], dp).stack;
        d.stack_hash[i] = fnv1a(d.stacks[i].data.data(), d.stacks[i].data.size() * sizeof(float));
    });
    return d;
}

Hyper paper_hyper(int num_classes) {
    Hyper h;
    h.macro = VitConfig::macro(num_classes);
    h.micro = VitConfig::micro(num_classes);
    h.macro_train = {1e-4, 1e-3, 20, 128, 0, {}};
    h.micro_train = {3e-4, 1e-3, 50, 64, 0, {}};
    h.fusion_hidden = 128;
    h.fusion_train = {5e-4, 1e-4, 20, 128, 0};
    return h;
}

Hyper desk_hyper(int num_classes) {
    Hyper h = paper_hyper(num_classes);
    for (VitConfig* c : {&h.macro, &h.micro}) {
        c->embed_dim = 32;
        c->num_heads = 4;
        c->mlp_hidden = 0;
    }
    h.macro_train.lr = 3e-4;
    h.macro_train.batch_size = 16;
    h.micro_train.lr = 1e-3;
    h.micro_train.batch_size = 16;
    h.micro_train.epochs = 20;
    h.fusion_hidden = 64;
    h.fusion_train.lr = 1e-3;
    h.fusion_train.batch_size = 16;
    return h;
}

namespace {

std::vector<Tensor> macro_inputs(const SubjectData& d, const std::vector<size_t>& idx) {
    std::vector<Tensor> v;
    for (size_t i : idx) v.push_back(macro_input(d.prep[i]));
    return v;
}

std::vector<Tensor> micro_inputs(const SubjectData& d, const std::vector<size_t>& idx) {
    std::vector<Tensor> v;
    for (size_t i : idx) v.push_back(micro_input(d.stacks[i]));
    return v;
}

std::vector<const float*> ptrs(const std::vector<Tensor>& v) {
    std::vector<const float*> p;
    for (auto& t : v) p.push_back(t.data.data());
    return p;
}

std::vector<int> labels_of(const SubjectData& d, const std::vector<size_t>& idx) {
    std::vector<int> y;
    for (size_t i : idx) y.push_back(d.labels[i]);
    return y;
}

double score(const VitModel& m, const std::vector<Tensor>& in, const std::vector<int>& y) {
    std::vector<int> pred;
    for (auto& t : in) pred.push_back(predict_label(forward(m, t.data.data()).logits));
    return accuracy(pred, y);
}

}  // namespace

std::vector<Eigen::VectorXd> fused_features(const VitModel& macro, const VitModel& micro, const SubjectData& d,
                                            const std::vector<size_t>& idx) {
    std::vector<Eigen::VectorXd> f;
    for (size_t i : idx) {
        Tensor a = macro_input(d.prep[i]), b = micro_input(d.stacks[i]);
        f.push_back(fusion_features(macro, micro, a.data.data(), b.data.data()));
    }
    return f;
}

uint64_t fold_seed(uint64_t seed, uint64_t subject, int fold) {
    uint64_t parts[3] = {seed, subject, uint64_t(int64_t(fold))};
    return fnv1a(parts, sizeof parts);
}

VitModel train_macro(const SubjectData& d, const std::vector<size_t>& idx, const Hyper& h, uint64_t seed,
                     std::vector<EpochStat>* curve) {
    SeededRng root(seed), r = root.fork(1);
    VitModel m = VitModel::init(h.macro, r);
    auto in = macro_inputs(d, idx);
    TrainParams tp = h.macro_train;
    tp.seed = root.fork(2).next_u64();
    auto c = train(m, ptrs(in), labels_of(d, idx), tp);
    m.params.round_to_f32();
    if (curve) *curve = std::move(c);
    return m;
}

VitModel train_micro(const SubjectData& d, const std::vector<size_t>& idx, const Hyper& h, uint64_t seed,
                     std::vector<EpochStat>* curve) {
    SeededRng root(seed), r = root.fork(3);
    VitModel m = VitModel::init(h.micro, r);
    auto in = micro_inputs(d, idx);
    TrainParams tp = h.micro_train;
    tp.seed = root.fork(4).next_u64();
    auto c = train(m, ptrs(in), labels_of(d, idx), tp);
    m.params.round_to_f32();
    if (curve) *curve = std::move(c);
    return m;
}

FusionHead train_fusion_head(const VitModel& macro, const VitModel& micro, const SubjectData& d,
                             const std::vector<size_t>& idx, const Hyper& h, uint64_t seed, std::vector<EpochStat>* curve) {
    if (macro.cfg.num_classes != micro.cfg.num_classes)
        throw std::invalid_argument("fusion: macro and micro backbones disagree on the class count");
    SeededRng root(seed), r = root.fork(5);
    const int in_dim = (1 + micro.cfg.slots) * macro.cfg.embed_dim;
    FusionHead head = FusionHead::init(in_dim, h.fusion_hidden, macro.cfg.num_classes, r);
    FusionTrainParams tp = h.fusion_train;
    tp.seed = root.fork(6).next_u64();
    auto c = train_fusion(head, fused_features(macro, micro, d, idx), labels_of(d, idx), tp);
    head.params.round_to_f32();
    if (curve) *curve = std::move(c);
    return head;
}

double score_macro(const VitModel& m, const SubjectData& d, const std::vector<size_t>& idx) {
    return score(m, macro_inputs(d, idx), labels_of(d, idx));
}

double score_micro(const VitModel& m, const SubjectData& d, const std::vector<size_t>& idx) {
    return score(m, micro_inputs(d, idx), labels_of(d, idx));
}

double score_hydra(const Models& m, const SubjectData& d, const std::vector<size_t>& idx) {
    std::vector<int> pred;
    for (auto& x : fused_features(m.macro, m.micro, d, idx)) pred.push_back(predict(m.fusion, x).label);
    return accuracy(pred, labels_of(d, idx));
}

FoldOutcome run_fold(const SubjectData& d, const FoldSpec& f, const Hyper& h, uint64_t seed, ModelMask mask, Models* trained) {
    auto ix = fold_indices(d.repetitions, f);
    std::set<size_t> train_ids(ix.train.begin(), ix.train.end());
    for (size_t i : ix.test)
        if (train_ids.count(i)) throw std::logic_error("run_fold: test window in training set");

    FoldOutcome out;
    Models m;
    if (mask.macro || mask.hydra) {
        m.macro = train_macro(d, ix.train, h, seed, &out.macro_curve);
        out.macro = score_macro(m.macro, d, ix.test);
    }
    if (mask.micro || mask.hydra) {
        m.micro = train_micro(d, ix.train, h, seed, &out.micro_curve);
        out.micro = score_micro(m.micro, d, ix.test);
    }
    if (mask.hydra) {
        m.fusion = train_fusion_head(m.macro, m.micro, d, ix.train, h, seed, &out.fusion_curve);
        out.hydra = score_hydra(m, d, ix.test);
    }
    if (trained) *trained = std::move(m);
    return out;
}

}  // namespace hydra
