#include "hydra/vit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "hydra/tensor_io.hpp"

namespace hydra {

using Eigen::VectorXd;

void VitConfig::validate() const {
    auto bad = [](const std::string& m) { throw std::invalid_argument("vit config: " + m); };
    if (image_h <= 0 || image_w <= 0 || in_channels <= 0 || patch_h <= 0 || patch_w <= 0) bad("dimensions must be positive");
    if (image_h % patch_h || image_w % patch_w) bad("image dims must be divisible by patch dims");
    if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads) bad("embed_dim must be divisible by num_heads");
    if (num_layers < 0 || num_classes < 1 || slots < 1) bad("need layers >= 0, classes >= 1, slots >= 1");
}

VitConfig VitConfig::macro(int num_classes) {
    VitConfig c;
    c.num_classes = num_classes;
    return c;
}

VitConfig VitConfig::micro(int num_classes) {
    VitConfig c;
    c.image_h = 8;
    c.image_w = 16;
    c.in_channels = 1;
    c.patch_h = 8;
    c.patch_w = 8;
    c.slots = 7;
    c.num_classes = num_classes;
    return c;
}

// ---- parameter store ----

void ParamSet::add(const std::string& name, std::vector<uint32_t> shape) {
    ParamSlot s{name, theta.size(), std::move(shape)};
    theta.resize(theta.size() + s.size(), 0.0);
    slots_.push_back(std::move(s));
}

const ParamSlot& ParamSet::slot(const std::string& name) const {
    for (auto& s : slots_)
        if (s.name == name) return s;
    throw std::out_of_range("no parameter named " + name);
}

static std::pair<Eigen::Index, Eigen::Index> rc(const ParamSlot& s) {
    if (s.shape.size() == 1) return {1, s.shape[0]};
    return {s.shape[0], Eigen::Index(s.size() / s.shape[0])};
}

MatMap ParamSet::mat(const std::string& name) {
    auto& s = slot(name);
    auto [r, c] = rc(s);
    return MatMap(theta.data() + s.offset, r, c);
}
CMatMap ParamSet::mat(const std::string& name) const {
    auto& s = slot(name);
    auto [r, c] = rc(s);
    return CMatMap(theta.data() + s.offset, r, c);
}
VecMap ParamSet::vec(const std::string& name) {
    auto& s = slot(name);
    return VecMap(theta.data() + s.offset, Eigen::Index(s.size()));
}
CVecMap ParamSet::vec(const std::string& name) const {
    auto& s = slot(name);
    return CVecMap(theta.data() + s.offset, Eigen::Index(s.size()));
}

void ParamSet::round_to_f32() {
    for (auto& v : theta) v = double(float(v));
}

uint64_t ParamSet::checksum() const {
    uint64_t h = 1469598103934665603ULL;
    auto p = reinterpret_cast<const unsigned char*>(theta.data());
    for (size_t i = 0; i < theta.size() * sizeof(double); ++i) h = (h ^ p[i]) * 1099511628211ULL;
    return h;
}

std::string VitModel::layer_key(int layer, const char* what) const { return "layer" + std::to_string(layer) + "." + what; }

VitModel VitModel::init(const VitConfig& cfg, SeededRng& rng) {
    cfg.validate();
    VitModel m;
    m.cfg = cfg;
    const uint32_t d = cfg.embed_dim, h = cfg.hidden(), n = cfg.num_patches() + 1;
    auto& ps = m.params;
    ps.add("embed", {uint32_t(cfg.patch_len()), d});
    ps.add("class_token", {d});
    ps.add("pos_embed", {n, d});
    for (int l = 0; l < cfg.num_layers; ++l) {
        auto k = [&](const char* w) { return m.layer_key(l, w); };
        ps.add(k("ln1_g"), {d});
        ps.add(k("ln1_b"), {d});
        ps.add(k("wq"), {d, d});
        ps.add(k("bq"), {d});
        ps.add(k("wk"), {d, d});
        ps.add(k("bk"), {d});
        ps.add(k("wv"), {d, d});
        ps.add(k("bv"), {d});
        ps.add(k("wo"), {d, d});
        ps.add(k("bo"), {d});
        ps.add(k("ln2_g"), {d});
        ps.add(k("ln2_b"), {d});
        ps.add(k("w1"), {d, h});
        ps.add(k("b1"), {h});
        ps.add(k("w2"), {h, d});
        ps.add(k("b2"), {d});
    }
    ps.add("head_w", {uint32_t(cfg.slots) * d, uint32_t(cfg.num_classes)});
    ps.add("head_b", {uint32_t(cfg.num_classes)});

    auto gauss = [&](const std::string& name) {
        for (auto& v : ps.vec(name)) v = 0.02 * rng.normal();
    };
    gauss("embed");
    gauss("pos_embed");
    for (int l = 0; l < cfg.num_layers; ++l) {
        for (auto w : {"wq", "wk", "wv", "wo", "w1", "w2"}) gauss(m.layer_key(l, w));
        ps.vec(m.layer_key(l, "ln1_g")).setOnes();
        ps.vec(m.layer_key(l, "ln2_g")).setOnes();
    }
    gauss("head_w");
    return m;
}

LayerView layer_view(const VitModel& m, int l) {
    const auto& p = m.params;
    auto k = [&](const char* w) { return m.layer_key(l, w); };
    return LayerView{p.vec(k("ln1_g")), p.vec(k("ln1_b")), p.mat(k("wq")), p.mat(k("wk")), p.mat(k("wv")),
                     p.mat(k("wo")),    p.vec(k("bq")),    p.vec(k("bk")), p.vec(k("bv")), p.vec(k("bo")),
                     p.vec(k("ln2_g")), p.vec(k("ln2_b")), p.mat(k("w1")), p.mat(k("w2")), p.vec(k("b1")),
                     p.vec(k("b2"))};
}

// ---- primitives ----

RowMat layer_norm(const RowMat& x, const VectorXd& g, const VectorXd& b, double eps, RowMat* xhat, VectorXd* rstd) {
    const Eigen::Index n = x.rows(), d = x.cols();
    RowMat y(n, d), xh(n, d);
    VectorXd rs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mu = x.row(i).mean();
        double var = (x.row(i).array() - mu).square().mean();
        rs(i) = 1.0 / std::sqrt(var + eps);
        xh.row(i) = (x.row(i).array() - mu) * rs(i);
        y.row(i) = xh.row(i).cwiseProduct(g.transpose()) + b.transpose();
    }
    if (xhat) *xhat = std::move(xh);
    if (rstd) *rstd = std::move(rs);
    return y;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi);
}

static void softmax_rows(RowMat& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
    }
}

VectorXd softmax(const VectorXd& z) {
    VectorXd p = (z.array() - z.maxCoeff()).exp();
    return p / p.sum();
}

RowMat scaled_dot_attention(const RowMat& q, const RowMat& k, const RowMat& v, double scale, RowMat* weights) {
    if (q.cols() != k.cols() || k.rows() != v.rows()) throw std::invalid_argument("attention: shape mismatch");
    RowMat s = q * k.transpose() / scale;
    softmax_rows(s);
    RowMat out = s * v;
    if (weights) *weights = std::move(s);
    return out;
}

RowMat patchify(const VitConfig& cfg, const float* img) {
    const int gh = cfg.image_h / cfg.patch_h, gw = cfg.image_w / cfg.patch_w;
    RowMat p(gh * gw, cfg.patch_len());
    for (int pr = 0; pr < gh; ++pr)
        for (int pc = 0; pc < gw; ++pc) {
            int col = 0;
            for (int c = 0; c < cfg.in_channels; ++c)
                for (int r = 0; r < cfg.patch_h; ++r)
                    for (int w = 0; w < cfg.patch_w; ++w)
                        p(pr * gw + pc, col++) =
                            img[(size_t(c) * cfg.image_h + pr * cfg.patch_h + r) * cfg.image_w + pc * cfg.patch_w + w];
        }
    return p;
}

static RowMat embed_rows(const VitModel& m, const RowMat& patches) {
    const auto& p = m.params;
    RowMat z(patches.rows() + 1, m.cfg.embed_dim);
    z.row(0) = p.vec("class_token").transpose();
    z.bottomRows(patches.rows()) = patches * p.mat("embed");
    z += p.mat("pos_embed");
    return z;
}

RowMat patchify_embed(const VitModel& m, const float* image) { return embed_rows(m, patchify(m.cfg, image)); }

static double attn_scale(const VitConfig& c) {
    return std::sqrt(double(c.scale_by_model_dim ? c.embed_dim : c.head_dim()));
}

RowMat msa(const VitModel& m, int layer, const RowMat& z, LayerTrace* tr) {
    const auto& c = m.cfg;
    LayerView w = layer_view(m, layer);
    RowMat a_hat;
    VectorXd rstd;
    RowMat a = layer_norm(z, w.ln1_g, w.ln1_b, c.ln_eps, &a_hat, &rstd);
    RowMat q = (a * w.wq).rowwise() + w.bq.transpose();
    RowMat k = (a * w.wk).rowwise() + w.bk.transpose();
    RowMat v = (a * w.wv).rowwise() + w.bv.transpose();
    const int dh = c.head_dim();
    RowMat o(z.rows(), c.embed_dim);
    std::vector<RowMat> maps(c.num_heads);
    for (int h = 0; h < c.num_heads; ++h)
        o.middleCols(h * dh, dh) = scaled_dot_attention(q.middleCols(h * dh, dh), k.middleCols(h * dh, dh),
                                                        v.middleCols(h * dh, dh), attn_scale(c), &maps[h]);
    RowMat out = z + ((o * w.wo).rowwise() + w.bo.transpose());
    if (tr) {
        tr->x_in = z;
        tr->a_hat = std::move(a_hat);
        tr->rstd1 = std::move(rstd);
        tr->a = std::move(a);
        tr->q = std::move(q);
        tr->k = std::move(k);
        tr->v = std::move(v);
        tr->o = std::move(o);
        tr->attn = std::move(maps);
    }
    return out;
}

RowMat encoder_block(const VitModel& m, int layer, const RowMat& z, LayerTrace* tr) {
    RowMat x_mid = msa(m, layer, z, tr);
    LayerView w = layer_view(m, layer);
    RowMat b_hat;
    VectorXd rstd;
    RowMat b = layer_norm(x_mid, w.ln2_g, w.ln2_b, m.cfg.ln_eps, &b_hat, &rstd);
    RowMat h1 = (b * w.w1).rowwise() + w.b1.transpose();
    RowMat g = h1.unaryExpr([](double x) { return gelu(x); });
    RowMat out = x_mid + ((g * w.w2).rowwise() + w.b2.transpose());
    if (tr) {
        tr->x_mid = std::move(x_mid);
        tr->b_hat = std::move(b_hat);
        tr->rstd2 = std::move(rstd);
        tr->b = std::move(b);
        tr->h1 = std::move(h1);
        tr->g = std::move(g);
    }
    return out;
}

VectorXd encode(const VitModel& m, const float* image, EncodeTrace* tr) {
    RowMat patches = patchify(m.cfg, image);
    RowMat z = embed_rows(m, patches);
    if (tr) tr->layers.assign(m.cfg.num_layers, {});
    for (int l = 0; l < m.cfg.num_layers; ++l) {
        z = encoder_block(m, l, z, tr ? &tr->layers[l] : nullptr);
        if (!z.allFinite()) throw NumericalFailure("vit: non-finite activation in layer " + std::to_string(l));
    }
    VectorXd cls = z.row(0).transpose();
    if (tr) {
        tr->patches = std::move(patches);
        tr->out = std::move(z);
    }
    return cls;
}

VitOutput forward(const VitModel& m, const float* sample) {
    const auto& c = m.cfg;
    VitOutput out;
    out.tokens.resize(c.slots, c.embed_dim);
    for (int s = 0; s < c.slots; ++s) out.tokens.row(s) = encode(m, sample + size_t(s) * c.image_size()).transpose();
    Eigen::Map<const Eigen::RowVectorXd> feats(out.tokens.data(), c.slots * c.embed_dim);
    out.logits = (feats * m.params.mat("head_w")).transpose() + m.params.vec("head_b");
    if (!out.logits.allFinite()) throw NumericalFailure("vit: non-finite logits");
    return out;
}

std::vector<std::vector<RowMat>> attention_maps(const VitModel& m, const float* image) {
    EncodeTrace tr;
    encode(m, image, &tr);
    std::vector<std::vector<RowMat>> out;
    for (auto& l : tr.layers) out.push_back(l.attn);
    return out;
}

// ---- backward ----

namespace {

struct GradView {
    const ParamSet& ps;
    std::vector<double>& g;
    MatMap mat(const std::string& name) {
        auto& s = ps.slot(name);
        auto [r, c] = rc(s);
        return MatMap(g.data() + s.offset, r, c);
    }
    VecMap vec(const std::string& name) {
        auto& s = ps.slot(name);
        return VecMap(g.data() + s.offset, Eigen::Index(s.size()));
    }
};

RowMat layer_norm_backward(const RowMat& dy, const RowMat& xhat, const VectorXd& rstd, const CVecMap& gamma,
                           VecMap dgamma, VecMap dbeta) {
    dgamma += dy.cwiseProduct(xhat).colwise().sum().transpose();
    dbeta += dy.colwise().sum().transpose();
    RowMat dxh = dy.array().rowwise() * gamma.transpose().array();
    RowMat dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        double m1 = dxh.row(i).mean();
        double m2 = dxh.row(i).dot(xhat.row(i)) / double(dy.cols());
        dx.row(i) = rstd(i) * (dxh.row(i).array() - m1 - xhat.row(i).array() * m2);
    }
    return dx;
}

void encode_backward(const VitModel& m, const EncodeTrace& tr, const VectorXd& dcls, GradView& gv) {
    const auto& c = m.cfg;
    const int dh = c.head_dim();
    const double scale = attn_scale(c);
    RowMat dx = RowMat::Zero(tr.out.rows(), c.embed_dim);
    dx.row(0) = dcls.transpose();
    for (int l = c.num_layers - 1; l >= 0; --l) {
        const LayerTrace& t = tr.layers[l];
        LayerView w = layer_view(m, l);
        auto k = [&](const char* s) { return m.layer_key(l, s); };
        // feed-forward half
        RowMat df = dx;
        gv.mat(k("w2")) += t.g.transpose() * df;
        gv.vec(k("b2")) += df.colwise().sum().transpose();
        RowMat dh1 = (df * w.w2.transpose()).cwiseProduct(t.h1.unaryExpr([](double x) { return gelu_grad(x); }));
        gv.mat(k("w1")) += t.b.transpose() * dh1;
        gv.vec(k("b1")) += dh1.colwise().sum().transpose();
        RowMat db = dh1 * w.w1.transpose();
        dx += layer_norm_backward(db, t.b_hat, t.rstd2, w.ln2_g, gv.vec(k("ln2_g")), gv.vec(k("ln2_b")));
        // attention half
        RowMat dm = dx;
        gv.mat(k("wo")) += t.o.transpose() * dm;
        gv.vec(k("bo")) += dm.colwise().sum().transpose();
        RowMat dout = dm * w.wo.transpose();
        RowMat dq(t.q.rows(), t.q.cols()), dk(t.k.rows(), t.k.cols()), dv(t.v.rows(), t.v.cols());
        for (int h = 0; h < c.num_heads; ++h) {
            const RowMat& A = t.attn[h];
            RowMat doh = dout.middleCols(h * dh, dh);
            RowMat dA = doh * t.v.middleCols(h * dh, dh).transpose();
            dv.middleCols(h * dh, dh) = A.transpose() * doh;
            RowMat dS = A.cwiseProduct(dA);
            VectorXd rs = dS.rowwise().sum();
            dS = dS - (A.array().colwise() * rs.array()).matrix();
            dq.middleCols(h * dh, dh) = dS * t.k.middleCols(h * dh, dh) / scale;
            dk.middleCols(h * dh, dh) = dS.transpose() * t.q.middleCols(h * dh, dh) / scale;
        }
        gv.mat(k("wq")) += t.a.transpose() * dq;
        gv.vec(k("bq")) += dq.colwise().sum().transpose();
        gv.mat(k("wk")) += t.a.transpose() * dk;
        gv.vec(k("bk")) += dk.colwise().sum().transpose();
        gv.mat(k("wv")) += t.a.transpose() * dv;
        gv.vec(k("bv")) += dv.colwise().sum().transpose();
        RowMat da = dq * w.wq.transpose() + dk * w.wk.transpose() + dv * w.wv.transpose();
        dx += layer_norm_backward(da, t.a_hat, t.rstd1, w.ln1_g, gv.vec(k("ln1_g")), gv.vec(k("ln1_b")));
    }
    gv.vec("class_token") += dx.row(0).transpose();
    gv.mat("pos_embed") += dx;
    gv.mat("embed") += tr.patches.transpose() * dx.bottomRows(dx.rows() - 1);
}

}  // namespace

double loss_and_grad(const VitModel& m, const float* sample, int label, std::vector<double>& grad, VectorXd* logits_out) {
    const auto& c = m.cfg;
    if (label < 0 || label >= c.num_classes) throw std::invalid_argument("vit: label out of range");
    if (grad.size() != m.params.size()) grad.assign(m.params.size(), 0.0);
    std::vector<EncodeTrace> traces(c.slots);
    Eigen::RowVectorXd feats(c.slots * c.embed_dim);
    for (int s = 0; s < c.slots; ++s)
        feats.segment(s * c.embed_dim, c.embed_dim) = encode(m, sample + size_t(s) * c.image_size(), &traces[s]).transpose();
    VectorXd logits = (feats * m.params.mat("head_w")).transpose() + m.params.vec("head_b");
    if (!logits.allFinite()) throw NumericalFailure("vit: non-finite logits");
    VectorXd p = softmax(logits);
    double mx = logits.maxCoeff();
    double lse = mx + std::log((logits.array() - mx).exp().sum());
    double L = lse - logits(label);
    VectorXd dlog = p;
    dlog(label) -= 1.0;

    GradView gv{m.params, grad};
    gv.mat("head_w") += feats.transpose() * dlog.transpose();
    gv.vec("head_b") += dlog;
    VectorXd dfeats = m.params.mat("head_w") * dlog;
    for (int s = 0; s < c.slots; ++s) encode_backward(m, traces[s], dfeats.segment(s * c.embed_dim, c.embed_dim), gv);
    if (logits_out) *logits_out = logits;
    return L;
}

double loss(const VitModel& m, const float* sample, int label) {
    VectorXd z = forward(m, sample).logits;
    double mx = z.maxCoeff();
    return mx + std::log((z.array() - mx).exp().sum()) - z(label);
}

int predict_label(const VectorXd& logits) {
    Eigen::Index i;
    logits.maxCoeff(&i);
    return int(i);
}

// ---- optimisation ----

void AdamW::update(std::vector<double>& theta, const std::vector<double>& g, const std::vector<char>* frozen) {
    if (m.size() != theta.size()) {
        m.assign(theta.size(), 0.0);
        v.assign(theta.size(), 0.0);
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, double(step)), c2 = 1.0 - std::pow(beta2, double(step));
    for (size_t i = 0; i < theta.size(); ++i) {
        if (frozen && (*frozen)[i]) continue;
        m[i] = beta1 * m[i] + (1 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
        double mh = m[i] / c1, vh = v[i] / c2;
        theta[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * theta[i]);
    }
}

std::vector<EpochStat> train(VitModel& model, const std::vector<const float*>& samples, const std::vector<int>& labels,
                             const TrainParams& tp, const std::function<void(const EpochStat&)>& on_epoch) {
    if (samples.empty() || samples.size() != labels.size()) throw std::invalid_argument("train: empty or mismatched dataset");
    if (tp.batch_size < 1 || tp.epochs < 0) throw std::invalid_argument("train: bad batch size or epochs");
    std::vector<char> frozen(model.params.size(), 0);
    for (auto& name : tp.frozen) {
        auto& s = model.params.slot(name);
        std::fill_n(frozen.begin() + s.offset, s.size(), 1);
    }
    AdamW opt;
    opt.lr = tp.lr;
    opt.weight_decay = tp.weight_decay;
    SeededRng rng(tp.seed);
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad(model.params.size());
    std::vector<EpochStat> curve;
    for (int ep = 0; ep < tp.epochs; ++ep) {
        rng.shuffle(order);
        double tot = 0;
        size_t correct = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += size_t(tp.batch_size)) {
            size_t b1 = std::min(order.size(), b0 + size_t(tp.batch_size));
            std::fill(grad.begin(), grad.end(), 0.0);
            for (size_t i = b0; i < b1; ++i) {
                VectorXd logits;
                tot += loss_and_grad(model, samples[order[i]], labels[order[i]], grad, &logits);
                correct += predict_label(logits) == labels[order[i]];
            }
            const double inv = 1.0 / double(b1 - b0);
            for (auto& g : grad) g *= inv;
            opt.update(model.params.theta, grad, &frozen);
            for (double v : model.params.theta)
                if (!std::isfinite(v)) throw NumericalFailure("train: non-finite parameter after epoch " + std::to_string(ep + 1));
        }
        EpochStat st{ep + 1, tot / double(order.size()), double(correct) / double(order.size())};
        curve.push_back(st);
        if (on_epoch) on_epoch(st);
    }
    return curve;
}

// ---- inputs ----

Tensor macro_input(const Tensor& w) {
    if (w.rank() != 3) throw std::invalid_argument("macro_input: expected [T, 8, 16], got " + dims_str(w.dims));
    const uint32_t T = w.dims[0], R = w.dims[1], C = w.dims[2];
    Tensor out({R, T, C});
    for (uint32_t t = 0; t < T; ++t)
        for (uint32_t r = 0; r < R; ++r)
            for (uint32_t c = 0; c < C; ++c) out.at(r, t, c) = w.at(t, r, c);
    return out;
}

Tensor micro_input(const Tensor& stack) {
    if (stack.rank() != 3) throw std::invalid_argument("micro_input: expected [7, 8, 16], got " + dims_str(stack.dims));
    Tensor out = stack;
    const size_t per = size_t(stack.dims[1]) * stack.dims[2];
    for (size_t s = 0; s < stack.dims[0]; ++s) {
        float mx = 0;
        for (size_t i = 0; i < per; ++i) mx = std::max(mx, std::abs(stack[s * per + i]));
        if (mx > 0)
            for (size_t i = 0; i < per; ++i) out[s * per + i] = stack[s * per + i] / mx;
    }
    return out;
}

// ---- checkpoints ----

std::string vit_config_json(const VitConfig& c) {
    nlohmann::json j = {{"image_h", c.image_h},       {"image_w", c.image_w},       {"in_channels", c.in_channels},
                        {"patch_h", c.patch_h},       {"patch_w", c.patch_w},       {"embed_dim", c.embed_dim},
                        {"num_heads", c.num_heads},   {"num_layers", c.num_layers}, {"mlp_hidden", c.hidden()},
                        {"num_classes", c.num_classes}, {"slots", c.slots},
                        {"scale_by_model_dim", c.scale_by_model_dim}, {"ln_eps", c.ln_eps}};
    return j.dump();
}

void save_params(const std::string& dir, const std::string& kind, const ParamSet& ps, const std::string& config_json) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json man;
    man["kind"] = kind;
    man["config"] = nlohmann::json::parse(config_json);
    man["params"] = nlohmann::json::array();
    for (auto& s : ps.slots()) {
        Tensor t(s.shape);
        for (size_t i = 0; i < s.size(); ++i) t[i] = float(ps.theta[s.offset + i]);
        std::string file = s.name + ".hydt";
        write_tensor((fs::path(dir) / file).string(), t);
        man["params"].push_back({{"name", s.name}, {"file", file}, {"shape", s.shape}});
    }
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error(dir + ": cannot write manifest");
    f << man.dump(2) << "\n";
}

void save_vit(const std::string& dir, const VitModel& m) { save_params(dir, "vit", m.params, vit_config_json(m.cfg)); }

static nlohmann::json read_manifest(const std::string& dir, const std::string& kind) {
    namespace fs = std::filesystem;
    auto path = fs::path(dir) / "manifest.json";
    std::ifstream f(path);
    if (!f) throw std::runtime_error("missing checkpoint manifest " + path.string());
    auto man = nlohmann::json::parse(f);
    if (man.value("kind", "") != kind) throw std::runtime_error(path.string() + ": expected a " + kind + " checkpoint");
    return man;
}

std::string read_checkpoint_config(const std::string& dir, const std::string& kind) {
    return read_manifest(dir, kind)["config"].dump();
}

void load_params(const std::string& dir, const std::string& kind, ParamSet& ps) {
    namespace fs = std::filesystem;
    auto man = read_manifest(dir, kind);
    if (man["params"].size() != ps.slots().size()) throw std::runtime_error(dir + ": parameter count mismatch");
    for (auto& e : man["params"]) {
        std::string name = e["name"];
        auto& s = ps.slot(name);
        Tensor t = read_tensor((fs::path(dir) / e["file"].get<std::string>()).string());
        if (t.dims != s.shape) throw std::runtime_error(dir + ": parameter " + name + " has shape " + dims_str(t.dims));
        for (size_t i = 0; i < s.size(); ++i) ps.theta[s.offset + i] = t[i];
    }
}

VitModel load_vit(const std::string& dir) {
    auto j = nlohmann::json::parse(read_checkpoint_config(dir, "vit"));
    VitConfig c;
    c.image_h = j["image_h"];
    c.image_w = j["image_w"];
    c.in_channels = j["in_channels"];
    c.patch_h = j["patch_h"];
    c.patch_w = j["patch_w"];
    c.embed_dim = j["embed_dim"];
    c.num_heads = j["num_heads"];
    c.num_layers = j["num_layers"];
    c.mlp_hidden = j["mlp_hidden"];
    c.num_classes = j["num_classes"];
    c.slots = j["slots"];
    c.scale_by_model_dim = j["scale_by_model_dim"];
    c.ln_eps = j["ln_eps"];
    SeededRng rng(0);
    VitModel m = VitModel::init(c, rng);
    load_params(dir, "vit", m.params);
    return m;
}

void write_loss_csv(const std::string& path, const std::vector<EpochStat>& curve) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path + ": cannot write");
    f << "epoch,loss,train_acc\n";
    char buf[96];
    for (auto& s : curve) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f\n", s.epoch, s.loss, s.train_acc);
        f << buf;
    }
}

}  // namespace hydra
