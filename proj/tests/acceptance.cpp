// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.
// usage: acceptance [cli_path] [work_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>

#include "hydra/dataset.hpp"
#include "hydra/muap.hpp"
#include "hydra/tensor_io.hpp"

using namespace hydra;
using Eigen::MatrixXd;
namespace fs = std::filesystem;

namespace {

constexpr double kDecompRoa = 0.9;
constexpr int kDecompMatched = 3, kDecompSeeds = 10, kDecompSeedsNeeded = 8;
constexpr double kDecompSecondsPerWindow = 10.0;
constexpr double kWhitenTol = 1e-6;
constexpr int kNoiseSeeds = 100, kNoiseCleanNeeded = 90;
constexpr double kStaCorr = 0.9, kActiveFraction = 0.25;
constexpr double kGradTol = 1e-4, kRowSumTol = 1e-6, kNoPosTol = 1e-5, kTrainedPosMin = 1e-3;
constexpr double kSmokeAcc = 0.80, kSmokeMinutes = 15.0;
constexpr int kSubjects = 5;
constexpr double kFusionSlackPoints = 2.0;
constexpr int kRoundTrips = 1000;

using Clock = std::chrono::steady_clock;

int rand_int(SeededRng& r, int lo, int hi) { return lo + int(r.below(uint64_t(hi - lo + 1))); }
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;
void report(const char* name, bool ok, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    std::fflush(stdout);
    failures += !ok;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double cov_identity_error(const MatrixXd& z) {
    MatrixXd zc = z.colwise() - z.rowwise().mean();
    MatrixXd c = zc * zc.transpose() / double(z.cols());
    MatrixXd I = MatrixXd::Identity(c.rows(), c.cols());
    return (c - I).norm() / I.norm();
}

struct Planted {
    MuapBank bank;
    SpikeTrainSet trains;
    SignalRecord rec;
};

Planted planted(uint64_t seed, int n_mus, double snr) {
    SeededRng rng(seed);
    Planted p;
    p.bank = generate_muap_bank(n_mus, 128, 20, rng);
    p.trains = generate_spike_trains(n_mus, 512, 15, rng);
    p.rec = mix(p.bank, p.trains, snr, rng);
    return p;
}

// Planted trains matched one-to-one (greedy, best first) to distinct sources with RoA >= kDecompRoa.
int matched_sources(const std::vector<SourceEstimate>& src, const SpikeTrainSet& truth, int max_delay) {
    std::vector<std::tuple<double, size_t, size_t>> pairs;
    for (size_t t = 0; t < truth.trains.size(); ++t)
        for (size_t s = 0; s < src.size(); ++s)
            pairs.emplace_back(rate_of_agreement(src[s].firings, truth.trains[t], 1, 0, max_delay), t, s);
    std::sort(pairs.begin(), pairs.end(), [](auto& a, auto& b) { return std::get<0>(a) > std::get<0>(b); });
    std::vector<char> used_t(truth.trains.size()), used_s(src.size());
    int n = 0;
    for (auto& [roa, t, s] : pairs) {
        if (roa < kDecompRoa || used_t[t] || used_s[s]) continue;
        used_t[t] = used_s[s] = 1;
        ++n;
    }
    return n;
}

void decomposition_oracle() {
    DecompositionParams p;
    SeededRng unused(0);
    int good = 0;
    double worst_time = 0;
    std::string per_seed;
    for (uint64_t seed = 0; seed < kDecompSeeds; ++seed) {
        auto pl = planted(seed, 4, 20);
        auto t0 = Clock::now();
        auto src = decompose_window(pl.rec.x, p, unused);
        worst_time = std::max(worst_time, seconds_since(t0));
        int m = matched_sources(src, pl.trains, p.max_delay());
        good += m >= kDecompMatched;
        per_seed += std::to_string(m);
    }
    bool ok = good >= kDecompSeedsNeeded && worst_time < kDecompSecondsPerWindow;
    report("decomposition-oracle", ok,
           std::to_string(good) + "/10 seeds with >=3 of 4 MUs at RoA>=0.9 (matched per seed " + per_seed +
               "), slowest window " + fmt("%.2f s (limit %.0f s)", worst_time, kDecompSecondsPerWindow));
}

void whitening() {
    DecompositionParams p;
    double worst = 0;
    int windows = 0;
    auto check = [&](const MatrixXd& x) {
        MatrixXd xp = MatrixXd::Zero(x.rows(), x.cols() + p.pad());
        xp.leftCols(x.cols()) = x;
        // as used by the decomposition, and with the plain eigenvalue floor
        worst = std::max(worst, cov_identity_error(whiten_extended(xp, p.extension_factor, p.eig_floor, p.subspace_factor).z));
        worst = std::max(worst, cov_identity_error(whiten(extend(x, p.extension_factor), p.eig_floor, 0.0).z));
        ++windows;
    };
    for (uint64_t seed = 0; seed < kDecompSeeds; ++seed) check(to_matrix(planted(seed, 4, 20).rec.x));
    GestureDatasetConfig g;
    g.num_classes = 2;
    g.reps_per_class = 1;
    g.windows_per_rep = 5;
    auto w = build_windows(g, PreprocessConfig{});
    for (auto& raw : w.raw) check(to_matrix(from_grid(raw)));
    report("whitening", worst < kWhitenTol,
           fmt("max ||cov(z) - I||_F / ||I||_F = %.3g over %.0f windows (limit 1e-6)", worst, windows));
}

void false_positives() {
    DecompositionParams p;
    SeededRng unused(0);
    int clean = 0;
    for (int s = 0; s < kNoiseSeeds; ++s) {
        SeededRng r(100000 + s);
        Tensor x({128, 512});
        for (auto& v : x.data) v = float(r.normal());
        clean += decompose_window(x, p, unused).empty();
    }
    report("false-positive-control", clean >= kNoiseCleanNeeded,
           std::to_string(clean) + "/100 pure-noise windows with no accepted source (need >= 90)");
}

double corr(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size(), mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

void sta_fidelity() {
    double worst_corr = 1;
    int argmax_ok = 0, seeds = 10, channels = 0;
    for (int seed = 0; seed < seeds; ++seed) {
        SeededRng r(500 + seed);
        MuapBank bank = generate_muap_bank(1, 128, 20, r);
        SpikeTrain sp;
        for (int k = 0; k < 10; ++k) sp.push_back(10 + 48 * k + int(rand_int(r, 0, 7)));
        SpikeTrainSet tr;
        tr.duration = 512;
        tr.trains = {sp};
        auto rec = mix(bank, tr, 20.0, r);
        auto m = sta_muap(rec.x, sp);
        std::vector<double> p2p(128);
        for (int ch = 0; ch < 128; ++ch) {
            float mn = 1e9f, mx = -1e9f;
            for (int l = 0; l < 20; ++l) mn = std::min(mn, bank.h.at(0, ch, l)), mx = std::max(mx, bank.h.at(0, ch, l));
            p2p[ch] = mx - mn;
        }
        double peak = *std::max_element(p2p.begin(), p2p.end());
        for (int ch = 0; ch < 128; ++ch) {
            if (p2p[ch] < kActiveFraction * peak) continue;
            auto [row, col] = grid_pos(ch);
            std::vector<double> a, b;
            for (int l = 0; l < 20; ++l) a.push_back(m.waveforms.at(row, col, l)), b.push_back(bank.h.at(0, ch, l));
            worst_corr = std::min(worst_corr, corr(a, b));
            ++channels;
        }
        auto im = p2p_image(m);
        int arg = int(std::max_element(im.p2p.data.begin(), im.p2p.data.end()) - im.p2p.data.begin());
        auto [row, col] = grid_pos(bank.center[0]);
        argmax_ok += arg == row * 16 + col;
    }
    report("sta-fidelity", worst_corr >= kStaCorr && argmax_ok == seeds,
           fmt("10 spikes at 20 dB, 10 MUs: min active-channel corr %.4f over %.0f channels (need >= 0.9); "
               "p2p argmax at planted center %.0f/10",
               worst_corr, channels, argmax_ok));
}

// ---- ViT numerics on a d = 8, 2-layer, 3-patch model ----

VitConfig toy_vit() {
    VitConfig c;
    c.image_h = 6;
    c.image_w = 4;
    c.in_channels = 2;
    c.patch_h = 2;
    c.patch_w = 4;
    c.embed_dim = 8;
    c.num_heads = 2;
    c.num_layers = 2;
    c.num_classes = 3;
    return c;
}

double fd_error(VitModel& m, const std::vector<float>& x, int label) {
    std::vector<double> g;
    loss_and_grad(m, x.data(), label, g);
    double worst = 0;
    for (auto& s : m.params.slots()) {
        double num = 0, den = 0, gn = 0;
        for (size_t i = 0; i < s.size(); ++i) {
            size_t k = s.offset + i;
            const double o = m.params.theta[k], h = 1e-5;  // ~cbrt(eps): truncation and rounding balanced
            m.params.theta[k] = o + h;
            double lp = loss(m, x.data(), label);
            m.params.theta[k] = o - h;
            double lm = loss(m, x.data(), label);
            m.params.theta[k] = o;
            double fd = (lp - lm) / (2 * h);
            num += (fd - g[k]) * (fd - g[k]);
            den += fd * fd;
            gn += g[k] * g[k];
        }
        double scale = std::max(std::sqrt(den), std::sqrt(gn));
        if (scale < 1e-9) continue;  // key biases: exactly zero gradient on both sides
        worst = std::max(worst, std::sqrt(num) / scale);
    }
    return worst;
}

// Copy of x with the three 2-row patches reordered by perm.
std::vector<float> permute_patches(const VitConfig& c, const std::vector<float>& x, const std::array<int, 3>& perm) {
    std::vector<float> y(x.size());
    for (int ch = 0; ch < c.in_channels; ++ch)
        for (int p = 0; p < 3; ++p)
            for (int r = 0; r < c.patch_h; ++r)
                for (int w = 0; w < c.image_w; ++w)
                    y[(ch * c.image_h + p * c.patch_h + r) * c.image_w + w] =
                        x[(ch * c.image_h + perm[p] * c.patch_h + r) * c.image_w + w];
    return y;
}

void vit_numerics() {
    VitConfig c = toy_vit();
    double grad_err = 0;
    for (double scale : {0.0, 0.2}) {
        SeededRng r(11);
        auto m = VitModel::init(c, r);
        if (scale > 0)
            for (auto& v : m.params.theta) v = scale * r.normal();
        std::vector<float> x(c.sample_size());
        for (auto& v : x) v = float(r.normal());
        for (int label = 0; label < 3; ++label) grad_err = std::max(grad_err, fd_error(m, x, label));
    }

    // Position-dependent task: one bright patch, class = its position. Patch content is identical across classes,
    // so only the positional embedding can separate them.
    SeededRng r(12);
    std::vector<std::vector<float>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 60; ++i) {
        std::vector<float> x(c.sample_size());
        for (auto& v : x) v = float(0.1 * r.normal());
        int y = i % 3;
        for (int ch = 0; ch < 2; ++ch)
            for (int rr = 0; rr < 2; ++rr)
                for (int w = 0; w < 4; ++w) x[(ch * 6 + y * 2 + rr) * 4 + w] += 1.0f;
        xs.push_back(std::move(x));
        ys.push_back(y);
    }
    std::vector<const float*> ptr;
    for (auto& x : xs) ptr.push_back(x.data());
    auto m = VitModel::init(c, r);
    TrainParams tp{1e-2, 0.0, 60, 10, 3, {}};
    auto curve = train(m, ptr, ys, tp);

    double row_dev = 0, nopos_delta = 0, trained_delta = 0;
    auto nopos = m;
    nopos.params.mat("pos_embed").setZero();
    const std::array<std::array<int, 3>, 5> perms = {{{1, 0, 2}, {0, 2, 1}, {2, 1, 0}, {1, 2, 0}, {2, 0, 1}}};
    for (size_t i = 0; i < 12; ++i) {
        for (auto& layer : attention_maps(m, xs[i].data()))
            for (auto& a : layer)
                for (int k = 0; k < a.rows(); ++k) row_dev = std::max(row_dev, std::abs(a.row(k).sum() - 1));
        auto base = forward(m, xs[i].data()).logits, base0 = forward(nopos, xs[i].data()).logits;
        for (auto& p : perms) {
            auto y = permute_patches(c, xs[i], p);
            trained_delta = std::max(trained_delta, (forward(m, y.data()).logits - base).cwiseAbs().maxCoeff());
            nopos_delta = std::max(nopos_delta, (forward(nopos, y.data()).logits - base0).cwiseAbs().maxCoeff());
        }
    }
    bool ok = grad_err < kGradTol && row_dev < kRowSumTol && nopos_delta <= kNoPosTol && trained_delta > kTrainedPosMin;
    report("vit-numerics", ok,
           fmt("grad rel err %.2e (< 1e-4); attention row-sum dev %.1e (< 1e-6); permutation delta zero-pos %.1e (<= 1e-5), ",
               grad_err, row_dev, nopos_delta) +
               fmt("trained-pos %.3g (> 1e-3, train acc %.2f)", trained_delta, curve.back().train_acc));
}

// ---- end-to-end: training smoke (subject 0) and fusion ordering (5 subjects) ----

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void end_to_end(const fs::path& work) {
    const int jobs = std::max(1u, std::thread::hardware_concurrency());
    Hyper h = desk_hyper(4);
    ResultTable table({"macro", "micro", "hydra"});
    std::vector<double> mac(kSubjects), mic(kSubjects), hyd(kSubjects);
    double smoke_seconds = 0;
    std::vector<FoldOutcome> smoke_folds;
    bool trained_all = true;
    for (int s = 0; s < kSubjects; ++s) {
        auto t0 = Clock::now();
        GestureDatasetConfig g;
        g.seed = uint64_t(s);
        SubjectData d = build_subject(g, PreprocessConfig{}, DecompositionParams{}, jobs);
        auto specs = kfold_split(d.labels, d.repetitions);
        std::vector<FoldOutcome> out(specs.size());
        std::string err;
        try {
            parallel_for(specs.size(), jobs, [&](size_t f) { out[f] = run_fold(d, specs[f], h, fold_seed(0, g.seed, int(f))); });
        } catch (const std::exception& e) {
            err = e.what();
        }
        if (!err.empty()) {
            std::printf("subject %d failed: %s\n", s, err.c_str());
            trained_all = false;
            continue;
        }
        for (size_t f = 0; f < out.size(); ++f) {
            table.set("macro", int(f), s, out[f].macro);
            table.set("micro", int(f), s, out[f].micro);
            table.set("hydra", int(f), s, out[f].hydra);
            std::printf("  subject %d fold %zu: macro %.3f micro %.3f hydra %.3f\n", s, f, out[f].macro, out[f].micro, out[f].hydra);
        }
        mac[s] = table.subject_accuracy("macro", s);
        mic[s] = table.subject_accuracy("micro", s);
        hyd[s] = table.subject_accuracy("hydra", s);
        if (s == 0) {
            smoke_seconds = seconds_since(t0);
            smoke_folds = out;
        }
    }

    if (smoke_folds.empty()) {
        report("training-smoke", false, "subject 0 failed to train");
    } else {
        std::string folds;
        for (auto& o : smoke_folds) folds += fmt(" %.3f/%.3f", o.macro, o.micro);
        bool ok = mac[0] >= kSmokeAcc && mic[0] >= kSmokeAcc && smoke_seconds < kSmokeMinutes * 60;
        report("training-smoke", ok,
               fmt("4 classes, 5 reps, 200 windows, 5 folds: macro %.3f micro %.3f (need >= 0.80); %.1f min incl. "
                   "decomposition (limit 15); per-fold macro/micro:",
                   mac[0], mic[0], smoke_seconds / 60) +
                   folds);
    }

    if (!trained_all) {
        report("fusion-ordering", false, "a subject failed to train");
        return;
    }
    fs::create_directories(work / "report");
    std::ofstream(work / "report" / "results.csv") << table.csv();
    std::ofstream(work / "report" / "table.txt") << table.text_table();
    std::ofstream(work / "report" / "boxplot.csv") << table.boxplot_csv();
    std::fputs(table.text_table().c_str(), stdout);

    bool every = true;
    std::string per;
    for (int s = 0; s < kSubjects; ++s) {
        every = every && hyd[s] * 100 >= std::max(mac[s], mic[s]) * 100 - kFusionSlackPoints;
        per += fmt(" %.3f/%.3f/%.3f", mac[s], mic[s], hyd[s]);
    }
    const double mh = median(hyd), mm = median(mac), mu = median(mic);
    size_t box_rows = 0;
    std::istringstream bp(table.boxplot_csv());
    for (std::string line; std::getline(bp, line);) box_rows += !line.empty();
    bool ok = mh >= mm && mh >= mu && every && box_rows == 1 + 3 * kSubjects;
    report("fusion-ordering", ok,
           fmt("median hydra %.3f vs macro %.3f, micro %.3f; ", mh, mm, mu) +
               "hydra >= max - 2 pts on every subject: " + (every ? "yes" : "no") +
               "; macro/micro/hydra per subject:" + per + "; report in " + (work / "report").string());
}

// ---- CLI determinism ----

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

bool cli_pipeline(const std::string& cli, const fs::path& dir, std::string& why) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = (dir / "data").string(), tiny =
        " --profile desk --set macro.epochs=2 --set micro.epochs=2 --set fusion.epochs=2 --set eval.folds=5";
    const std::vector<std::string> steps = {
        cli + " generate --classes 2 --reps 5 --windows-per-rep 2 --seed 3 --out " + d,
        cli + " decompose --in " + d + " --jobs 2",
        cli + " train-macro --data " + d + " --fold 1 --out " + (dir / "macro").string() + tiny,
        cli + " train-micro --data " + d + " --fold 1 --out " + (dir / "micro").string() + tiny,
        cli + " train-fusion --data " + d + " --fold 1 --macro " + (dir / "macro").string() + " --micro " +
            (dir / "micro").string() + " --out " + (dir / "fusion").string() + tiny,
        cli + " evaluate --data " + d + " --jobs 2 --out " + (dir / "eval").string() + tiny,
        cli + " report --results " + (dir / "eval").string() + " --out " + (dir / "report").string(),
        cli + " predict --window " + d + "/raw/w00003.hydt --window " + d + "/raw/w00017.hydt --macro " +
            (dir / "macro").string() + " --micro " + (dir / "micro").string() + " --fusion " + (dir / "fusion").string() +
            " > " + (dir / "predict.txt").string(),
    };
    for (auto& s : steps) {
        int rc = std::system((s + (s.find(" > ") == std::string::npos ? " > /dev/null" : "") + " 2>/dev/null").c_str());
        if (rc != 0) {
            why = "step failed: " + s;
            return false;
        }
    }
    return true;
}

void cli_determinism(const std::string& cli, const fs::path& work) {
    if (cli.empty() || !fs::exists(cli)) {
        report("cli-determinism", false, "CLI binary not found: " + cli);
        return;
    }
    std::string why;
    fs::path a = work / "cli_a", b = work / "cli_b";
    if (!cli_pipeline(cli, a, why) || !cli_pipeline(cli, b, why)) {
        report("cli-determinism", false, why);
        return;
    }
    size_t files = 0, hydt = 0, csv = 0;
    std::vector<std::string> differ;
    for (auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        fs::path rel = fs::relative(e.path(), a);
        ++files;
        hydt += rel.extension() == ".hydt";
        csv += rel.extension() == ".csv";
        if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) differ.push_back(rel.string());
    }
    size_t files_b = 0;
    for (auto& e : fs::recursive_directory_iterator(b)) files_b += e.is_regular_file();
    bool ok = differ.empty() && files == files_b && hydt > 0 && csv > 0 && !slurp(a / "predict.txt").empty();
    report("cli-determinism", ok,
           "generate/decompose/train-*/evaluate/report/predict run twice: " + std::to_string(files) + " files (" +
               std::to_string(hydt) + " HYDT, " + std::to_string(csv) + " CSV), " + std::to_string(differ.size()) +
               " differ" + (differ.empty() ? "" : " (first: " + differ.front() + ")"));
}

void hydt_round_trip(const fs::path& work) {
    SeededRng r(2024);
    int ok = 0, by_rank[5] = {0}, empty = 0;
    fs::create_directories(work);
    for (int i = 0; i < kRoundTrips; ++i) {
        int rank = 1 + int(rand_int(r, 0, 3));
        std::vector<uint32_t> dims(rank);
        for (auto& d : dims) d = uint32_t(rand_int(r, 1, 6));
        if (i % 10 == 0) dims[rand_int(r, 0, rank - 1)] = 0;
        Tensor t(dims);
        for (auto& v : t.data) {
            switch (rand_int(r, 0, 9)) {
                case 0: v = std::numeric_limits<float>::quiet_NaN(); break;
                case 1: v = -0.0f; break;
                case 2: v = std::numeric_limits<float>::infinity(); break;
                case 3: v = std::numeric_limits<float>::denorm_min(); break;
                default: v = float(r.normal() * std::pow(10.0, rand_int(r, -30, 30)));
            }
        }
        std::string bytes = encode_tensor(t);
        bool good = bytes.size() == 7 + 4 * size_t(rank) + 4 * t.size();
        Tensor back = decode_tensor(bytes);
        good = good && back.dims == t.dims && back == t && encode_tensor(back) == bytes;
        if (i % 20 == 0) {
            fs::path p = work / "rt.hydt";
            write_tensor(p.string(), t);
            good = good && read_tensor(p.string()) == t && slurp(p) == bytes;
        }
        ok += good;
        by_rank[rank]++;
        empty += t.size() == 0;
    }
    report("hydt-round-trip", ok == kRoundTrips && empty > 0 && by_rank[1] && by_rank[2] && by_rank[3] && by_rank[4],
           std::to_string(ok) + "/1000 bit-exact (ranks 1-4: " + std::to_string(by_rank[1]) + "/" + std::to_string(by_rank[2]) +
               "/" + std::to_string(by_rank[3]) + "/" + std::to_string(by_rank[4]) + ", " + std::to_string(empty) +
               " empty, NaN/-0/inf/subnormal payloads)");
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::path("acceptance_out");
    fs::create_directories(work);
    auto t0 = Clock::now();
    decomposition_oracle();
    whitening();
    false_positives();
    sta_fidelity();
    vit_numerics();
    hydt_round_trip(work);
    cli_determinism(cli, work);
    end_to_end(work);
    std::printf("%d criteria failed, %.1f min total\n", failures, seconds_since(t0) / 60);
    return failures == 0 ? 0 : 1;
}
