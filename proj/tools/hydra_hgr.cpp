#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "hydra/config.hpp"
#include "hydra/dataset.hpp"
#include "hydra/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace hydra;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Options shared by every subcommand; flags that map onto config keys are applied only when given.
struct Common {
    std::string config_file, profile;
    std::vector<std::string> sets;
    bool print_config = false;
    std::vector<std::pair<CLI::Option*, std::string>> mapped;  // option -> config key
    std::map<std::string, std::string> values;

    void add(CLI::App* app) {
        app->add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
        app->add_option("--profile", profile, "hyperparameter profile: paper or desk");
        app->add_option("--set", sets, "override a configuration key (key=value), repeatable");
        app->add_flag("--print-config", print_config, "print the fully resolved configuration and exit");
    }
    void map(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        mapped.emplace_back(app->add_option(flag, values[key], help), key);
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (const char* env = std::getenv("HYDRA_HGR_SEED")) cfg.set("seed", env);
        if (!profile.empty()) cfg.set("profile", profile);
        if (!config_file.empty()) cfg.load_file(config_file, !profile.empty());
        for (auto& kv : sets) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        for (auto& [opt, key] : mapped)
            if (opt->count()) cfg.set(key, values.at(key));
        return cfg;
    }
};

void write_file(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << s;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void require_dir(const std::string& dir, const char* what) {
    if (dir.empty()) throw UsageError(std::string(what) + " is required");
    if (!fs::is_directory(dir)) throw MissingArtifact(dir);
}

int num_classes_of(const std::vector<int>& labels) {
    int c = 0;
    for (int y : labels) c = std::max(c, y + 1);
    return c;
}

uint64_t subject_of(const std::string& data_dir) {
    auto rows = read_manifest(data_dir);
    if (rows.empty()) throw std::runtime_error(data_dir + "/manifest.csv has no windows");
    return rows.front().subject;
}

// Training windows for --fold k (held-out repetition k removed) or every window for --fold -1.
std::vector<size_t> train_windows(const SubjectData& d, int fold, int folds, std::vector<size_t>* test) {
    if (fold < 0) {
        std::vector<size_t> all(d.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }
    if (fold >= folds) throw ConfigError("--fold must be < eval.folds (" + std::to_string(folds) + ")");
    auto specs = kfold_split(d.labels, d.repetitions, folds);
    auto ix = fold_indices(d.repetitions, specs[fold]);
    if (test) *test = ix.test;
    return ix.train;
}

std::string default_decomp(const std::string& data, const std::string& decomp) {
    return decomp.empty() ? (fs::path(data) / "decomp").string() : decomp;
}

void save_curve(const std::string& out, const std::vector<EpochStat>& curve) {
    write_loss_csv((fs::path(out) / "loss.csv").string(), curve);
}

std::string runs_header() { return "subject,fold,model,accuracy\n"; }

ResultTable table_from_runs(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifact(path);
    std::string line;
    std::getline(f, line);
    if (line + "\n" != runs_header()) throw std::runtime_error(path + ": unexpected header");
    struct Run {
        int subject, fold;
        std::string model;
        double acc;
    };
    std::vector<Run> runs;
    std::vector<std::string> models;
    int folds = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string s, k, m, a;
        std::getline(ss, s, ',');
        std::getline(ss, k, ',');
        std::getline(ss, m, ',');
        std::getline(ss, a, ',');
        Run r{std::stoi(s), std::stoi(k), m, std::stod(a)};
        if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);
        folds = std::max(folds, r.fold + 1);
        runs.push_back(r);
    }
    if (runs.empty()) throw std::runtime_error(path + ": no runs");
    ResultTable t(models, folds);
    for (auto& r : runs) t.set(r.model, r.fold, r.subject, r.acc);
    return t;
}

void write_report(const fs::path& out, const ResultTable& t) {
    write_file(out / "results.csv", t.csv());
    write_file(out / "table.txt", t.text_table());
    write_file(out / "boxplot.csv", t.boxplot_csv());
}

std::vector<std::string> parse_models(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string m;
    while (std::getline(ss, m, ',')) {
        if (m != "macro" && m != "micro" && m != "hydra") throw ConfigError("unknown model '" + m + "' (macro, micro, hydra)");
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (out.empty()) throw ConfigError("--models is empty");
    return out;
}

// ---- subcommands ----

int cmd_generate(const RunConfig& cfg, const std::string& out) {
    if (out.empty()) throw UsageError("--out is required");
    auto g = cfg.dataset();
    auto w = build_windows(g, cfg.preprocess());
    write_dataset(out, w, g.seed);
    write_file(fs::path(out) / "config.txt", cfg.dump());
    std::printf("wrote %zu windows (%d classes x %d reps) to %s\n", w.raw.size(), g.num_classes, g.reps_per_class, out.c_str());
    return 0;
}

int cmd_decompose(const RunConfig& cfg, const std::string& in, std::string out) {
    require_dir(in, "--in");
    auto ds = load_dataset(in);
    if (out.empty()) out = (fs::path(in) / "decomp").string();
    auto dp = cfg.decomposition();
    std::vector<WindowDecomposition> res(ds.rows.size());
    parallel_for(res.size(), cfg.get_int("jobs"), [&](size_t i) {
        auto r = window_stack(ds.windows.raw[i], dp);
        res[i] = {std::move(r.sources), std::move(r.stack)};
    });
    write_decomposition(out, res);
    size_t total = 0;
    for (auto& r : res) total += r.sources.size();
    std::printf("decomposed %zu windows, %zu sources (%.2f per window) -> %s\n", res.size(), total,
                res.empty() ? 0.0 : double(total) / res.size(), out.c_str());
    return 0;
}

int cmd_train_single(const RunConfig& cfg, bool micro, const std::string& data, const std::string& decomp,
                     const std::string& out, int fold) {
    require_dir(data, "--data");
    if (out.empty()) throw UsageError("--out is required");
    SubjectData d = load_subject(data, micro ? default_decomp(data, decomp) : "");
    auto h = cfg.hyper(num_classes_of(d.labels));
    std::vector<size_t> test;
    auto idx = train_windows(d, fold, cfg.get_int("eval.folds"), &test);
    uint64_t seed = fold_seed(cfg.get_u64("seed"), subject_of(data), fold);
    std::vector<EpochStat> curve;
    VitModel m = micro ? train_micro(d, idx, h, seed, &curve) : train_macro(d, idx, h, seed, &curve);
    save_vit(out, m);
    save_curve(out, curve);
    std::printf("%s: trained on %zu windows, final loss %.6f, train acc %.4f\n", micro ? "micro" : "macro", idx.size(),
                curve.empty() ? 0.0 : curve.back().loss, curve.empty() ? 0.0 : curve.back().train_acc);
    if (!test.empty())
        std::printf("test accuracy (fold %d): %s\n", fold, fmt(micro ? score_micro(m, d, test) : score_macro(m, d, test)).c_str());
    return 0;
}

int cmd_train_fusion(const RunConfig& cfg, const std::string& data, const std::string& decomp, const std::string& macro_dir,
                     const std::string& micro_dir, const std::string& out, int fold) {
    require_dir(data, "--data");
    require_dir(macro_dir, "--macro");
    require_dir(micro_dir, "--micro");
    if (out.empty()) throw UsageError("--out is required");
    SubjectData d = load_subject(data, default_decomp(data, decomp));
    Models m;
    m.macro = load_vit(macro_dir);
    m.micro = load_vit(micro_dir);
    auto h = cfg.hyper(num_classes_of(d.labels));
    std::vector<size_t> test;
    auto idx = train_windows(d, fold, cfg.get_int("eval.folds"), &test);
    uint64_t seed = fold_seed(cfg.get_u64("seed"), subject_of(data), fold);
    std::vector<EpochStat> curve;
    m.fusion = train_fusion_head(m.macro, m.micro, d, idx, h, seed, &curve);
    save_fusion(out, m.fusion);
    save_curve(out, curve);
    std::printf("fusion: trained on %zu windows, final loss %.6f\n", idx.size(), curve.empty() ? 0.0 : curve.back().loss);
    if (!test.empty()) std::printf("test accuracy (fold %d): %s\n", fold, fmt(score_hydra(m, d, test)).c_str());
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::vector<std::string>& data_dirs, const std::string& models_s,
                 const std::string& out) {
    if (data_dirs.empty()) throw UsageError("--data is required");
    if (out.empty()) throw UsageError("--out is required");
    auto models = parse_models(models_s);
    ModelMask mask{false, false, false};
    for (auto& m : models) (m == "macro" ? mask.macro : m == "micro" ? mask.micro : mask.hydra) = true;
    const bool need_stacks = mask.micro || mask.hydra;
    const int folds = cfg.get_int("eval.folds");

    std::vector<SubjectData> subjects;
    std::vector<uint64_t> ids;
    std::set<uint64_t> seen;
    for (auto& dir : data_dirs) {
        require_dir(dir, "--data");
        subjects.push_back(load_subject(dir, need_stacks ? default_decomp(dir, "") : ""));
        ids.push_back(subject_of(dir));
        if (!seen.insert(ids.back()).second)
            throw ConfigError(dir + ": subject " + std::to_string(ids.back()) + " given twice");
    }
    std::vector<std::vector<FoldSpec>> specs;
    int classes = 0;
    for (auto& s : subjects) {
        specs.push_back(kfold_split(s.labels, s.repetitions, folds));
        classes = std::max(classes, num_classes_of(s.labels));
    }
    auto h = cfg.hyper(classes);
    const uint64_t seed = cfg.get_u64("seed");

    const size_t n_tasks = subjects.size() * folds;
    std::vector<FoldOutcome> outcomes(n_tasks);
    std::vector<std::string> failures(n_tasks);
    std::mutex log_mu;
    parallel_for(n_tasks, cfg.get_int("jobs"), [&](size_t t) {
        size_t s = t / folds;
        int f = int(t % folds);
        try {
            outcomes[t] = run_fold(subjects[s], specs[s][f], h, fold_seed(seed, ids[s], f), mask);
            std::lock_guard<std::mutex> lk(log_mu);
            std::fprintf(stderr, "subject %llu fold %d: macro %.4f micro %.4f hydra %.4f\n", (unsigned long long)ids[s], f,
                         outcomes[t].macro, outcomes[t].micro, outcomes[t].hydra);
        } catch (const std::exception& e) {
            failures[t] = e.what();
        }
    });

    fs::create_directories(out);
    ResultTable table(models, folds);
    std::ostringstream runs, curves;
    runs << runs_header();
    curves << "subject,fold,model,epoch,loss,train_acc\n";
    bool failed = false;
    for (size_t t = 0; t < n_tasks; ++t) {
        size_t s = t / folds;
        int f = int(t % folds);
        if (!failures[t].empty()) {
            std::fprintf(stderr, "error: subject %zu fold %d failed to train: %s\n", s, f, failures[t].c_str());
            failed = true;
            continue;
        }
        auto& o = outcomes[t];
        for (auto& m : models) {
            double acc = m == "macro" ? o.macro : m == "micro" ? o.micro : o.hydra;
            table.set(m, f, int(s), acc);
            runs << s << ',' << f << ',' << m << ',' << fmt(acc) << '\n';
            auto& c = m == "macro" ? o.macro_curve : m == "micro" ? o.micro_curve : o.fusion_curve;
            for (auto& e : c) curves << s << ',' << f << ',' << m << ',' << e.epoch << ',' << fmt(e.loss) << ',' << fmt(e.train_acc) << '\n';
        }
    }
    write_file(fs::path(out) / "runs.csv", runs.str());
    write_file(fs::path(out) / "curves.csv", curves.str());
    write_file(fs::path(out) / "config.txt", cfg.dump());
    if (failed) return 1;
    write_report(out, table);
    std::fputs(table.text_table().c_str(), stdout);
    return 0;
}

Tensor macro_view(const std::string& window_path, const RunConfig& cfg) {
    std::string sib = prep_sibling(window_path);
    if (fs::exists(sib)) return read_tensor(sib);
    // No stored preprocessed view: preprocess this window on its own.
    Tensor raw = read_tensor(window_path);
    PreprocessConfig p = cfg.preprocess();
    p.window_len = int(raw.dims[0]);
    auto w = preprocess_repetition(from_grid(raw), p);
    return w.at(0);
}

int cmd_predict(const RunConfig& cfg, const std::vector<std::string>& windows, const std::string& macro_dir,
                const std::string& micro_dir, const std::string& fusion_dir) {
    if (windows.empty()) throw UsageError("--window is required");
    const bool fused = !fusion_dir.empty();
    if (fused && (macro_dir.empty() || micro_dir.empty())) throw UsageError("--fusion needs --macro and --micro");
    if (!fused && macro_dir.empty() == micro_dir.empty())
        throw UsageError("give exactly one of --macro or --micro, or all three with --fusion");
    for (auto& d : {macro_dir, micro_dir, fusion_dir})
        if (!d.empty()) require_dir(d, "checkpoint");
    for (auto& w : windows)
        if (!fs::exists(w)) throw MissingArtifact(w);

    Models m;
    if (!macro_dir.empty()) m.macro = load_vit(macro_dir);
    if (!micro_dir.empty()) m.micro = load_vit(micro_dir);
    if (fused) m.fusion = load_fusion(fusion_dir);
    auto dp = cfg.decomposition();
    for (auto& w : windows) {
        Tensor raw = read_tensor(w);
        if (raw.rank() != 3 || raw.dims[1] != 8 || raw.dims[2] != 16)
            throw std::runtime_error(w + ": expected a [samples, 8, 16] window, got " + dims_str(raw.dims));
        Eigen::VectorXd probs;
        if (fused) {
            Tensor a = macro_input(macro_view(w, cfg)), b = micro_input(window_stack(raw, dp).stack);
            probs = predict(m.fusion, fusion_features(m.macro, m.micro, a.data.data(), b.data.data())).probs;
        } else if (!macro_dir.empty()) {
            probs = softmax(forward(m.macro, macro_input(macro_view(w, cfg)).data.data()).logits);
        } else {
            probs = softmax(forward(m.micro, micro_input(window_stack(raw, dp).stack).data.data()).logits);
        }
        Eigen::Index k;
        double conf = probs.maxCoeff(&k);
        std::printf("%d,%s\n", int(k), fmt(conf).c_str());
    }
    return 0;
}

int cmd_report(const std::string& results, const std::string& out) {
    require_dir(results, "--results");
    ResultTable t = table_from_runs((fs::path(results) / "runs.csv").string());
    fs::path dst = out.empty() ? fs::path(results) : fs::path(out);
    fs::create_directories(dst);
    write_report(dst, t);
    std::fputs(t.text_table().c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HYDRA-HGR: HD-sEMG gesture recognition from synthetic data to fused ViT classifiers"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "show help for every subcommand");

    std::string out, in, data, decomp, macro_dir, micro_dir, fusion_dir, models = "macro,micro,hydra", results;
    std::vector<std::string> data_dirs, windows;
    int fold = -1;

    std::map<CLI::App*, Common> common;
    auto sub = [&](const char* name, const char* help) {
        CLI::App* s = app.add_subcommand(name, help);
        common[s].add(s);
        return s;
    };

    auto* gen = sub("generate", "synthesize a labeled HD-sEMG gesture dataset");
    common[gen].map(gen, "--classes", "data.classes", "number of gesture classes");
    common[gen].map(gen, "--reps", "data.reps", "repetitions per class");
    common[gen].map(gen, "--windows-per-rep", "data.windows_per_rep", "windows per repetition");
    common[gen].map(gen, "--seed", "seed", "subject seed (fixes the motor-unit pool)");
    common[gen].map(gen, "--snr-db", "data.snr_db", "signal-to-noise ratio in dB");
    gen->add_option("--out", out, "output dataset directory");

    auto* dec = sub("decompose", "decompose every window into motor-unit spike trains and MUAP images");
    dec->add_option("--in", in, "dataset directory (with manifest.csv)");
    dec->add_option("--out", out, "output directory (default IN/decomp)");
    common[dec].map(dec, "--sil", "decomp.sil", "silhouette acceptance threshold (default 0.92)");
    common[dec].map(dec, "--max-sources", "decomp.max_sources", "sources per window (default 7)");
    common[dec].map(dec, "--ext", "decomp.ext", "extension factor T (default 20)");
    common[dec].map(dec, "--jobs", "jobs", "parallel windows");

    CLI::App* tm = sub("train-macro", "train the raw-signal ViT");
    CLI::App* tu = sub("train-micro", "train the MUAP-image ViT");
    CLI::App* tf = sub("train-fusion", "train the fusion head on frozen backbones");
    for (CLI::App* s : {tm, tu, tf}) {
        s->add_option("--data", data, "dataset directory");
        s->add_option("--out", out, "checkpoint directory");
        s->add_option("--fold", fold, "hold out repetition FOLD and report its accuracy; -1 trains on every window");
        common[s].map(s, "--seed", "seed", "training seed");
    }
    for (CLI::App* s : {tu, tf}) s->add_option("--decomp", decomp, "decomposition directory (default DATA/decomp)");
    tf->add_option("--macro", macro_dir, "macro checkpoint directory");
    tf->add_option("--micro", micro_dir, "micro checkpoint directory");

    auto* ev = sub("evaluate", "5-fold leave-one-repetition-out evaluation across subjects");
    ev->add_option("--data", data_dirs, "dataset directories, one per subject (decompositions under DIR/decomp)");
    ev->add_option("--models", models, "comma-separated subset of macro,micro,hydra");
    ev->add_option("--out", out, "results directory");
    common[ev].map(ev, "--seed", "seed", "training seed");
    common[ev].map(ev, "--jobs", "jobs", "parallel folds");

    auto* pr = sub("predict", "classify windows, printing label,confidence per window");
    pr->add_option("--window", windows, "raw window file(s) [512, 8, 16]");
    pr->add_option("--macro", macro_dir, "macro checkpoint directory");
    pr->add_option("--micro", micro_dir, "micro checkpoint directory");
    pr->add_option("--fusion", fusion_dir, "fusion checkpoint directory (needs --macro and --micro)");

    auto* rep = sub("report", "rebuild results.csv, table.txt and boxplot.csv from an evaluate run");
    rep->add_option("--results", results, "evaluate output directory (with runs.csv)");
    rep->add_option("--out", out, "destination (default RESULTS)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        CLI::App* s = app.get_subcommands().front();
        RunConfig cfg = common[s].resolve();
        if (common[s].print_config) {
            std::fputs(cfg.dump().c_str(), stdout);
            return 0;
        }
        if (s == gen) return cmd_generate(cfg, out);
        if (s == dec) return cmd_decompose(cfg, in, out);
        if (s == tm) return cmd_train_single(cfg, false, data, decomp, out, fold);
        if (s == tu) return cmd_train_single(cfg, true, data, decomp, out, fold);
        if (s == tf) return cmd_train_fusion(cfg, data, decomp, macro_dir, micro_dir, out, fold);
        if (s == ev) return cmd_evaluate(cfg, data_dirs, models, out);
        if (s == pr) return cmd_predict(cfg, windows, macro_dir, micro_dir, fusion_dir);
        if (s == rep) return cmd_report(results, out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const MissingArtifact& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
