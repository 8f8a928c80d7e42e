#include "hydra/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hydra {

namespace {

std::string num(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
    return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

bool parse_int(const std::string& s, long long& out) {
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_u64(const std::string& s, uint64_t& out) {
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_real(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

void RunConfig::def(const std::string& key, const std::string& type, const std::string& value) {
    order_.push_back(key);
    kv_[key] = {value, type};
}

RunConfig::RunConfig() {
    def("profile", "str", "paper");
    def("seed", "u64", "0");
    def("jobs", "int", "1");

    GestureDatasetConfig g;
    def("data.classes", "int", std::to_string(g.num_classes));
    def("data.reps", "int", std::to_string(g.reps_per_class));
    def("data.windows_per_rep", "int", std::to_string(g.windows_per_rep));
    def("data.mus_per_class", "int", std::to_string(g.mus_per_class));
    def("data.rate_hz", "real", num(g.firing_rate_hz));
    def("data.snr_db", "real", num(g.snr_db));

    PreprocessConfig p;
    def("prep.cutoff_hz", "real", num(p.cutoff_hz));
    def("prep.order", "int", std::to_string(p.filter_order));
    def("prep.mu", "real", num(p.mu));
    def("prep.window", "int", std::to_string(p.window_len));
    def("prep.skip", "int", std::to_string(p.skip));

    DecompositionParams d;
    def("decomp.sil", "real", num(d.sil_threshold));
    def("decomp.max_sources", "int", std::to_string(d.max_sources));
    def("decomp.ext", "int", std::to_string(d.extension_factor));
    def("decomp.muap_len", "int", std::to_string(d.muap_len));
    def("decomp.strategy", "str", "multistart");
    def("decomp.subspace_factor", "real", num(d.subspace_factor));
    def("decomp.num_inits", "int", std::to_string(d.num_inits));

    Hyper h = paper_hyper(g.num_classes);
    for (auto [pre, cfg, tp] : {std::tuple{"macro", &h.macro, &h.macro_train}, std::tuple{"micro", &h.micro, &h.micro_train}}) {
        std::string s = pre;
        def(s + ".dim", "int", std::to_string(cfg->embed_dim));
        def(s + ".heads", "int", std::to_string(cfg->num_heads));
        def(s + ".layers", "int", std::to_string(cfg->num_layers));
        def(s + ".lr", "real", num(tp->lr));
        def(s + ".wd", "real", num(tp->weight_decay));
        def(s + ".epochs", "int", std::to_string(tp->epochs));
        def(s + ".batch", "int", std::to_string(tp->batch_size));
    }
    def("fusion.hidden", "int", std::to_string(h.fusion_hidden));
    def("fusion.lr", "real", num(h.fusion_train.lr));
    def("fusion.wd", "real", num(h.fusion_train.weight_decay));
    def("fusion.epochs", "int", std::to_string(h.fusion_train.epochs));
    def("fusion.batch", "int", std::to_string(h.fusion_train.batch_size));
    def("eval.folds", "int", "5");
}

void RunConfig::apply_profile(const std::string& name) {
    Hyper h;
    if (name == "paper") h = paper_hyper(4);
    else if (name == "desk") h = desk_hyper(4);
    else throw ConfigError("profile must be 'paper' or 'desk', got '" + name + "'");
    kv_["profile"].value = name;
    for (auto [pre, cfg, tp] : {std::tuple{"macro", &h.macro, &h.macro_train}, std::tuple{"micro", &h.micro, &h.micro_train}}) {
        std::string s = pre;
        kv_[s + ".dim"].value = std::to_string(cfg->embed_dim);
        kv_[s + ".heads"].value = std::to_string(cfg->num_heads);
        kv_[s + ".layers"].value = std::to_string(cfg->num_layers);
        kv_[s + ".lr"].value = num(tp->lr);
        kv_[s + ".wd"].value = num(tp->weight_decay);
        kv_[s + ".epochs"].value = std::to_string(tp->epochs);
        kv_[s + ".batch"].value = std::to_string(tp->batch_size);
    }
    kv_["fusion.hidden"].value = std::to_string(h.fusion_hidden);
    kv_["fusion.lr"].value = num(h.fusion_train.lr);
    kv_["fusion.wd"].value = num(h.fusion_train.weight_decay);
    kv_["fusion.epochs"].value = std::to_string(h.fusion_train.epochs);
    kv_["fusion.batch"].value = std::to_string(h.fusion_train.batch_size);
}

bool RunConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

void RunConfig::check(const std::string& key, const std::string& v) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    const std::string& type = it->second.type;
    auto bad = [&](const std::string& why) { throw ConfigError(key + " = '" + v + "': " + why); };
    long long i = 0;
    double r = 0;
    uint64_t u = 0;
    if (type == "int" && !parse_int(v, i)) bad("expected an integer");
    if (type == "real" && !parse_real(v, r)) bad("expected a finite number");
    if (type == "u64" && !parse_u64(v, u)) bad("expected a non-negative integer");

    auto positive = {"jobs", "data.classes", "data.reps", "data.windows_per_rep", "data.mus_per_class", "prep.order",
                     "prep.window", "prep.skip", "decomp.max_sources", "decomp.ext", "decomp.muap_len", "decomp.num_inits",
                     "macro.dim", "macro.heads", "macro.batch", "micro.dim", "micro.heads", "micro.batch", "fusion.hidden",
                     "fusion.batch"};
    for (auto k : positive)
        if (key == k && i < 1) bad("must be >= 1");
    for (auto k : {"macro.layers", "micro.layers", "macro.epochs", "micro.epochs", "fusion.epochs"})
        if (key == k && i < 0) bad("must be >= 0");
    for (auto k : {"macro.lr", "micro.lr", "fusion.lr", "macro.wd", "micro.wd", "fusion.wd", "decomp.subspace_factor"})
        if (key == k && r < 0) bad("must be >= 0");
    for (auto k : {"data.rate_hz", "prep.cutoff_hz", "prep.mu"})
        if (key == k && !(r > 0)) bad("must be > 0");
    if (key == "decomp.sil" && (r < -1 || r > 1)) bad("silhouette threshold must lie in [-1, 1]");
    if (key == "decomp.max_sources" && i > 7) bad("at most 7 sources fit the MUAP image stack");
    if (key == "eval.folds" && i < 2) bad("need at least 2 folds");
    if (key == "decomp.strategy" && v != "multistart" && v != "sequential") bad("expected multistart or sequential");
    if (key == "profile" && v != "paper" && v != "desk") bad("expected paper or desk");
}

void RunConfig::set(const std::string& key, const std::string& value) {
    check(key, value);
    if (key == "profile") apply_profile(value);
    else kv_[key].value = value;
}

void RunConfig::load_file(const std::string& path, bool keep_profile) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::vector<std::pair<std::string, std::string>> items;
    std::string line;
    int n = 0;
    while (std::getline(f, line)) {
        ++n;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(n) + ": expected key = value");
        items.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    for (auto& [k, v] : items)
        if (k == "profile" && !keep_profile) set(k, v);
    for (auto& [k, v] : items) {
        if (k == "profile") continue;
        try {
            set(k, v);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }
}

std::string RunConfig::get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second.value;
}

int RunConfig::get_int(const std::string& key) const { return std::stoi(get(key)); }
double RunConfig::get_double(const std::string& key) const { return std::stod(get(key)); }
uint64_t RunConfig::get_u64(const std::string& key) const { return std::stoull(get(key)); }

std::string RunConfig::dump() const {
    std::ostringstream o;
    for (auto& k : order_) o << k << " = " << kv_.at(k).value << '\n';
    return o.str();
}

GestureDatasetConfig RunConfig::dataset() const {
    GestureDatasetConfig g;
    g.num_classes = get_int("data.classes");
    g.reps_per_class = get_int("data.reps");
    g.windows_per_rep = get_int("data.windows_per_rep");
    g.mus_per_class = get_int("data.mus_per_class");
    g.firing_rate_hz = get_double("data.rate_hz");
    g.snr_db = get_double("data.snr_db");
    g.window_len = get_int("prep.window");
    g.skip = get_int("prep.skip");
    g.seed = get_u64("seed");
    return g;
}

PreprocessConfig RunConfig::preprocess() const {
    PreprocessConfig p;
    p.cutoff_hz = get_double("prep.cutoff_hz");
    p.filter_order = get_int("prep.order");
    p.mu = get_double("prep.mu");
    p.window_len = get_int("prep.window");
    p.skip = get_int("prep.skip");
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return p;
}

DecompositionParams RunConfig::decomposition() const {
    DecompositionParams d;
    d.sil_threshold = get_double("decomp.sil");
    d.max_sources = get_int("decomp.max_sources");
    d.extension_factor = get_int("decomp.ext");
    d.muap_len = get_int("decomp.muap_len");
    d.strategy = get("decomp.strategy") == "sequential" ? SearchStrategy::Sequential : SearchStrategy::MultiStart;
    d.subspace_factor = get_double("decomp.subspace_factor");
    d.num_inits = get_int("decomp.num_inits");
    return d;
}

Hyper RunConfig::hyper(int num_classes) const {
    Hyper h = paper_hyper(num_classes);
    for (auto [pre, cfg, tp] : {std::tuple{"macro", &h.macro, &h.macro_train}, std::tuple{"micro", &h.micro, &h.micro_train}}) {
        std::string s = pre;
        cfg->embed_dim = get_int(s + ".dim");
        cfg->num_heads = get_int(s + ".heads");
        cfg->num_layers = get_int(s + ".layers");
        cfg->mlp_hidden = 0;
        tp->lr = get_double(s + ".lr");
        tp->weight_decay = get_double(s + ".wd");
        tp->epochs = get_int(s + ".epochs");
        tp->batch_size = get_int(s + ".batch");
        try {
            cfg->validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(s + ": " + e.what());
        }
    }
    h.fusion_hidden = get_int("fusion.hidden");
    h.fusion_train.lr = get_double("fusion.lr");
    h.fusion_train.weight_decay = get_double("fusion.wd");
    h.fusion_train.epochs = get_int("fusion.epochs");
    h.fusion_train.batch_size = get_int("fusion.batch");
    return h;
}

}  // namespace hydra
