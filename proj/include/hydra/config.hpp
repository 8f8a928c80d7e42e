#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hydra/pipeline.hpp"

namespace hydra {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Flat key=value run configuration. Every key has a default; unknown keys are rejected.
class RunConfig {
public:
    RunConfig();

    // "paper" (default values) or "desk" (scaled-down model for one CPU core)
    void apply_profile(const std::string& name);
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    // Lines of "key = value"; blank lines and '#' comments ignored. A profile key is applied first
    // unless keep_profile is set (a profile chosen on the command line wins).
    void load_file(const std::string& path, bool keep_profile = false);

    std::string get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;

    std::string dump() const;  // resolved configuration, one "key = value" per line

    GestureDatasetConfig dataset() const;
    PreprocessConfig preprocess() const;
    DecompositionParams decomposition() const;
    Hyper hyper(int num_classes) const;

private:
    struct Entry {
        std::string value;
        std::string type;  // int, u64, real, str
    };
    std::vector<std::string> order_;
    std::map<std::string, Entry> kv_;
    void def(const std::string& key, const std::string& type, const std::string& value);
    void check(const std::string& key, const std::string& value) const;
};

}  // namespace hydra
