#pragma once

#include <cstdint>
#include <vector>

namespace hydra {

// xoshiro256** seeded through splitmix64. Distributions are implemented here
// (not via <random>) so streams are identical across standard libraries.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed = 0);

    uint64_t seed() const { return seed_; }
    uint64_t next_u64();
    double uniform();                     // [0, 1), 53-bit
    double uniform(double lo, double hi);
    uint64_t below(uint64_t n);           // unbiased in [0, n)
    double normal();                      // Box-Muller, cached pair
    double normal(double mean, double sd) { return mean + sd * normal(); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

    // Independent child stream for a labelled sub-task (dataset windows, folds, ...).
    SeededRng fork(uint64_t stream) const;

private:
    uint64_t seed_;
    uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

uint64_t splitmix64(uint64_t& state);

}  // namespace hydra
